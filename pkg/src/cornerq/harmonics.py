"""Normalized zonal harmonics on the three-sphere and series machinery.

The degree-k zonal harmonic used throughout is

    f_k(phi) = sin((k + 1) phi) / (pi sin(phi)) = U_k(cos phi) / pi,

with U_k the Chebyshev polynomial of the second kind.  The polynomial form
is the primary evaluation path: it is finite at the poles and can be
differentiated exactly through the recurrence, which matters because the
boundary operators need up to four phi-derivatives.

These f_k are unit-norm in L^2 of the half-sphere; same-parity pairs are
orthonormal there, while opposite-parity pairs have the closed-form pairing
implemented by :func:`inner_closed`.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import SIGMA_AREA, gauss_legendre_on

PI = math.pi
MAX_DERIV = 4

_BINOM = [[1], [1, 1], [1, 2, 1], [1, 3, 3, 1], [1, 4, 6, 4, 1]]


def eigenvalue(k):
    """Spherical-Laplacian eigenvalue of the degree-k harmonics on S^3."""
    return -k * (k + 2)


def multiplicity(k):
    """Dimension of the full degree-k eigenspace (metadata only)."""
    return (k + 1) ** 2


def _cheb_u_with_derivs(k, x, m):
    """U_k(x) and its first m derivatives, by differentiating the recurrence.

    Returns an array of shape (m + 1,) + x.shape.
    """
    x = np.asarray(x, dtype=float)
    prev = np.zeros((m + 1,) + x.shape)
    cur = np.zeros_like(prev)
    prev[0] = 1.0                      # U_0
    if k == 0:
        return prev
    cur[0] = 2.0 * x                   # U_1
    if m >= 1:
        cur[1] = 2.0
    for _ in range(k - 1):
        nxt = np.empty_like(cur)
        nxt[0] = 2.0 * x * cur[0] - prev[0]
        for r in range(1, m + 1):
            nxt[r] = 2.0 * x * cur[r] + 2.0 * r * cur[r - 1] - prev[r]
        prev, cur = cur, nxt
    return cur


def _compose_derivs(F, g):
    """Derivatives of F(g(phi)) up to order 4 from those of F and g.

    ``F[r]`` holds F^(r) evaluated at g(phi); ``g[r]`` holds g^(r+1)(phi).
    """
    m = len(F) - 1
    out = [F[0]]
    if m >= 1:
        out.append(F[1] * g[0])
    if m >= 2:
        out.append(F[2] * g[0] ** 2 + F[1] * g[1])
    if m >= 3:
        out.append(F[3] * g[0] ** 3 + 3.0 * F[2] * g[0] * g[1] + F[1] * g[2])
    if m >= 4:
        out.append(F[4] * g[0] ** 4 + 6.0 * F[3] * g[0] ** 2 * g[1]
                   + F[2] * (3.0 * g[1] ** 2 + 4.0 * g[0] * g[2]) + F[1] * g[3])
    return np.stack(out)


def zonal(k, phi):
    """Evaluate f_k(phi); vectorized in phi, continuous at the poles."""
    if k < 0:
        raise ValueError("degree must be nonnegative")
    u = _cheb_u_with_derivs(int(k), np.cos(phi), 0)[0]
    return u / PI


def zonal_deriv(k, phi, m):
    """m-th phi-derivative of f_k, exact to rounding (m <= 4)."""
    if not 0 <= m <= MAX_DERIV:
        raise ValueError("derivative order must be between 0 and 4")
    phi = np.asarray(phi, dtype=float)
    F = _cheb_u_with_derivs(int(k), np.cos(phi), m)
    s, c = np.sin(phi), np.cos(phi)
    g = [-s, -c, s, c]
    return _compose_derivs(F, g)[m] / PI


def _csc_derivs(phi, m):
    """csc(phi) and its derivatives up to order m (m <= 4)."""
    c = 1.0 / np.sin(phi)
    t = np.cos(phi) / np.sin(phi)
    out = [c]
    if m >= 1:
        out.append(-c * t)
    if m >= 2:
        out.append(c * t ** 2 + c ** 3)
    if m >= 3:
        out.append(-c * t ** 3 - 5.0 * c ** 3 * t)
    if m >= 4:
        out.append(c * t ** 4 + 18.0 * c ** 3 * t ** 2 + 5.0 * c ** 5)
    return out


def zonal_deriv_matrix(ks, phi, m=0):
    """d^m f_k(phi) for every k in ``ks``; shape (len(ks), len(phi)).

    Quotient-form Leibniz evaluation,

        d^m f_k = (1/pi) sum_i C(m, i) (k+1)^i sin((k+1) phi + i pi/2) csc^(m-i),

    vectorized over both axes.  Requires sin(phi) bounded away from zero
    (|sin phi| > 1e-8); the m = 0 case patches in the exact pole limit.
    """
    if not 0 <= m <= MAX_DERIV:
        raise ValueError("derivative order must be between 0 and 4")
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    s = np.sin(phi)
    safe = np.abs(s) > 1e-8
    if m > 0 and not np.all(safe):
        raise ValueError("quotient-form derivatives need phi away from the poles")
    out = np.zeros((ks.size, phi.size))
    if np.any(safe):
        ph = phi[safe]
        csc = _csc_derivs(ph, m)
        arg = np.multiply.outer(ks + 1.0, ph)
        acc = np.zeros_like(arg)
        for i in range(m + 1):
            trig = np.sin(arg + 0.5 * PI * i)
            acc += _BINOM[m][i] * ((ks + 1.0) ** i)[:, None] * trig * csc[m - i]
        out[:, safe] = acc / PI
    if np.any(~safe):
        # f_k at a pole: sign(cos phi)^k (k + 1) / pi
        kk = ks.astype(int)
        base = np.repeat(((ks + 1.0) / PI)[:, None], int(np.count_nonzero(~safe)), axis=1)
        neg = np.cos(phi[~safe]) < 0.0
        parity = np.where(kk[:, None] % 2 == 1, -1.0, 1.0)
        out[:, ~safe] = np.where(neg[None, :], base * parity, base)
    return out


def zonal_equator(k):
    """f_k(pi/2), exact: 0 for odd k, (-1)^j / pi for k = 2j."""
    if k % 2 == 1:
        return 0.0
    return (-1.0) ** (k // 2) / PI


def zonal_prime_equator(k):
    """f_k'(pi/2), exact: 0 for even k, (2j + 2)(-1)^(j+1) / pi for k = 2j + 1.

    Exactness matters: the flat-face images of even-degree terms must vanish
    identically, not merely to rounding.
    """
    if k % 2 == 0:
        return 0.0
    j = (k - 1) // 2
    return (2 * j + 2) * (-1.0) ** (j + 1) / PI


def inner_closed(a, b):
    """Closed-form L^2 half-sphere pairing of an odd- and an even-degree harmonic.

    For indices 2k + 1 and 2j,

        <f_{2k+1}, f_{2j}> = 8 (-1)^(j+k) (k + 1) / (pi (2k + 2j + 3)(2k - 2j + 1)).

    Same-parity pairs are rejected; they are delta_{jk} by orthonormality.
    """
    if (a % 2) == (b % 2):
        raise ValueError("closed form applies to opposite-parity pairs only")
    odd, even = (a, b) if a % 2 == 1 else (b, a)
    k = (odd - 1) // 2
    j = even // 2
    return 8.0 * (-1.0) ** (j + k) * (k + 1) / (PI * (2 * k + 2 * j + 3) * (2 * k - 2 * j + 1))


def inner_quad(a, b, n_nodes=192):
    """Half-sphere pairing 4 pi * int_0^{pi/2} f_a f_b sin^2(phi) dphi by quadrature."""
    phi, w = gauss_legendre_on(0.0, 0.5 * PI, n_nodes)
    vals = zonal(a, phi) * zonal(b, phi) * np.sin(phi) ** 2
    return SIGMA_AREA * float(np.dot(vals, w))


def zonal_partial_sum(n, phi, method="closed"):
    """S_n(phi) = pi * sum_{k<=n} (-1)^k f_{2k}(phi).

    The closed form comes from the Lagrange trigonometric identity and
    collapses to (-1)^n U_n(cos 2 phi), finite at phi in {0, pi/2}; the
    direct path sums the harmonics term by term.
    """
    phi = np.asarray(phi, dtype=float)
    if method == "closed":
        return (-1.0) ** n * _cheb_u_with_derivs(int(n), np.cos(2.0 * phi), 0)[0]
    if method == "direct":
        total = np.zeros_like(phi, dtype=float)
        for k in range(n + 1):
            total += (-1.0) ** k * zonal(2 * k, phi)
        return PI * total
    raise ValueError(f"unknown method {method!r}")


def zonal_partial_sum_deriv(n, phi, m):
    """m-th phi-derivative of S_n via the Chebyshev closed form (m <= 4)."""
    if not 0 <= m <= MAX_DERIV:
        raise ValueError("derivative order must be between 0 and 4")
    phi = np.asarray(phi, dtype=float)
    F = _cheb_u_with_derivs(int(n), np.cos(2.0 * phi), m)
    s2, c2 = np.sin(2.0 * phi), np.cos(2.0 * phi)
    g = [-2.0 * s2, -4.0 * c2, 8.0 * s2, 16.0 * c2]
    return (-1.0) ** n * _compose_derivs(F, g)[m]


def _check_decay(b):
    b = np.abs(np.asarray(b, dtype=float))
    if b.size < 8 or not np.any(b > 0.0):
        return
    head = b[: max(1, b.size // 10)].mean()
    tail = b[-max(1, b.size // 10):].mean()
    if tail > head * 1.000001 + 1e-300:
        raise ValueError("coefficient sequence does not decay; "
                         "summation by parts needs summable differences")


def sum_by_parts(b, m, phi, check_decay=True):
    """Evaluate sum_{j=1}^{N} (-1)^j b_j d^m/dphi^m f_{2j}(phi) by Abel transform.

    Rewrites the sum against the partial sums A_j = d^m S_j - [m = 0] of the
    alternating zonal series, so the transformed terms carry the differences
    b_j - b_{j+1}; for a decaying sequence this converges absolutely where
    the direct series converges only conditionally, and it is an exact
    rearrangement of the truncated sum.  ``b`` holds b_1 ... b_N.
    """
    if not 0 <= m <= MAX_DERIV:
        raise ValueError("derivative order must be between 0 and 4")
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.size == 0:
        raise ValueError("need a one-dimensional, nonempty coefficient array")
    if check_decay:
        _check_decay(b)
    phi_in = np.asarray(phi, dtype=float)
    phi = np.atleast_1d(phi_in)

    x = np.cos(2.0 * phi)
    s2, c2 = np.sin(2.0 * phi), np.cos(2.0 * phi)
    g = [-2.0 * s2, -4.0 * c2, 8.0 * s2, 16.0 * c2]

    n_terms = b.size
    prev = np.zeros((m + 1,) + phi.shape)
    cur = np.zeros_like(prev)
    prev[0] = 1.0
    cur[0] = 2.0 * x
    if m >= 1:
        cur[1] = 2.0
    acc = np.zeros_like(phi, dtype=float)
    sign = -1.0  # (-1)^j at j = 1
    for j in range(1, n_terms + 1):
        a_j = sign * _compose_derivs(cur, g)[m]
        if m == 0:
            a_j = a_j - 1.0
        diff = b[j - 1] - b[j] if j < n_terms else b[j - 1]
        acc = acc + a_j * diff
        if j < n_terms:
            nxt = np.empty_like(cur)
            nxt[0] = 2.0 * x * cur[0] - prev[0]
            for r in range(1, m + 1):
                nxt[r] = 2.0 * x * cur[r] + 2.0 * r * cur[r - 1] - prev[r]
            prev, cur = cur, nxt
            sign = -sign
    result = acc / PI
    return float(result[0]) if phi_in.ndim == 0 else result


def alternating_zonal_sum(b, m, phi, block=4096):
    """Direct evaluation of sum_j (-1)^j b_j d^m f_{2j}(phi); oracle for sum_by_parts.

    Processes the degrees in blocks through the vectorized quotient form, so
    reference sums with millions of terms stay affordable.
    """
    b = np.asarray(b, dtype=float)
    phi_in = np.asarray(phi, dtype=float)
    phi = np.atleast_1d(phi_in)
    total = np.zeros_like(phi, dtype=float)
    for start in range(0, b.size, block):
        js = np.arange(start + 1, min(start + block, b.size) + 1)
        mat = zonal_deriv_matrix(2 * js, phi, m)
        signs = np.where(js % 2 == 1, -1.0, 1.0)
        total += (signs * b[js - 1]) @ mat
    return float(total[0]) if phi_in.ndim == 0 else total
