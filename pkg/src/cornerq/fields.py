"""Scalar fields on the half-ball and the differential/boundary operators.

Two evaluation regimes coexist.  Fields assembled from the zonal biharmonic
basis carry exact operator images (their boundary behavior is closed-form),
while composite fields produced by conformal transformations are black
boxes and go through finite differences.  The operator entry points
``apply_*`` dispatch between the two; both paths share one calling
convention so verification code can compare them directly.

Operator conventions on the flat model:

    mu_M = -d/drho at rho = 1          mu_N = -(1/rho) d/dphi at phi = pi/2
    nu_M = -d/dphi at the corner       nu_N = -d/drho at the corner
    P3 on M:  (1/2) mu_M Δf + Δ_M(mu_M f) - Δ_M f
    P3 on N:  (1/2) mu_N Δf + Δ_N(mu_N f)
    P2 on Sigma:  -(pi/2) Δ_{S^2} f + nu_M mu_M f + nu_N mu_N f - nu_M f
    P4 interior:  Δ^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import harmonics
from .biharmonic import BasisTerm, RadialPoly
from .geometry import Points

PI = math.pi
HALF_PI = 0.5 * math.pi


# ---------------------------------------------------------------------------
# Field hierarchy
# ---------------------------------------------------------------------------

class Field:
    """Evaluable scalar function on the half-ball with an exactness tag."""

    kind = "closed-form"
    depends_alpha = True
    depends_theta = True

    def eval(self, points):
        raise NotImplementedError

    def __call__(self, points):
        return self.eval(points)

    def __add__(self, other):
        return LinearCombination([(1.0, self), (1.0, as_field(other))])

    def __radd__(self, other):
        return self.__add__(other)

    def __mul__(self, factor):
        return LinearCombination([(float(factor), self)])

    __rmul__ = __mul__

    def __neg__(self):
        return LinearCombination([(-1.0, self)])

    def __sub__(self, other):
        return LinearCombination([(1.0, self), (-1.0, as_field(other))])


class ConstField(Field):
    kind = "series"
    depends_alpha = False
    depends_theta = False

    def __init__(self, value):
        self.value = float(value)

    def eval(self, points):
        return np.full(len(points), self.value)


def as_field(obj):
    if isinstance(obj, Field):
        return obj
    if np.isscalar(obj):
        return ConstField(float(obj))
    raise TypeError(f"cannot interpret {obj!r} as a field")


class CallableField(Field):
    """Closed-form field given by a vectorized callable on Points."""

    def __init__(self, fn, depends_alpha=True, depends_theta=True):
        self.fn = fn
        self.depends_alpha = depends_alpha
        self.depends_theta = depends_theta

    def eval(self, points):
        return np.asarray(self.fn(points), dtype=float)


class ZonalPowerField(Field):
    """Finite sum  const + sum_i c_i * rho^{p_i} * f_{k_i}(phi).

    This covers the biharmonic basis, every interior Laplacian image of it,
    and all solver output; the boundary operators act on it in closed form.
    """

    kind = "series"
    depends_alpha = False
    depends_theta = False

    def __init__(self, entries, const=0.0, terms=None, force_numeric=False):
        entries = [(int(k), int(p), float(c)) for k, p, c in entries if c != 0.0]
        self.ks = np.array([e[0] for e in entries], dtype=int)
        self.ps = np.array([e[1] for e in entries], dtype=int)
        self.cs = np.array([e[2] for e in entries], dtype=float)
        self.const = float(const)
        self.terms = terms            # optional provenance: [(BasisTerm, coef)]
        self.force_numeric = bool(force_numeric)

    @classmethod
    def from_basis(cls, terms, const=0.0, force_numeric=False):
        """Build from [(BasisTerm, coef), ...] keeping the term list attached."""
        entries = []
        for term, coef in terms:
            for p, c in term.radial_poly().coeffs.items():
                entries.append((term.k, p, c * coef))
        return cls(entries, const=const, terms=list(terms), force_numeric=force_numeric)

    def eval(self, points, chunk=512):
        rho, phi = points.rho, points.phi
        out = np.full(rho.shape, self.const, dtype=float)
        if self.ks.size == 0:
            return out
        for start in range(0, rho.size, chunk):
            sl = slice(start, min(start + chunk, rho.size))
            zon = harmonics.zonal_deriv_matrix(self.ks, phi[sl], 0)
            rad = np.power(rho[sl][None, :], self.ps[:, None])
            out[sl] += np.einsum("t,tp,tp->p", self.cs, rad, zon)
        return out

    def deriv(self, points, m_rho=0, m_phi=0):
        """Term-wise mixed partial; intended for modest point counts."""
        rho, phi = points.rho, points.phi
        out = np.zeros(rho.shape, dtype=float)
        if m_rho == 0 and m_phi == 0:
            return self.eval(points)
        for k, p, c in zip(self.ks, self.ps, self.cs):
            fall = 1.0
            q = p
            for _ in range(m_rho):
                fall *= q
                q -= 1
            if fall == 0.0:
                continue
            out += c * fall * np.power(rho, q) * harmonics.zonal_deriv(k, phi, m_phi)
        return out

    # -- closed-form operator images ---------------------------------------

    def laplacian_field(self):
        """Interior Laplacian: Δ(rho^p f_k) = (p(p+2) - k(k+2)) rho^{p-2} f_k."""
        entries = []
        for k, p, c in zip(self.ks, self.ps, self.cs):
            factor = p * (p + 2) - k * (k + 2)
            if factor != 0:
                entries.append((k, p - 2, c * factor))
        return ZonalPowerField(entries)

    def bilaplacian_field(self):
        return self.laplacian_field().laplacian_field()

    def boundary_value_coeffs(self):
        """Zonal coefficients of the restriction to the round face."""
        coeffs = {}
        for k, p, c in zip(self.ks, self.ps, self.cs):
            coeffs[k] = coeffs.get(k, 0.0) + c
        if self.const:
            coeffs[0] = coeffs.get(0, 0.0) + self.const * PI
        return coeffs

    def mu_m_coeffs(self):
        """Zonal coefficients of the inward normal derivative on the round face."""
        coeffs = {}
        for k, p, c in zip(self.ks, self.ps, self.cs):
            if p != 0:
                coeffs[k] = coeffs.get(k, 0.0) - c * p
        return coeffs

    def p3m_coeffs(self):
        """Zonal coefficients of the third-order image on the round face."""
        coeffs = {}
        for k, p, c in zip(self.ks, self.ps, self.cs):
            lam = -k * (k + 2)
            lap = c * (p * (p + 2) + lam)
            val = -0.5 * lap * (p - 2)      # (1/2) mu(Δf): -(1/2) d/drho of rho^{p-2} piece
            val += lam * (-c * p)           # Δ_tan(mu f)
            val -= lam * c                  # -Δ_tan f
            if val != 0.0:
                coeffs[k] = coeffs.get(k, 0.0) + val
        return coeffs

    def mu_n_poly(self):
        """Flat-face inward normal derivative as a radial polynomial."""
        coeffs = {}
        for k, p, c in zip(self.ks, self.ps, self.cs):
            fp = harmonics.zonal_prime_equator(k)
            if fp != 0.0:
                coeffs[p - 1] = coeffs.get(p - 1, 0.0) - c * fp
        return RadialPoly(coeffs)

    def p3n_poly(self):
        """Flat-face third-order image as a radial polynomial."""
        coeffs = {}
        for k, p, c in zip(self.ks, self.ps, self.cs):
            fp = harmonics.zonal_prime_equator(k)
            if fp == 0.0:
                continue
            lam = -k * (k + 2)
            lap = c * (p * (p + 2) + lam)
            # (1/2) mu_N Δf contributes -(1/2) lap * fp at power p - 3
            coeffs[p - 3] = coeffs.get(p - 3, 0.0) - 0.5 * lap * fp
            # Δ_3(mu_N f): mu_N f = -c fp rho^{p-1}; radial 3d Laplacian of rho^q is q(q+1) rho^{q-2}
            q = p - 1
            coeffs[p - 3] = coeffs.get(p - 3, 0.0) - c * fp * q * (q + 1)
        return RadialPoly(coeffs)

    def p2_corner(self):
        """Corner operator value; a single number since the field is zonal."""
        val = 0.0
        mu_m = self.mu_m_coeffs()
        for k, d in mu_m.items():
            val -= d * harmonics.zonal_prime_equator(k)        # nu_M mu_M
        val -= self.mu_n_poly().derivative(1)(1.0)              # nu_N mu_N
        for k, b in self.boundary_value_coeffs().items():
            val += b * harmonics.zonal_prime_equator(k)         # -nu_M f
        return float(val)

    def corner_value(self):
        out = self.const
        for k, c in zip(self.ks, self.cs):
            out += c * harmonics.zonal_equator(int(k))
        return float(out)


class SeriesField(ZonalPowerField):
    """Zonal series over the biharmonic basis terms."""

    def __init__(self, terms, const=0.0, force_numeric=False):
        entries = []
        for term, coef in terms:
            for p, c in term.radial_poly().coeffs.items():
                entries.append((term.k, p, c * coef))
        super().__init__(entries, const=const, terms=list(terms), force_numeric=force_numeric)

    def eval(self, points, chunk=512):
        # Family evaluation in factored form: keeps family 2 exactly zero on
        # the unit sphere, which the solver contract requires.
        rho, phi = points.rho, points.phi
        out = np.full(rho.shape, self.const, dtype=float)
        ks = np.array([t.k for t, _ in self.terms], dtype=int)
        fams = np.array([t.family for t, _ in self.terms], dtype=int)
        coefs = np.array([c for _, c in self.terms], dtype=float)
        for start in range(0, rho.size, chunk):
            sl = slice(start, min(start + chunk, rho.size))
            r = rho[sl][None, :]
            zon = harmonics.zonal_deriv_matrix(ks, phi[sl], 0)
            base = np.power(r, ks[:, None])
            rad = np.where((fams == 1)[:, None],
                           (ks[:, None] + 2 - ks[:, None] * r ** 2) * base,
                           (r ** 2 - 1.0) * base)
            out[sl] += np.einsum("t,tp,tp->p", coefs, rad, zon)
        return out


class LinearCombination(Field):
    """Weighted sum of fields; operators distribute across the parts."""

    def __init__(self, parts):
        flat = []
        for w, f in parts:
            if isinstance(f, LinearCombination):
                flat.extend((w * w2, f2) for w2, f2 in f.parts)
            else:
                flat.append((float(w), f))
        self.parts = flat

    @property
    def kind(self):
        kinds = {f.kind for _, f in self.parts}
        return "series" if kinds == {"series"} else "sum"

    @property
    def depends_alpha(self):
        return any(f.depends_alpha for _, f in self.parts)

    @property
    def depends_theta(self):
        return any(f.depends_theta for _, f in self.parts)

    def eval(self, points):
        out = np.zeros(len(points), dtype=float)
        for w, f in self.parts:
            out += w * f.eval(points)
        return out


class CompositeField(Field):
    """Base field precomposed with a conformal transformation.

    Evaluates base(T(p)) + logjac_weight * log|J_T|(p); the log-Jacobian is
    closed-form (no nested differencing), so only the outer operators ever
    see finite differences.  Angular dependence is probed numerically at
    construction: transforms that commute with the symmetries of the base
    (the inversion, boosts along z) keep the composite zonal, which the
    finite-difference operators exploit.
    """

    kind = "composite"

    def __init__(self, base, transform, logjac_weight=0.0):
        self.base = base
        self.transform = transform
        self.logjac_weight = float(logjac_weight)
        self.depends_alpha, self.depends_theta = self._probe_dependence()

    def _probe_dependence(self):
        rng = np.random.default_rng(1234)
        rho = 0.2 + 0.6 * rng.random(4)
        phi = 0.2 + 1.2 * rng.random(4)
        base_angles = 0.4 + 2.0 * rng.random(4)

        def varies(axis):
            deltas = np.linspace(0.0, 2.0, 5)
            ref = None
            for d in deltas:
                alpha = base_angles + (d if axis == "alpha" else 0.0)
                theta = base_angles + (d if axis == "theta" else 0.0)
                vals = self.eval_raw(Points.from_spherical(rho, phi, alpha % (0.9 * PI) + 0.1,
                                                           theta % (2 * PI)))
                if ref is None:
                    ref = vals
                elif np.max(np.abs(vals - ref)) > 1e-11:
                    return True
            return False

        dep_alpha = (self.base.depends_alpha or self.base.depends_theta)
        dep_theta = dep_alpha
        if not dep_alpha:
            dep_alpha = varies("alpha")
            dep_theta = varies("theta")
        return dep_alpha, dep_theta

    def eval_raw(self, points):
        mapped = self.transform.apply_points(points)
        vals = self.base.eval(mapped)
        if self.logjac_weight != 0.0:
            vals = vals + self.logjac_weight * self.transform.log_jacobian(points)
        return vals

    def eval(self, points):
        return self.eval_raw(points)


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FDScheme:
    """Step sizes and stencil policy for black-box operator application.

    ``h`` drives the first- through third-order boundary operators; the
    squared Laplacian uses the coarser ``h4`` because the 1/h^4 rounding
    amplification dominates below that.
    """

    h: float = 1e-3
    h4: float = 1e-2
    richardson: bool = True
    corner_delta: float = 0.05   # exclusion band for third-order operators
    n_nodes: int = 6


# Step sizes tuned against the ~1e-13 evaluation noise floor of composite
# fields: third-order compositions amplify pointwise noise by 1/h^3, which
# pushes the optimum step well above the clean-field default.
COMPOSITE_SCHEME = FDScheme(h=3e-3, h4=5e-3)


def scheme_for(field, scheme=None):
    """Default stencil parameters appropriate to the field's noise floor."""
    if scheme is not None:
        return scheme
    return FDScheme() if _analytic_capable(field) else COMPOSITE_SCHEME


def fd_weights(x0, nodes, m):
    """Finite-difference weights on arbitrary nodes (Fornberg's recursion).

    Returns an array of shape (m + 1, len(nodes)): weights for derivative
    orders 0..m at x0.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    w = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = nodes[0] - x0
    w[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[k, i] = c1 * (k * w[k - 1, i - 1] - c5 * w[k, i - 1]) / c2
                w[0, i] = -c1 * c5 * w[0, i - 1] / c2
            for k in range(mn, 0, -1):
                w[k, j] = (c4 * w[k, j] - k * w[k - 1, j]) / c3
            w[0, j] = c4 * w[0, j] / c3
        c1 = c2
    return w


def _ladder_starts(x0, h, n, lo=None, hi=None):
    """Integer start offsets of n-node ladders around each x0.

    The ladder is x0 + (start + arange(n)) * h with start an integer; the
    window slides in whole steps to respect the bounds, so the relative
    stencil geometry takes only a handful of distinct values and the
    Fornberg weights can be shared across points.
    """
    base = -(n // 2)
    start = np.full(x0.shape, base, dtype=float)
    if hi is not None:
        smax = np.floor((hi - x0) / h + 1e-9) - (n - 1)
        start = np.minimum(start, smax)
    if lo is not None:
        smin = np.ceil((lo - x0) / h - 1e-9)
        start = np.maximum(start, smin)
    return start.astype(int)


class _SphFn:
    """Scalar function of spherical coordinates backed by a field."""

    def __init__(self, field):
        self.field = field

    def __call__(self, rho, phi, alpha, theta):
        shape = rho.shape
        pts = Points.from_spherical(rho.ravel(), phi.ravel(), alpha.ravel(), theta.ravel())
        return self.field.eval(pts).reshape(shape)


_AXIS_BOUNDS = {"rho": (1e-9, 1.0), "phi": (0.0, HALF_PI), "alpha": (None, None), "theta": (None, None)}


def _axis_derivs(fn, coords, axis, orders, scheme):
    """Derivatives of ``fn`` along one coordinate axis at batched points.

    ``coords`` is a dict of coordinate arrays (all same shape).  Returns a
    dict order -> array.  Ladders slide one-sided in whole steps near the
    domain boundary of the axis, so only a few distinct stencil geometries
    occur and each needs one weight computation.
    """
    lo, hi = _AXIS_BOUNDS[axis]
    x0 = coords[axis]
    n = scheme.n_nodes
    h = scheme.h
    starts = _ladder_starts(x0, h, n, lo=lo, hi=hi)
    nodes = x0[..., None] + (starts[..., None] + np.arange(n)) * h
    tiled = {k: np.repeat(v[..., None], n, axis=-1) for k, v in coords.items()}
    tiled[axis] = nodes
    vals = fn(tiled["rho"], tiled["phi"], tiled["alpha"], tiled["theta"])
    m = max(orders)
    flat_starts = starts.reshape(-1)
    flat_vals = vals.reshape(-1, n)
    ws = np.empty((flat_starts.size, m + 1, n))
    for s in np.unique(flat_starts):
        mask = flat_starts == s
        ws[mask] = fd_weights(0.0, (s + np.arange(n)) * h, m)
    out = {}
    for order in orders:
        out[order] = np.einsum("pn,pn->p", ws[:, order, :], flat_vals).reshape(x0.shape)
    return out


def _laplacian4_fd(field, coords, scheme):
    """Interior Laplacian in spherical coordinates by finite differences."""
    fn = _SphFn(field)
    rho, phi = coords["rho"], coords["phi"]
    d_rho = _axis_derivs(fn, coords, "rho", (1, 2), scheme)
    d_phi = _axis_derivs(fn, coords, "phi", (1, 2), scheme)
    lap_s3 = d_phi[2] + 2.0 / np.tan(phi) * d_phi[1]
    if field.depends_alpha:
        d_alpha = _axis_derivs(fn, coords, "alpha", (1, 2), scheme)
        lap_s2 = d_alpha[2] + d_alpha[1] / np.tan(coords["alpha"])
        if field.depends_theta:
            d_theta = _axis_derivs(fn, coords, "theta", (2,), scheme)
            lap_s2 = lap_s2 + d_theta[2] / np.sin(coords["alpha"]) ** 2
        lap_s3 = lap_s3 + lap_s2 / np.sin(phi) ** 2
    return d_rho[2] + 3.0 / rho * d_rho[1] + lap_s3 / rho ** 2


def _coords_from_points(points):
    return {"rho": points.rho.copy(), "phi": points.phi.copy(),
            "alpha": points.alpha.copy(), "theta": points.theta.copy()}


def _require_on_face(points, face, tol=1e-9):
    if face == "M":
        if not np.all(np.abs(points.rho - 1.0) < tol):
            raise ValueError("points must lie on the round face (rho = 1)")
    elif face == "N":
        if not np.all(np.abs(points.phi - HALF_PI) < tol):
            raise ValueError("points must lie on the flat face (phi = pi/2)")
        if np.any(points.rho <= 0.0):
            raise ValueError("the flat-face normal is undefined at the origin")
    elif face == "Sigma":
        if not (np.all(np.abs(points.rho - 1.0) < tol)
                and np.all(np.abs(points.phi - HALF_PI) < tol)):
            raise ValueError("points must lie on the corner sphere")
    else:
        raise ValueError(f"unknown face {face!r}")


def _analytic_capable(field):
    if isinstance(field, (ZonalPowerField, ConstField)):
        return not getattr(field, "force_numeric", False)
    if isinstance(field, LinearCombination):
        return all(_analytic_capable(f) for _, f in field.parts)
    return False


def _eval_zonal_coeffs(coeffs, phi, m=0):
    if not coeffs:
        return np.zeros_like(phi)
    ks = np.array(sorted(coeffs), dtype=int)
    ds = np.array([coeffs[k] for k in ks], dtype=float)
    mat = harmonics.zonal_deriv_matrix(ks, phi, m)
    return ds @ mat


# ---------------------------------------------------------------------------
# Operator entry points
# ---------------------------------------------------------------------------

def apply_mu(face, field, points, scheme=None):
    """Inward normal derivative on a boundary face."""
    scheme = scheme or FDScheme()
    _require_on_face(points, face)
    if isinstance(field, LinearCombination):
        return sum(w * apply_mu(face, f, points, scheme) for w, f in field.parts)
    if isinstance(field, ConstField):
        return np.zeros(len(points))
    if _analytic_capable(field):
        if face == "M":
            return _eval_zonal_coeffs(field.mu_m_coeffs(), points.phi)
        return field.mu_n_poly()(points.rho)
    if face == "M":
        fn = _SphFn(field)
        coords = _coords_from_points(points)
        return -_axis_derivs(fn, coords, "rho", (1,), scheme)[1]
    # On the flat face the inward normal is d/dw, with no metric factors.
    return _cart_axis_derivs(field, points, 3, (1,), scheme)[1]


def apply_nu(face, field, points, scheme=None):
    """Inward normal derivative, within a face, at the corner sphere."""
    scheme = scheme or FDScheme()
    _require_on_face(points, "Sigma")
    if isinstance(field, LinearCombination):
        return sum(w * apply_nu(face, f, points, scheme) for w, f in field.parts)
    if isinstance(field, ConstField):
        return np.zeros(len(points))
    if _analytic_capable(field):
        if face == "M":
            # -d/dphi of the round-face restriction
            coeffs = field.boundary_value_coeffs()
            return -_eval_zonal_coeffs(coeffs, points.phi, 1)
        # -d/drho of the zonal sum at the corner
        val = 0.0
        for k, p, c in zip(field.ks, field.ps, field.cs):
            val -= c * p * harmonics.zonal_equator(int(k))
        return np.full(len(points), val)
    fn = _SphFn(field)
    coords = _coords_from_points(points)
    axis = "phi" if face == "M" else "rho"
    return -_axis_derivs(fn, coords, axis, (1,), scheme)[1]


def apply_p3m(field, points, scheme=None):
    """Third-order conformal boundary operator on the round face."""
    scheme = scheme or FDScheme()
    _require_on_face(points, "M")
    if isinstance(field, LinearCombination):
        return sum(w * apply_p3m(f, points, scheme) for w, f in field.parts)
    if isinstance(field, ConstField):
        return np.zeros(len(points))
    if _analytic_capable(field):
        return _eval_zonal_coeffs(field.p3m_coeffs(), points.phi)
    phi = points.phi
    delta = scheme.corner_delta
    if np.any(phi > HALF_PI - delta) or np.any(phi < delta):
        raise ValueError("composite fields are only C^3 up to the corner; "
                         f"stay {delta} away from the band edges for third-order stencils")
    fn = _SphFn(field)
    coords = _coords_from_points(points)

    # (1/2) mu_M(Δf): one-sided radial derivative of the Laplacian.
    def lap_fn(rho, phi_, alpha, theta):
        c = {"rho": rho, "phi": phi_, "alpha": alpha, "theta": theta}
        return _laplacian4_fd(field, c, scheme)

    mu_lap = -_axis_derivs(lap_fn, coords, "rho", (1,), scheme)[1]

    # Δ_M(mu_M f) and Δ_M f: tangential Laplacian on the round face.
    def mu_fn(rho, phi_, alpha, theta):
        c = {"rho": rho, "phi": phi_, "alpha": alpha, "theta": theta}
        return -_axis_derivs(fn, c, "rho", (1,), scheme)[1]

    lap_m_mu = _tangential_laplacian_m(mu_fn, field, coords, scheme)
    lap_m_f = _tangential_laplacian_m(fn, field, coords, scheme)
    return 0.5 * mu_lap + lap_m_mu - lap_m_f


def _tangential_laplacian_m(fn, field, coords, scheme):
    """Spherical Laplacian on the round face of a face function."""
    d_phi = _axis_derivs(fn, coords, "phi", (1, 2), scheme)
    out = d_phi[2] + 2.0 / np.tan(coords["phi"]) * d_phi[1]
    if field.depends_alpha:
        d_alpha = _axis_derivs(fn, coords, "alpha", (1, 2), scheme)
        extra = d_alpha[2] + d_alpha[1] / np.tan(coords["alpha"])
        if field.depends_theta:
            d_theta = _axis_derivs(fn, coords, "theta", (2,), scheme)
            extra = extra + d_theta[2] / np.sin(coords["alpha"]) ** 2
        out = out + extra / np.sin(coords["phi"]) ** 2
    return out


def _cart_axis_derivs(fn_or_field, points_or_cart, axis, orders, scheme):
    """Derivatives along a Cartesian axis; the w-axis ladder stays one-sided.

    ``fn_or_field`` is a field or a callable taking a (4, ...) coordinate
    array; the first form evaluates through Points.
    """
    if hasattr(fn_or_field, "eval"):
        field = fn_or_field

        def fn(cart):
            shape = cart.shape[1:]
            pts = Points.from_cartesian(*(c.ravel() for c in cart))
            return field.eval(pts).reshape(shape)
    else:
        fn = fn_or_field
    cart = points_or_cart if isinstance(points_or_cart, np.ndarray) \
        else np.stack(points_or_cart.cart)
    n = scheme.n_nodes
    h = scheme.h
    x0 = cart[axis]
    lo = 0.0 if axis == 3 else None
    starts = _ladder_starts(x0, h, n, lo=lo, hi=None)
    nodes = x0[..., None] + (starts[..., None] + np.arange(n)) * h
    tiled = np.repeat(cart[..., None], n, axis=-1)
    tiled[axis] = nodes
    vals = fn(tiled[0:4])
    m = max(orders)
    flat_starts = starts.reshape(-1)
    flat_vals = vals.reshape(-1, n)
    ws = np.empty((flat_starts.size, m + 1, n))
    for s in np.unique(flat_starts):
        mask = flat_starts == s
        ws[mask] = fd_weights(0.0, (s + np.arange(n)) * h, m)
    out = {}
    for order in orders:
        out[order] = np.einsum("pn,pn->p", ws[:, order, :], flat_vals).reshape(x0.shape)
    return out


def apply_p3n(field, points, scheme=None):
    """Third-order conformal boundary operator on the flat face.

    The black-box path works in Cartesian form, where the inward normal is
    d/dw and the face Laplacian is the plain (x, y, z) one: the spherical
    writing carries 1/rho-weighted angular derivatives whose rounding noise
    dominates near the face center.
    """
    scheme = scheme or FDScheme()
    _require_on_face(points, "N")
    if isinstance(field, LinearCombination):
        return sum(w * apply_p3n(f, points, scheme) for w, f in field.parts)
    if isinstance(field, ConstField):
        return np.zeros(len(points))
    if _analytic_capable(field):
        return field.p3n_poly()(points.rho)
    rho = points.rho
    delta = scheme.corner_delta
    if np.any(rho > 1.0 - delta):
        raise ValueError("composite fields are only C^3 up to the corner; "
                         f"stay {delta} away from rho = 1 for third-order stencils")

    def lap_fn(cart):
        total = None
        for ax in range(4):
            d = _cart_axis_derivs(field, cart, ax, (2,), scheme)[2]
            total = d if total is None else total + d
        return total

    def mu_fn(cart):
        return _cart_axis_derivs(field, cart, 3, (1,), scheme)[1]

    base = np.stack(points.cart)
    mu_lap = _cart_axis_derivs(lap_fn, base, 3, (1,), scheme)[1]
    lap3_mu = None
    for ax in range(3):
        d = _cart_axis_derivs(mu_fn, base, ax, (2,), scheme)[2]
        lap3_mu = d if lap3_mu is None else lap3_mu + d
    return 0.5 * mu_lap + lap3_mu


def corner_pieces(field, points, scheme=None):
    """The four first/second-order corner quantities at corner-sphere points.

    Returns a dict with ``nu_mu_m`` (nu_M mu_M f), ``nu_mu_n`` (nu_N mu_N f),
    ``mu_n`` (mu_N f) and ``nu_m`` (nu_M f); analytic for zonal-power
    fields, one-sided mixed stencils otherwise.
    """
    scheme = scheme or FDScheme()
    _require_on_face(points, "Sigma")
    if isinstance(field, LinearCombination):
        out = None
        for w, f in field.parts:
            pieces = corner_pieces(f, points, scheme)
            if out is None:
                out = {k: w * v for k, v in pieces.items()}
            else:
                for k in out:
                    out[k] = out[k] + w * pieces[k]
        return out
    n = len(points)
    if isinstance(field, ConstField):
        return {k: np.zeros(n) for k in ("nu_mu_m", "nu_mu_n", "mu_n", "nu_m")}
    if _analytic_capable(field):
        nu_mu_m = 0.0
        for k, d in field.mu_m_coeffs().items():
            nu_mu_m -= d * harmonics.zonal_prime_equator(k)
        poly = field.mu_n_poly()
        nu_m = 0.0
        for k, b in field.boundary_value_coeffs().items():
            nu_m -= b * harmonics.zonal_prime_equator(k)
        return {"nu_mu_m": np.full(n, nu_mu_m),
                "nu_mu_n": np.full(n, -poly.derivative(1)(1.0)),
                "mu_n": np.full(n, poly(1.0)),
                "nu_m": np.full(n, nu_m)}
    coords = _coords_from_points(points)
    fn = _SphFn(field)

    def mu_m_fn(rho_, phi_, alpha, theta):
        c = {"rho": rho_, "phi": phi_, "alpha": alpha, "theta": theta}
        return -_axis_derivs(fn, c, "rho", (1,), scheme)[1]

    def mu_n_fn(rho_, phi_, alpha, theta):
        c = {"rho": rho_, "phi": phi_, "alpha": alpha, "theta": theta}
        return -_axis_derivs(fn, c, "phi", (1,), scheme)[1] / rho_

    return {"nu_mu_m": -_axis_derivs(mu_m_fn, coords, "phi", (1,), scheme)[1],
            "nu_mu_n": -_axis_derivs(mu_n_fn, coords, "rho", (1,), scheme)[1],
            "mu_n": mu_n_fn(coords["rho"], coords["phi"], coords["alpha"], coords["theta"]),
            "nu_m": -_axis_derivs(fn, coords, "phi", (1,), scheme)[1]}


def corner_sphere_laplacian(field, points, scheme=None):
    """Tangential Laplacian on the corner sphere; zero for zonal fields."""
    scheme = scheme or FDScheme()
    _require_on_face(points, "Sigma")
    if isinstance(field, LinearCombination):
        return sum(w * corner_sphere_laplacian(f, points, scheme) for w, f in field.parts)
    if not field.depends_alpha:
        return np.zeros(len(points))
    coords = _coords_from_points(points)
    fn = _SphFn(field)
    d_alpha = _axis_derivs(fn, coords, "alpha", (1, 2), scheme)
    lap = d_alpha[2] + d_alpha[1] / np.tan(coords["alpha"])
    if field.depends_theta:
        d_theta = _axis_derivs(fn, coords, "theta", (2,), scheme)
        lap = lap + d_theta[2] / np.sin(coords["alpha"]) ** 2
    return lap


def apply_p2(field, points, scheme=None):
    """Second-order corner operator on the corner sphere."""
    scheme = scheme or FDScheme()
    pieces = corner_pieces(field, points, scheme)
    out = pieces["nu_mu_m"] + pieces["nu_mu_n"] - pieces["nu_m"]
    lap = corner_sphere_laplacian(field, points, scheme)
    return out - HALF_PI * lap


def apply_p4(field, points, scheme=None):
    """Interior fourth-order operator (squared Laplacian on the flat model)."""
    scheme = scheme or FDScheme()
    if isinstance(field, LinearCombination):
        return sum(w * apply_p4(f, points, scheme) for w, f in field.parts)
    if isinstance(field, ConstField):
        return np.zeros(len(points))
    if _analytic_capable(field):
        return field.bilaplacian_field().eval(points)
    h = scheme.h4
    margin = (4.2 if scheme.richardson else 2.1) * h
    if np.any(points.rho > 1.0 - margin) or np.any(points.w < margin):
        raise ValueError("interior stencil needs clearance from the boundary")
    val = _bilaplacian_cart(field, points, h)
    if scheme.richardson:
        # The stencil is second-order; extrapolate against the coarser step
        # so the fine-step rounding noise is not amplified.
        val_coarse = _bilaplacian_cart(field, points, 2.0 * h)
        val = (4.0 * val - val_coarse) / 3.0
    return val


def _bilaplacian_cart(field, points, h):
    """Δ^2 by the 4-dimensional Cartesian stencil: sum d^4_i + 2 sum d^2_i d^2_j."""
    base = np.stack(points.cart, axis=0)        # (4, P)
    n = base.shape[1]
    offsets = []
    for i in range(4):
        for s in (-2, -1, 1, 2):
            e = np.zeros(4)
            e[i] = s
            offsets.append(e)
    for i in range(4):
        for j in range(i + 1, 4):
            for si in (-1, 1):
                for sj in (-1, 1):
                    e = np.zeros(4)
                    e[i], e[j] = si, sj
                    offsets.append(e)
    offsets = np.array([[0.0, 0.0, 0.0, 0.0]] + offsets)     # (41, 4)
    coords = base[None, :, :] + h * offsets[:, :, None]      # (41, 4, P)
    pts = Points.from_cartesian(*(coords[:, i, :].ravel() for i in range(4)))
    vals = field.eval(pts).reshape(offsets.shape[0], n)

    center = vals[0]
    out = np.zeros(n)
    idx = 1
    for i in range(4):
        m2, m1, p1, p2 = vals[idx], vals[idx + 1], vals[idx + 2], vals[idx + 3]
        out += (m2 - 4 * m1 + 6 * center - 4 * p1 + p2) / h ** 4
        idx += 4
    axis_vals = {}
    idx2 = 1
    for i in range(4):
        axis_vals[i] = (vals[idx2 + 1], vals[idx2 + 2])      # (f(-e_i), f(+e_i))
        idx2 += 4
    for i in range(4):
        for j in range(i + 1, 4):
            mm, mp, pm, pp = vals[idx], vals[idx + 1], vals[idx + 2], vals[idx + 3]
            fi_m, fi_p = axis_vals[i]
            fj_m, fj_p = axis_vals[j]
            cross = (pp - 2 * fi_p + mp) - 2 * (fj_p - 2 * center + fj_m) \
                + (pm - 2 * fi_m + mm)
            out += 2.0 * cross / h ** 4
            idx += 4
    return out


def laplacian4(field, points, scheme=None):
    """Interior Laplacian; analytic for zonal-power fields, FD otherwise."""
    scheme = scheme or FDScheme()
    if isinstance(field, LinearCombination):
        return sum(w * laplacian4(f, points, scheme) for w, f in field.parts)
    if isinstance(field, ConstField):
        return np.zeros(len(points))
    if _analytic_capable(field):
        return field.laplacian_field().eval(points)
    return _laplacian4_fd(field, _coords_from_points(points), scheme)
