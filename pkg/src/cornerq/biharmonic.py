"""Two families of zonal biharmonic functions and their boundary images.

Family 1 has radial profile (k + 2 - k rho^2) rho^k and family 2 has
(rho^2 - 1) rho^k, each multiplying the zonal harmonic f_k.  Both are
annihilated by the squared Laplacian; family 2 vanishes identically on the
unit sphere while family 1 has vanishing radial derivative there.  The
construction of solutions rests on the closed-form images of these terms
under the boundary operators, assembled here and cross-checked against
independent differentiation in :func:`verify_table`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import harmonics
from .harmonics import zonal, zonal_deriv, zonal_prime_equator

PI = math.pi


class RadialPoly:
    """Sparse Laurent-style polynomial in rho: sum of c_p * rho^p.

    Negative powers appear in the flat-face images; every case produced by
    the pipeline has vanishing coefficients there whenever the power would
    blow up at the origin, and flat-face grids exclude rho = 0 anyway.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=None):
        self.coeffs = {}
        if coeffs:
            for p, c in dict(coeffs).items():
                if c != 0.0:
                    self.coeffs[int(p)] = self.coeffs.get(int(p), 0.0) + float(c)

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        for p, c in self.coeffs.items():
            out = out + c * np.power(rho, p)
        return out

    def derivative(self, m=1):
        coeffs = dict(self.coeffs)
        for _ in range(m):
            coeffs = {p - 1: c * p for p, c in coeffs.items() if p != 0}
        return RadialPoly(coeffs)

    def __add__(self, other):
        merged = dict(self.coeffs)
        for p, c in other.coeffs.items():
            merged[p] = merged.get(p, 0.0) + c
        return RadialPoly(merged)

    def scaled(self, factor):
        return RadialPoly({p: c * factor for p, c in self.coeffs.items()})

    def integral_ball3(self):
        """Integral over the unit three-ball, 4 pi * int_0^1 poly * rho^2 drho."""
        total = 0.0
        for p, c in self.coeffs.items():
            if p + 3 <= 0:
                raise ValueError(f"rho^{p} is not integrable against rho^2 drho")
            total += c / (p + 3)
        return 4.0 * PI * total

    def is_zero(self, tol=0.0):
        return all(abs(c) <= tol for c in self.coeffs.values())


@dataclass(frozen=True)
class BasisTerm:
    """One zonal biharmonic basis function, indexed by degree and family."""

    k: int
    family: int

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("degree must be nonnegative")
        if self.family not in (1, 2):
            raise ValueError("family must be 1 or 2")

    def radial(self, rho, m=0):
        """Radial profile or its m-th derivative.

        The m = 0 profiles are evaluated in factored form so that family 2
        is exactly zero at rho = 1 and family 1 exactly (k+2-k) there.
        """
        rho = np.asarray(rho, dtype=float)
        k = self.k
        if m == 0:
            if self.family == 1:
                return (k + 2 - k * rho ** 2) * np.power(rho, k)
            return (rho ** 2 - 1.0) * np.power(rho, k)
        return self.radial_poly().derivative(m)(rho)

    def radial_poly(self):
        k = self.k
        if self.family == 1:
            return RadialPoly({k: k + 2, k + 2: -k})
        return RadialPoly({k + 2: 1.0, k: -1.0})

    def laplacian_coeff(self):
        """ΔF = coeff * rho^k f_k; family 1 gives -4k(k+2), family 2 gives 4(k+2)."""
        if self.family == 1:
            return -4.0 * self.k * (self.k + 2)
        return 4.0 * (self.k + 2)


def eval_term(term, rho, phi):
    """Value of the basis function at (rho, phi); angles beyond phi are inert."""
    return term.radial(rho) * zonal(term.k, phi)


def term_deriv(term, rho, phi, m_rho=0, m_phi=0):
    """Mixed partial d^{m_rho}_rho d^{m_phi}_phi of the basis function."""
    return term.radial(rho, m=m_rho) * zonal_deriv(term.k, phi, m_phi)


def laplacian(term, rho, phi):
    """Closed-form interior Laplacian of the basis function."""
    rho = np.asarray(rho, dtype=float)
    return term.laplacian_coeff() * np.power(rho, term.k) * zonal(term.k, phi)


def p3m_coefficient(k, family):
    """Round-face third-order image: P3 F_{k,1} = 2k(k+1)(k+2) f_k, families 2 map to 0."""
    if family == 1:
        return 2.0 * k * (k + 1) * (k + 2)
    return 0.0


def mu_m_coefficient(k, family):
    """Round-face normal image: families 1 map to 0, mu F_{k,2} = -2 f_k."""
    return 0.0 if family == 1 else -2.0


def p3n_poly(k, family):
    """Flat-face third-order image as a polynomial in rho (times 1 on f_k's slice).

    Identically zero for even k since f_k'(pi/2) = 0 there.
    """
    fp = zonal_prime_equator(k)
    if fp == 0.0:
        return RadialPoly()
    if family == 1:
        return RadialPoly({k - 3: -k * (k + 2) * (k - 1) * fp,
                           k - 1: k * (k + 2) * (k + 3) * fp})
    return RadialPoly({k - 3: k * (k - 1) * fp,
                       k - 1: -(k + 2) * (k + 3) * fp})


def mu_n_poly(k, family):
    """Flat-face normal image as a polynomial in rho; zero for even k."""
    fp = zonal_prime_equator(k)
    if fp == 0.0:
        return RadialPoly()
    if family == 1:
        return RadialPoly({k - 1: -(k + 2) * fp, k + 1: k * fp})
    return RadialPoly({k + 1: -fp, k - 1: fp})


@dataclass(frozen=True)
class TableRow:
    """Boundary images of one basis function under the four operators."""

    k: int
    family: int
    p3m: float          # coefficient on f_k along the round face
    mu_m: float         # coefficient on f_k along the round face
    p3n: RadialPoly     # polynomial in rho along the flat face
    mu_n: RadialPoly


def table_row(k, family):
    """Closed-form operator images of F_{k, family}."""
    return TableRow(k, family,
                    p3m=p3m_coefficient(k, family),
                    mu_m=mu_m_coefficient(k, family),
                    p3n=p3n_poly(k, family),
                    mu_n=mu_n_poly(k, family))


# ---------------------------------------------------------------------------
# Independent re-derivation of the table from the operator definitions.
# ---------------------------------------------------------------------------

def _operator_images_from_derivatives(term, rho_grid, phi_grid):
    """Apply the boundary-operator definitions to the term by analytic calculus.

    Works from the generic radial/zonal derivative machinery only:
      P3 on the round face:  (1/2) mu ΔF + Δ_tan(mu F) - Δ_tan F at rho = 1,
      P3 on the flat face:   (1/2) mu ΔF + Δ_3(mu F) at phi = pi/2,
    with mu the inward normal derivative and Δ_tan, Δ_3 the tangential
    Laplacians.  This never touches the closed-form table entries.
    """
    k = term.k
    r = term.radial_poly()
    lam = -k * (k + 2)

    # Interior Laplacian from the radial calculus: (r'' + 3 r'/rho + lam r/rho^2) f_k
    lap_radial = r.derivative(2) + RadialPoly(
        {p - 1: 3 * c for p, c in r.derivative(1).coeffs.items()}) + RadialPoly(
        {p - 2: lam * c for p, c in r.coeffs.items()})

    # Round face, rho = 1.
    mu_m_val = -r.derivative(1)(1.0)                       # times f_k
    half_mu_lap = -0.5 * lap_radial.derivative(1)(1.0)     # times f_k
    tan_of_mu = lam * mu_m_val                             # Δ_tan(mu F) = lam * mu_m * f_k
    tan_of_f = lam * r(1.0)
    p3m_val = half_mu_lap + tan_of_mu - tan_of_f           # times f_k

    fp = zonal_prime_equator(k)
    # Flat face: mu F = -(1/rho) r(rho) f_k'(pi/2), a radial function on the ball slice.
    mu_n = RadialPoly({p - 1: -c * fp for p, c in r.coeffs.items()})
    half_mu_lap_n = RadialPoly({p - 1: -0.5 * c * fp for p, c in lap_radial.coeffs.items()})
    lap3_mu_n = mu_n.derivative(2) + RadialPoly(
        {p - 1: 2 * c for p, c in mu_n.derivative(1).coeffs.items()})
    p3n = half_mu_lap_n + lap3_mu_n

    return {
        "p3m": p3m_val,
        "mu_m": mu_m_val,
        "p3n": p3n(rho_grid),
        "mu_n": mu_n(rho_grid),
        "p3n_poly": p3n,
        "mu_n_poly": mu_n,
    }


@dataclass
class TableReport:
    k_max: int
    sup_analytic: float
    sup_fd: float | None
    failures: list
    tol_analytic: float
    tol_fd: float | None

    @property
    def passed(self):
        return not self.failures


def verify_table(k_max, tol_analytic=1e-8, fd=False, tol_fd=1e-4,
                 phi_grid=None, rho_grid=None, scheme=None):
    """Cross-validate the closed-form table against independent code paths.

    Always compares against the analytic re-derivation; with ``fd=True``
    also against the finite-difference operator path on interior bands of
    the two faces.
    """
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    phi_grid = np.linspace(0.1, 1.47, 29) if phi_grid is None else np.asarray(phi_grid)
    rho_grid = np.linspace(0.1, 0.9, 17) if rho_grid is None else np.asarray(rho_grid)

    sup_analytic = 0.0
    sup_fd = 0.0 if fd else None
    failures = []
    fd_ops = None
    if fd:
        from . import fields as _fields
        fd_ops = _fields
        # 8-node ladders push the truncation of the degree-20 rows below the
        # rounding floor of the shorter default stencils.
        scheme = scheme or _fields.FDScheme(h=1.2e-3, n_nodes=8)

    for k in range(k_max + 1):
        fk_phi = zonal(k, phi_grid)
        for family in (1, 2):
            term = BasisTerm(k, family)
            row = table_row(k, family)
            indep = _operator_images_from_derivatives(term, rho_grid, phi_grid)

            diffs = {
                "p3m": np.max(np.abs(row.p3m * fk_phi - indep["p3m"] * fk_phi)),
                "mu_m": np.max(np.abs(row.mu_m * fk_phi - indep["mu_m"] * fk_phi)),
                "p3n": np.max(np.abs(row.p3n(rho_grid) - indep["p3n"])),
                "mu_n": np.max(np.abs(row.mu_n(rho_grid) - indep["mu_n"])),
            }
            worst = max(diffs.values())
            sup_analytic = max(sup_analytic, worst)
            if worst > tol_analytic:
                failures.append((k, family, "analytic", worst))

            if k % 2 == 0 and not (row.p3n.is_zero() and row.mu_n.is_zero()):
                failures.append((k, family, "even-k flat-face image not zero", 1.0))

            if fd:
                fd_worst = _fd_row_discrepancy(fd_ops, term, row, phi_grid, rho_grid, scheme)
                sup_fd = max(sup_fd, fd_worst)
                if fd_worst > tol_fd:
                    failures.append((k, family, "fd", fd_worst))

    return TableReport(k_max, sup_analytic, sup_fd, failures, tol_analytic,
                       tol_fd if fd else None)


def _fd_row_discrepancy(fieldsmod, term, row, phi_grid, rho_grid, scheme):
    """Worst FD-vs-closed-form discrepancy, scaled by the row magnitude.

    Rows grow like k^3 (values reach ~1e5 by degree 20), so the comparison
    is relative above unit scale; finite differences cannot meet absolute
    bounds on quantities that large in double precision.
    """
    from .geometry import Points

    field = fieldsmod.SeriesField([(term, 1.0)], force_numeric=True)
    pts_m = Points.from_spherical(np.ones_like(phi_grid), phi_grid, 0.5 * PI, 0.0)
    pts_n = Points.from_spherical(rho_grid, np.full_like(rho_grid, 0.5 * PI), 0.5 * PI, 0.0)

    fk_phi = zonal(term.k, phi_grid)
    worst = 0.0
    for got, ref in (
            (fieldsmod.apply_p3m(field, pts_m, scheme), row.p3m * fk_phi),
            (fieldsmod.apply_mu("M", field, pts_m, scheme), row.mu_m * fk_phi),
            (fieldsmod.apply_p3n(field, pts_n, scheme), row.p3n(rho_grid)),
            (fieldsmod.apply_mu("N", field, pts_n, scheme), row.mu_n(rho_grid))):
        scale = max(1.0, float(np.max(np.abs(ref))))
        worst = max(worst, float(np.max(np.abs(got - ref))) / scale)
    return worst
