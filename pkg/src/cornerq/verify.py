"""Curvature bookkeeping, residual reports, topology accounting, probes.

The flat half-ball carries constant curvature data (collected in
:data:`FLAT`); a conformal factor omega transforms them linearly through
the operators of :mod:`cornerq.fields`.  A solution of the boundary value
problem drives the fourth-order interior curvature and both third-order
face curvatures to zero while doubling the corner term, so the entire
Gauss-Bonnet constant 4 pi^2 sits on the corner sphere.  This module
measures how closely a candidate field achieves that, plus the corner
mean-curvature compatibility identities and the fourth-derivative
divergence that shows the solution is not smoother than C^3 at the corner.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dataclass_field, asdict

import numpy as np

from . import construct, harmonics
from .fields import (ConstField, FDScheme, LinearCombination, apply_mu,
                     apply_p2, apply_p3m, apply_p3n, apply_p4,
                     scheme_for, _analytic_capable)
from .geometry import (M_AREA, SIGMA_AREA, Points, grid_M, grid_N,
                       grid_Sigma, grid_X, integrate)

PI = math.pi
HALF_PI = 0.5 * math.pi
GAUSS_BONNET_TOTAL = 4.0 * PI ** 2


@dataclass(frozen=True)
class FlatConstants:
    """Curvature data of the flat half-ball model; exposed read-only."""

    Q: float = 0.0
    T_M: float = 2.0
    T_N: float = 0.0
    H_M: float = 3.0
    H_N: float = 0.0
    U: float = HALF_PI
    K: float = 1.0
    eta_M: float = 0.0
    eta_N: float = 2.0
    corner_angle: float = HALF_PI
    G: float = 0.0
    weyl_sq: float = 0.0
    euler_characteristic: int = 1


FLAT = FlatConstants()


def corner_curvature_from_definition(c=FLAT):
    """Recompute the corner curvature constant from its defining formula.

    U = (pi - theta0) K - (1/4) cot(theta0)(eta_M^2 + eta_N^2)
        + (1/2) csc(theta0) eta_M eta_N - (1/3)(nu_M H_M + nu_N H_N),
    where the normal derivatives of the constant mean curvatures vanish.
    """
    t0 = c.corner_angle
    return (PI - t0) * c.K - 0.25 * (c.eta_M ** 2 + c.eta_N ** 2) / math.tan(t0) \
        + 0.5 * c.eta_M * c.eta_N / math.sin(t0)


# ---------------------------------------------------------------------------
# Transformed curvatures
# ---------------------------------------------------------------------------

def curvatures(omega, scheme=None):
    """Lazily evaluable transformed-curvature functions keyed by name.

    Q, T and U transform linearly through the corresponding operator; the
    mean curvatures pick up the normal derivative of omega.  Each entry is
    a callable on Points of the appropriate region.
    """
    scheme = scheme_for(omega, scheme)

    def q_tilde(pts):
        return np.exp(-4.0 * omega.eval(pts)) * (FLAT.Q + apply_p4(omega, pts, scheme))

    def t_tilde_m(pts):
        return np.exp(-3.0 * omega.eval(pts)) * (FLAT.T_M + apply_p3m(omega, pts, scheme))

    def t_tilde_n(pts):
        return np.exp(-3.0 * omega.eval(pts)) * (FLAT.T_N + apply_p3n(omega, pts, scheme))

    def u_tilde(pts):
        return np.exp(-2.0 * omega.eval(pts)) * (FLAT.U + apply_p2(omega, pts, scheme))

    def h_tilde_m(pts):
        return np.exp(-omega.eval(pts)) * (FLAT.H_M - 3.0 * apply_mu("M", omega, pts, scheme))

    def h_tilde_n(pts):
        return np.exp(-omega.eval(pts)) * (FLAT.H_N - 3.0 * apply_mu("N", omega, pts, scheme))

    return {"Q": q_tilde, "T_M": t_tilde_m, "T_N": t_tilde_n,
            "U": u_tilde, "H_M": h_tilde_m, "H_N": h_tilde_n}


# ---------------------------------------------------------------------------
# Residual reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerifyConfig:
    """Grids, bands and tolerances for the residual suite."""

    band_m: tuple = (0.2, 1.35)
    band_n: tuple = (0.1, 0.95)
    n_face: int = 33
    interior_rho: tuple = (0.25, 0.8)
    interior_phi: tuple = (0.25, 1.15)
    n_interior: int = 5
    n_alpha: int = 4
    n_theta: int = 3
    corner_condition: str = "nonlinear"   # or "linear"
    scheme: FDScheme | None = None        # None: pick by the field's noise floor
    tolerances: dict = dataclass_field(default_factory=lambda: {
        "interior": 5e-3, "face_M": 5e-3, "face_N": 5e-3, "corner": 5e-3})

    def to_dict(self):
        d = asdict(self)
        d["scheme"] = None if self.scheme is None else asdict(self.scheme)
        return d


@dataclass
class ResidualEntry:
    condition: str
    region: str
    sup: float
    l2: float
    n_points: int
    tolerance: float

    @property
    def passed(self):
        return self.sup <= self.tolerance


@dataclass
class ResidualReport:
    """Per-condition residual norms with the full evaluation metadata."""

    entries: list
    config: dict
    nodes: list            # (region, rho, phi, alpha, theta, condition, residual)

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def entry(self, condition):
        for e in self.entries:
            if e.condition == condition:
                return e
        raise KeyError(condition)

    def to_json(self):
        return json.dumps({
            "passed": bool(self.passed),
            "entries": [{**asdict(e), "passed": bool(e.passed)} for e in self.entries],
            "config": self.config,
        }, indent=2, sort_keys=True)

    def to_csv(self):
        lines = ["region,rho,phi,alpha,theta,condition,residual"]
        for region, rho, phi, alpha, theta, cond, res in self.nodes:
            lines.append(f"{region},{rho:.17g},{phi:.17g},{alpha:.17g},{theta:.17g},"
                         f"{cond},{res:.17g}")
        return "\n".join(lines) + "\n"


def _angular_samples(field_obj, n_alpha, n_theta):
    alphas = np.linspace(0.6, PI - 0.6, n_alpha) if field_obj.depends_alpha else np.array([HALF_PI])
    thetas = np.linspace(0.3, 2 * PI - 0.9, n_theta) if field_obj.depends_theta else np.array([0.0])
    return alphas, thetas


def _face_points(face, band, n, alphas, thetas):
    xs = np.linspace(band[0], band[1], n)
    X, A, T = np.meshgrid(xs, alphas, thetas, indexing="ij")
    if face == "M":
        return Points.from_spherical(np.ones_like(X).ravel(), X.ravel(), A.ravel(), T.ravel())
    return Points.from_spherical(X.ravel(), np.full(X.size, HALF_PI), A.ravel(), T.ravel())


def residual_report(omega, config=None):
    """Residuals of the four conditions of the boundary value problem.

    Interior: squared-Laplacian; faces: third-order operators against
    (-2, 0); corner: the corner operator against pi e^{2 omega} - pi/2
    (or the linear constant pi/2 on request).  Analytic paths are used for
    series fields, corner-exclusion-aware finite differences otherwise.
    """
    config = config or VerifyConfig()
    scheme = scheme_for(omega, config.scheme)
    alphas, thetas = _angular_samples(omega, config.n_alpha, config.n_theta)
    entries, nodes = [], []

    def record(condition, region, pts, residuals):
        residuals = np.asarray(residuals, dtype=float)
        entries.append(ResidualEntry(
            condition=condition, region=region,
            sup=float(np.max(np.abs(residuals))),
            l2=float(np.sqrt(np.mean(residuals ** 2))),
            n_points=int(residuals.size),
            tolerance=float(config.tolerances[condition])))
        for i in range(len(pts)):
            nodes.append((region, float(pts.rho[i]), float(pts.phi[i]),
                          float(pts.alpha[i]), float(pts.theta[i]),
                          condition, float(residuals[i])))

    # Interior
    rhos = np.linspace(*config.interior_rho, config.n_interior)
    phis = np.linspace(*config.interior_phi, config.n_interior)
    R, P, A, T = np.meshgrid(rhos, phis, alphas, thetas, indexing="ij")
    pts_x = Points.from_spherical(R.ravel(), P.ravel(), A.ravel(), T.ravel())
    record("interior", "X", pts_x, apply_p4(omega, pts_x, scheme))

    # Round face
    pts_m = _face_points("M", config.band_m, config.n_face, alphas, thetas)
    record("face_M", "M", pts_m, apply_p3m(omega, pts_m, scheme) + 2.0)

    # Flat face
    pts_n = _face_points("N", config.band_n, config.n_face, alphas, thetas)
    record("face_N", "N", pts_n, apply_p3n(omega, pts_n, scheme))

    # Corner
    A, T = np.meshgrid(alphas, thetas, indexing="ij")
    pts_s = Points.from_spherical(np.ones(A.size), np.full(A.size, HALF_PI),
                                  A.ravel(), T.ravel())
    p2 = apply_p2(omega, pts_s, scheme)
    if config.corner_condition == "linear":
        target = np.full(len(pts_s), HALF_PI)
    else:
        target = PI * np.exp(2.0 * omega.eval(pts_s)) - HALF_PI
    record("corner", "Sigma", pts_s, p2 - target)

    return ResidualReport(entries=entries, config=config.to_dict(), nodes=nodes)


# ---------------------------------------------------------------------------
# Gauss-Bonnet accounting
# ---------------------------------------------------------------------------

@dataclass
class GaussBonnetReport:
    interior: float
    face_m: float
    face_n: float
    corner: float
    clipped_bands: bool

    @property
    def faces(self):
        return self.face_m + self.face_n

    @property
    def total(self):
        return self.interior + self.faces + self.corner

    @property
    def defect(self):
        return self.total - GAUSS_BONNET_TOTAL

    def to_dict(self):
        return {"interior": self.interior, "face_M": self.face_m,
                "face_N": self.face_n, "corner": self.corner,
                "total": self.total, "target": GAUSS_BONNET_TOTAL,
                "defect": self.defect, "clipped_bands": self.clipped_bands}


def _is_series(omega):
    return _analytic_capable(omega)


def gauss_bonnet(omega, scheme=None, n_face=96, n_sigma=(32, 64), n_x=32):
    """Conformal Gauss-Bonnet split: interior + faces + corner.

    Uses the linear integrands (Q + P4 omega etc.); the conformal volume
    weights cancel against the curvature prefactors, so each contribution
    is an ordinary flat integral.  For black-box fields the face integrals
    are restricted to the corner-exclusion bands (flagged in the report).
    """
    scheme = scheme_for(omega, scheme)
    axisym = not omega.depends_alpha
    series = _is_series(omega)
    delta = 0.0 if series else scheme.corner_delta

    phi_range = (0.0 + (0.0 if series else delta), HALF_PI - delta)
    r_range = (0.05 if not series else 0.0, 1.0 - delta)

    gm = grid_M(n_phi=n_face, axisymmetric=axisym, phi_range=phi_range,
                n_alpha=n_sigma[0], n_theta=n_sigma[1])
    gn = grid_N(n_r=n_face, axisymmetric=axisym, r_range=r_range,
                n_alpha=n_sigma[0], n_theta=n_sigma[1])
    gs = grid_Sigma(*n_sigma)

    face_m = integrate(lambda p: FLAT.T_M + apply_p3m(omega, p, scheme), gm)
    face_n = integrate(lambda p: FLAT.T_N + apply_p3n(omega, p, scheme), gn)
    corner = integrate(lambda p: FLAT.U + apply_p2(omega, p, scheme), gs)

    if series:
        interior = 0.5 * integrate(lambda p: apply_p4(omega, p, scheme),
                                   grid_X(n_rho=n_x, n_phi=n_x, axisymmetric=True))
    else:
        gx = grid_X(n_rho=n_x, n_phi=n_x, axisymmetric=axisym,
                    n_alpha=n_sigma[0] // 2, n_theta=n_sigma[1] // 2)
        mask = (gx.points.rho < 1.0 - 0.05) & (gx.points.w > 0.05)
        pts = Points.from_spherical(*(c[mask] for c in gx.points.sph))
        vals = apply_p4(omega, pts, scheme)
        interior = 0.5 * float(np.dot(vals, gx.weights[mask]))

    return GaussBonnetReport(interior=float(interior), face_m=float(face_m),
                             face_n=float(face_n), corner=float(corner),
                             clipped_bands=not series)


def gauss_bonnet_linear(omega, scheme=None, n_face=96, n_sigma=(24, 48), n_x=32):
    """The conformal-primitive identity: (1/2)∫P4 + ∫P3 + ∮P2 = 0 for any C^3 field."""
    report = gauss_bonnet(omega, scheme=scheme, n_face=n_face, n_sigma=n_sigma, n_x=n_x)
    flat_part = FLAT.T_M * M_AREA + FLAT.U * SIGMA_AREA
    return report.total - flat_part


def corner_area_integral(element, n_sigma=(48, 96)):
    """∮_Sigma |J|^{1/2} dsigma: the area of the transformed corner sphere (4 pi)."""
    gs = grid_Sigma(*n_sigma)
    return integrate(lambda p: element.conformal_factor(p) ** 2, gs)


# ---------------------------------------------------------------------------
# Corner mean-curvature compatibility
# ---------------------------------------------------------------------------

def corner_h_compatibility(omega, scheme=None, n_alpha=3, n_theta=3):
    """Residuals of the two corner identities for the transformed mean curvatures.

        nu_M(H~_M) = -(3 pi / 4) e^{-omega} + (1/3) e^{omega} H~_N H~_M
        nu_N(H~_N) = same right-hand side,

    evaluated on a small corner grid with one-sided stencils.  The flat
    metric itself fails these (the first residual is 3 pi / 4): they are
    consequences of the corner constraints, not identities of the model.
    """
    scheme = scheme_for(omega, scheme)
    alphas, thetas = _angular_samples(omega, n_alpha, n_theta)
    A, T = np.meshgrid(alphas, thetas, indexing="ij")
    alpha, theta = A.ravel(), T.ravel()
    n = alpha.size
    curv = curvatures(omega, scheme)

    corner = Points.from_spherical(np.ones(n), np.full(n, HALF_PI), alpha, theta)
    h = scheme.h
    from .fields import fd_weights

    # nu_M(H~_M): -d/dphi of the round-face mean curvature, one-sided in phi.
    phi_nodes = HALF_PI - np.arange(6) * h
    w_phi = fd_weights(HALF_PI, phi_nodes, 1)[1]
    vals = np.empty((6, n))
    for i, ph in enumerate(phi_nodes):
        pts = Points.from_spherical(np.ones(n), np.full(n, ph), alpha, theta)
        vals[i] = curv["H_M"](pts)
    nu_h_m = -np.einsum("i,ip->p", w_phi, vals)

    # nu_N(H~_N): -d/drho of the flat-face mean curvature, one-sided in rho.
    rho_nodes = 1.0 - np.arange(6) * h
    w_rho = fd_weights(1.0, rho_nodes, 1)[1]
    vals_n = np.empty((6, n))
    for i, r in enumerate(rho_nodes):
        pts = Points.from_spherical(np.full(n, r), np.full(n, HALF_PI), alpha, theta)
        vals_n[i] = curv["H_N"](pts)
    nu_h_n = -np.einsum("i,ip->p", w_rho, vals_n)

    om = omega.eval(corner)
    rhs = -0.75 * PI * np.exp(-om) \
        + np.exp(om) * curv["H_N"](corner) * curv["H_M"](corner) / 3.0
    return nu_h_m - rhs, nu_h_n - rhs


# ---------------------------------------------------------------------------
# The corner fourth-derivative divergence probe
# ---------------------------------------------------------------------------

@dataclass
class CornerDerivativeProbe:
    """Partial sums of radial derivatives of the seed series at the corner."""

    n_list: list
    fourth: dict             # N -> partial sum of d^4_rho at the corner
    third: dict              # N -> partial sum of d^3_rho at the corner
    doubling_increments: dict  # N -> S(2N) - S(N) for the fourth derivative
    log_ratios: dict         # N -> S(N) / log(N)

    @property
    def increment_limit(self):
        return -4.5 / PI * math.log(2.0)

    @property
    def diverges(self):
        return all(abs(self.fourth[2 * n]) > abs(self.fourth[n]) + 0.5
                   for n in self.n_list if n >= 64 and 2 * n in self.fourth)


def corner_fourth_derivative_probe(n_list):
    """Term-wise radial derivatives of the seed at the corner point.

    The fourth-derivative partial sums grow like a multiple of the
    harmonic series: the doubling increments approach -(9 / 2 pi) log 2,
    witnessing that solutions are not C^4 at the corner.  The
    third-derivative sums converge absolutely.
    """
    n_list = sorted(int(n) for n in n_list)
    if not n_list or n_list[0] < 1:
        raise ValueError("need positive truncation levels")
    n_max = 2 * n_list[-1]
    js = np.arange(1, n_max + 1)

    fourth_terms = np.empty(n_max)
    third_terms = np.empty(n_max)
    from .biharmonic import BasisTerm
    for idx, j in enumerate(js):
        term = BasisTerm(2 * int(j), 1)
        coef = 0.375 * construct.tail_coefficient(int(j))
        fk = harmonics.zonal_equator(2 * int(j))
        fourth_terms[idx] = coef * term.radial(1.0, m=4) * fk
        third_terms[idx] = coef * term.radial(1.0, m=3) * fk

    cum4 = np.cumsum(fourth_terms)
    cum3 = np.cumsum(third_terms)
    fourth = {n: float(cum4[n - 1]) for n in n_list + [2 * n for n in n_list]}
    third = {n: float(cum3[n - 1]) for n in n_list + [2 * n for n in n_list]}
    increments = {n: fourth[2 * n] - fourth[n] for n in n_list}
    ratios = {n: fourth[n] / math.log(n) for n in n_list if n > 1}
    return CornerDerivativeProbe(n_list=n_list, fourth=fourth, third=third,
                                 doubling_increments=increments, log_ratios=ratios)
