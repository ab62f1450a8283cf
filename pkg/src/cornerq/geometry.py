"""Coordinates, domain predicates and quadrature on the upper half-ball.

The domain is the closed upper half of the unit ball in R^4,

    X = {(x, y, z, w) : x^2 + y^2 + z^2 + w^2 <= 1, w >= 0},

with boundary faces M (the round upper half-sphere), N (the flat equatorial
three-ball w = 0) and the corner two-sphere Sigma = M ∩ N.

Spherical coordinates (rho, phi, alpha, theta) are fixed by

    w = rho cos(phi),          z = rho sin(phi) cos(alpha),
    x = rho sin(phi) sin(alpha) cos(theta),
    y = rho sin(phi) sin(alpha) sin(theta),

so phi is the polar angle measured from the w-axis; the half-ball is
phi <= pi/2 and the corner sits at rho = 1, phi = pi/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# Closed-form measures of the four integration regions.
SIGMA_AREA = 4.0 * math.pi            # area of the unit two-sphere
M_AREA = math.pi ** 2                 # half of vol(S^3) = 2 pi^2
N_VOLUME = 4.0 * math.pi / 3.0        # volume of the unit three-ball
X_VOLUME = math.pi ** 2 / 4.0         # half of vol(B^4) = pi^2 / 2

REGION_MEASURES = {"X": X_VOLUME, "M": M_AREA, "N": N_VOLUME, "Sigma": SIGMA_AREA}

_BOUNDARY_TOL = 1e-12


class DomainError(ValueError):
    """Point lies outside the closed upper half-ball."""


def sph_to_cart(rho, phi, alpha, theta):
    """Map spherical coordinates to Cartesian (x, y, z, w). Vectorized."""
    rho = np.asarray(rho, dtype=float)
    sp = np.sin(phi)
    w = rho * np.cos(phi)
    z = rho * sp * np.cos(alpha)
    sa = np.sin(alpha)
    x = rho * sp * sa * np.cos(theta)
    y = rho * sp * sa * np.sin(theta)
    return x, y, z, w


def _sph_from_cart(x, y, z, w):
    """Cartesian -> spherical without domain checks; angles 0 at rho = 0.

    Angles come from atan2, which stays fully accurate at the axis poles
    where the arccos form loses half the mantissa.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    r_xy = np.hypot(x, y)
    r_xyz = np.hypot(r_xy, z)
    rho = np.hypot(r_xyz, w)
    phi = np.arctan2(r_xyz, w)
    alpha = np.arctan2(r_xy, z)
    theta = np.mod(np.arctan2(y, x), TWO_PI)
    theta = np.where(r_xy > 0.0, theta, 0.0)
    return rho, phi, alpha, theta


def cart_to_sph(p, domain="half"):
    """Convert a Cartesian 4-tuple to (rho, phi, alpha, theta).

    Points must lie in the closed half-ball (``domain="half"``, default) or
    the closed full ball (``domain="full"``) up to a 1e-12 tolerance;
    anything outside raises :class:`DomainError`.  At rho = 0 all angles
    are 0 by convention.
    """
    x, y, z, w = (float(c) for c in p)
    rho = math.sqrt(x * x + y * y + z * z + w * w)
    if rho > 1.0 + _BOUNDARY_TOL:
        raise DomainError(f"point at radius {rho} lies outside the closed unit ball")
    if domain == "half" and w < -_BOUNDARY_TOL:
        raise DomainError(f"point with w = {w} lies below the equatorial slice")
    elif domain not in ("half", "full"):
        raise ValueError(f"unknown domain {domain!r}")
    r, ph, al, th = _sph_from_cart(x, y, z, w)
    return float(r), float(ph), float(al), float(th)


@dataclass(frozen=True)
class Point4:
    """A point of the (half-)ball carrying both coordinate representations."""

    x: float
    y: float
    z: float
    w: float
    rho: float
    phi: float
    alpha: float
    theta: float

    @classmethod
    def from_cartesian(cls, x, y, z, w, domain="half"):
        rho, phi, alpha, theta = cart_to_sph((x, y, z, w), domain=domain)
        return cls(float(x), float(y), float(z), float(w), rho, phi, alpha, theta)

    @classmethod
    def from_spherical(cls, rho, phi, alpha=0.0, theta=0.0):
        x, y, z, w = sph_to_cart(rho, phi, alpha, theta)
        return cls(float(x), float(y), float(z), float(w),
                   float(rho), float(phi), float(alpha), float(theta))

    @property
    def cartesian(self):
        return (self.x, self.y, self.z, self.w)

    @property
    def spherical(self):
        return (self.rho, self.phi, self.alpha, self.theta)


class Points:
    """A batch of points with lazily synchronized representations.

    Fields evaluate on ``Points`` so that grid sweeps stay vectorized; both
    coordinate systems are materialized only on first access.
    """

    __slots__ = ("_cart", "_sph")

    def __init__(self, cart=None, sph=None):
        if cart is None and sph is None:
            raise ValueError("need cartesian or spherical data")
        self._cart = None if cart is None else tuple(np.asarray(c, dtype=float) for c in cart)
        self._sph = None if sph is None else tuple(np.asarray(c, dtype=float) for c in sph)

    @classmethod
    def from_cartesian(cls, x, y, z, w):
        x, y, z, w = np.broadcast_arrays(*(np.atleast_1d(np.asarray(c, float)) for c in (x, y, z, w)))
        return cls(cart=(x, y, z, w))

    @classmethod
    def from_spherical(cls, rho, phi, alpha=0.0, theta=0.0):
        rho, phi, alpha, theta = np.broadcast_arrays(
            *(np.atleast_1d(np.asarray(c, float)) for c in (rho, phi, alpha, theta)))
        return cls(sph=(rho, phi, alpha, theta))

    @classmethod
    def single(cls, point):
        if isinstance(point, Point4):
            return cls.from_spherical(point.rho, point.phi, point.alpha, point.theta)
        return cls.from_cartesian(*point)

    def __len__(self):
        arrs = self._cart if self._cart is not None else self._sph
        return int(arrs[0].size)

    @property
    def cart(self):
        if self._cart is None:
            self._cart = sph_to_cart(*self._sph)
        return self._cart

    @property
    def sph(self):
        if self._sph is None:
            self._sph = _sph_from_cart(*self._cart)
        return self._sph

    x = property(lambda self: self.cart[0])
    y = property(lambda self: self.cart[1])
    z = property(lambda self: self.cart[2])
    w = property(lambda self: self.cart[3])
    rho = property(lambda self: self.sph[0])
    phi = property(lambda self: self.sph[1])
    alpha = property(lambda self: self.sph[2])
    theta = property(lambda self: self.sph[3])

    def point(self, i):
        r, p, a, t = (float(c[i]) for c in self.sph)
        return Point4.from_spherical(r, p, a, t)


def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [-1, 1].

    Exact for polynomials of degree <= 2n - 1.
    """
    if n < 1:
        raise ValueError("node count must be >= 1")
    return np.polynomial.legendre.leggauss(int(n))


def gauss_legendre_on(a, b, n):
    """Gauss-Legendre rule mapped to the interval [a, b]."""
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def trapezoid_periodic(n):
    """Uniform rule on [0, 2 pi), exact for trigonometric polynomials of degree < n."""
    if n < 1:
        raise ValueError("node count must be >= 1")
    return np.arange(n) * (TWO_PI / n), np.full(n, TWO_PI / n)


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes and positive weights matching one region's volume/area measure."""

    region: str
    points: Points
    weights: np.ndarray
    axisymmetric: bool = False

    @property
    def measure(self):
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.points)


def _tensor(*axes):
    """Outer product of (nodes, weights) pairs; returns node columns + weights."""
    grids = np.meshgrid(*(a[0] for a in axes), indexing="ij")
    wgrids = np.meshgrid(*(a[1] for a in axes), indexing="ij")
    weight = np.ones_like(wgrids[0])
    for wg in wgrids:
        weight = weight * wg
    return [g.ravel() for g in grids], weight.ravel()


def grid_X(n_rho=48, n_phi=48, n_alpha=24, n_theta=48, axisymmetric=False):
    """Quadrature grid for the solid half-ball, dV = rho^3 sin^2(phi) sin(alpha)."""
    rho = gauss_legendre_on(0.0, 1.0, n_rho)
    phi = gauss_legendre_on(0.0, 0.5 * math.pi, n_phi)
    if axisymmetric:
        (r, p), w = _tensor(rho, phi)
        weights = w * r ** 3 * np.sin(p) ** 2 * SIGMA_AREA
        pts = Points.from_spherical(r, p, np.full_like(r, 0.5 * math.pi), np.zeros_like(r))
        return QuadratureGrid("X", pts, weights, axisymmetric=True)
    ca, wa = gauss_legendre(n_alpha)          # cos(alpha) substitution: flat weight
    alpha = (np.arccos(ca), wa)
    theta = trapezoid_periodic(n_theta)
    (r, p, a, t), w = _tensor(rho, phi, alpha, theta)
    weights = w * r ** 3 * np.sin(p) ** 2
    return QuadratureGrid("X", Points.from_spherical(r, p, a, t), weights)


def grid_M(n_phi=64, n_alpha=32, n_theta=64, axisymmetric=False, phi_range=None):
    """Quadrature grid for the round face, dA = sin^2(phi) sin(alpha)."""
    lo, hi = phi_range if phi_range is not None else (0.0, 0.5 * math.pi)
    phi = gauss_legendre_on(lo, hi, n_phi)
    if axisymmetric:
        p, w = phi
        weights = w * np.sin(p) ** 2 * SIGMA_AREA
        pts = Points.from_spherical(np.ones_like(p), p, np.full_like(p, 0.5 * math.pi), np.zeros_like(p))
        return QuadratureGrid("M", pts, weights, axisymmetric=True)
    ca, wa = gauss_legendre(n_alpha)
    alpha = (np.arccos(ca), wa)
    theta = trapezoid_periodic(n_theta)
    (p, a, t), w = _tensor(phi, alpha, theta)
    weights = w * np.sin(p) ** 2
    return QuadratureGrid("M", Points.from_spherical(np.ones_like(p), p, a, t), weights)


def grid_N(n_r=64, n_alpha=32, n_theta=64, axisymmetric=False, r_range=None):
    """Quadrature grid for the flat face, dV = r^2 sin(alpha); excludes r = 0."""
    lo, hi = r_range if r_range is not None else (0.0, 1.0)
    rad = gauss_legendre_on(lo, hi, n_r)
    if axisymmetric:
        r, w = rad
        weights = w * r ** 2 * SIGMA_AREA
        pts = Points.from_spherical(r, np.full_like(r, 0.5 * math.pi), np.full_like(r, 0.5 * math.pi), np.zeros_like(r))
        return QuadratureGrid("N", pts, weights, axisymmetric=True)
    ca, wa = gauss_legendre(n_alpha)
    alpha = (np.arccos(ca), wa)
    theta = trapezoid_periodic(n_theta)
    (r, a, t), w = _tensor(rad, alpha, theta)
    weights = w * r ** 2
    pts = Points.from_spherical(r, np.full_like(r, 0.5 * math.pi), a, t)
    return QuadratureGrid("N", pts, weights)


def grid_Sigma(n_alpha=32, n_theta=64):
    """Quadrature grid for the corner two-sphere, dsigma = sin(alpha)."""
    ca, wa = gauss_legendre(n_alpha)
    alpha = (np.arccos(ca), wa)
    theta = trapezoid_periodic(n_theta)
    (a, t), w = _tensor(alpha, theta)
    pts = Points.from_spherical(np.ones_like(a), np.full_like(a, 0.5 * math.pi), a, t)
    return QuadratureGrid("Sigma", pts, weights=w)


def make_grid(region, axisymmetric=False, **kwargs):
    builders = {"X": grid_X, "M": grid_M, "N": grid_N, "Sigma": grid_Sigma}
    if region not in builders:
        raise ValueError(f"unknown region {region!r}")
    if region == "Sigma":
        return builders[region](**kwargs)
    return builders[region](axisymmetric=axisymmetric, **kwargs)


def integrate(f, grid, chunk=65536):
    """Quadrature sum of ``f`` over ``grid`` with a fixed summation order.

    ``f`` may be a callable accepting :class:`Points` (or anything with an
    ``eval(points)`` method).  Non-finite values abort with the offending
    node reported.
    """
    evaluate = f.eval if hasattr(f, "eval") else f
    pts, w = grid.points, grid.weights
    n = len(pts)
    partials = []
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        sub = Points.from_spherical(*(c[start:stop] for c in pts.sph))
        vals = np.asarray(evaluate(sub), dtype=float)
        if not np.all(np.isfinite(vals)):
            i = int(np.argmin(np.isfinite(vals)))
            node = sub.point(i)
            raise ValueError(
                f"non-finite integrand value {vals[i]} at node "
                f"(rho={node.rho}, phi={node.phi}, alpha={node.alpha}, theta={node.theta})")
        partials.append(float(np.dot(vals, w[start:stop])))
    return math.fsum(partials)
