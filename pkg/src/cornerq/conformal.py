"""The conformal group of the half-ball and its action on solutions.

Elements are pairs (L, e) of a time-orientation-preserving Lorentz matrix
L in O+(1,3) and an inversion exponent e in {0, 1}.  The Lorentz part acts
through the hyperboloid model of the ball: a point p is lifted to the
projective null/hyperboloid vector (1 + |p|^2, 2p), the block matrix
diag(L, 1) acts on the first four components, and the result is projected
back stereographically,

    p' = spatial / (T' + lambda),     lambda = 1 - |p|^2,

which is the Lorentz-invariant form of the Poincare-ball projection
X / (1 + t).  This projection (rather than the gnomonic X / t) is the one
that realizes the matrices as Euclidean-conformal maps of the ball, with
closed-form conformal factor

    Omega = (lambda + T) / (lambda + T').

The inversion exponent multiplies by the involution that swaps the two
boundary faces while fixing the corner pointwise; it commutes with the
whole Lorentz factor (both statements are covered by tests), so the group
law composes matrices and adds exponents mod 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.linalg import expm

from .fields import CompositeField
from .geometry import Points

MINKOWSKI = np.diag([-1.0, 1.0, 1.0, 1.0])
_AXES = {"x": 1, "y": 2, "z": 3}
_PLANES = {"xy": (1, 2), "yz": (2, 3), "xz": (1, 3), "zx": (3, 1), "yx": (2, 1), "zy": (3, 2)}


class LorentzError(ValueError):
    """Matrix fails the O+(1,3) requirements."""


def _check_lorentz(matrix, tol=1e-12):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (4, 4):
        raise LorentzError("expected a 4x4 matrix")
    defect = matrix.T @ MINKOWSKI @ matrix - MINKOWSKI
    if np.max(np.abs(defect)) > tol:
        raise LorentzError(f"metric defect {np.max(np.abs(defect)):.3e} exceeds {tol}")
    if matrix[0, 0] <= 0.0:
        raise LorentzError("matrix reverses time orientation")
    return matrix


@dataclass(frozen=True)
class ConformalElement:
    """An element of the half-ball conformal group: (Lorentz matrix, inversion bit)."""

    matrix: np.ndarray
    lambda_exp: int = 0

    def __post_init__(self):
        m = _check_lorentz(self.matrix)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "lambda_exp", int(self.lambda_exp) % 2)

    # -- group structure ----------------------------------------------------

    def __matmul__(self, other):
        return compose(self, other)

    def inverse(self):
        inv = MINKOWSKI @ self.matrix.T @ MINKOWSKI
        return ConformalElement(inv, self.lambda_exp)

    @property
    def is_identity(self):
        return self.lambda_exp == 0 and np.allclose(self.matrix, np.eye(4), atol=1e-14)

    # -- action on points ---------------------------------------------------

    def apply_points(self, points):
        x, y, z, w = (np.asarray(c, dtype=float) for c in points.cart)
        if self.lambda_exp:
            x, y, z, w = _inversion_cart(x, y, z, w)
        x, y, z, w, _ = _lorentz_step(self.matrix, x, y, z, w)
        return Points.from_cartesian(x, y, z, w)

    def conformal_factor(self, points):
        """Omega with T*(g) = Omega^2 g, accumulated through both factors."""
        x, y, z, w = (np.asarray(c, dtype=float) for c in points.cart)
        omega = np.ones_like(x)
        if self.lambda_exp:
            omega = _inversion_factor_cart(x, y, z, w)
            x, y, z, w = _inversion_cart(x, y, z, w)
        _, _, _, _, om2 = _lorentz_step(self.matrix, x, y, z, w)
        return omega * om2

    def log_jacobian(self, points):
        """log |det J| = 4 log Omega."""
        return 4.0 * np.log(self.conformal_factor(points))

    def to_dict(self):
        if self.lambda_exp and np.allclose(self.matrix, np.eye(4), atol=0.0):
            return {"type": "lambda"}
        d = {"type": "lorentz", "matrix": [[float(v) for v in row] for row in self.matrix]}
        if self.lambda_exp:
            d["lambda_exp"] = 1
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("type") == "lambda":
            return inversion_element()
        if d.get("type") == "lorentz":
            return cls(np.array(d["matrix"], dtype=float), d.get("lambda_exp", 0))
        raise ValueError(f"unknown transform record {d!r}")


def identity():
    return ConformalElement(np.eye(4), 0)


def inversion_element():
    return ConformalElement(np.eye(4), 1)


def boost(axis, rapidity):
    """Exponential of the standard boost generator along a spatial axis."""
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {sorted(_AXES)}")
    i = _AXES[axis]
    gen = np.zeros((4, 4))
    gen[0, i] = gen[i, 0] = 1.0
    return ConformalElement(expm(float(rapidity) * gen), 0)


def rotation(plane, angle):
    """Exponential of a spatial rotation generator, e.g. plane='xy'."""
    if plane not in _PLANES:
        raise ValueError(f"plane must be one of {sorted(_PLANES)}")
    i, j = _PLANES[plane]
    gen = np.zeros((4, 4))
    gen[i, j] = -1.0
    gen[j, i] = 1.0
    return ConformalElement(expm(float(angle) * gen), 0)


def compose(e1, e2):
    """Element of the map p -> e1(e2(p)).

    The inversion commutes with the Lorentz factor under this action, so
    the semidirect structure carries a trivial twist and the law is just
    (L1 L2, exp1 + exp2 mod 2).
    """
    return ConformalElement(e1.matrix @ e2.matrix, e1.lambda_exp ^ e2.lambda_exp)


# ---------------------------------------------------------------------------
# The two building blocks: face-swapping inversion and the Lorentz action
# ---------------------------------------------------------------------------

def _inversion_cart(x, y, z, w):
    denom = x * x + y * y + z * z + (w + 1.0) ** 2
    rho2 = x * x + y * y + z * z + w * w
    return 2.0 * x / denom, 2.0 * y / denom, 2.0 * z / denom, (1.0 - rho2) / denom


def _inversion_factor_cart(x, y, z, w):
    return 2.0 / (x * x + y * y + z * z + (w + 1.0) ** 2)


def inversion_map(points):
    """The conformal involution swapping the two faces and fixing the corner."""
    x, y, z, w = _inversion_cart(*points.cart)
    return Points.from_cartesian(x, y, z, w)


def inversion_conformal_factor(points):
    """Omega = 2 / (1 + 2 rho cos(phi) + rho^2); >= 1/2 everywhere on the half-ball."""
    return _inversion_factor_cart(*points.cart)


def _lorentz_step(matrix, x, y, z, w):
    """Apply diag(L, 1) in the projective hyperboloid lift; returns map + factor."""
    r2 = x * x + y * y + z * z + w * w
    lam = np.clip(1.0 - r2, 0.0, None)
    t = 1.0 + r2
    vec = np.stack([t, 2.0 * x, 2.0 * y, 2.0 * z])
    out = np.tensordot(matrix, vec, axes=(1, 0))
    denom = out[0] + lam
    factor = (t + lam) / denom
    return out[1] / denom, out[2] / denom, out[3] / denom, 2.0 * w / denom, factor


def mobius_apply(element, points):
    """Image of points under the element; preserves the half-ball and its strata."""
    return element.apply_points(points)


def jacobian_det(element, points, method="analytic", h=1e-5):
    """|det of the Jacobian| of the point map; equals the conformal factor ^ 4.

    ``method="fd"`` differentiates the map componentwise (central stencils,
    shifted one-sided near the flat face) as an independent oracle.
    """
    if method == "analytic":
        return element.conformal_factor(points) ** 4
    if method != "fd":
        raise ValueError("method must be 'analytic' or 'fd'")
    cart = np.stack(points.cart)                     # (4, P)
    n = cart.shape[1]
    out = np.empty(n)
    for p in range(n):
        base = cart[:, p]
        if math.sqrt(float(np.dot(base, base))) > 1.0 - 3.0 * h:
            raise ValueError("finite-difference Jacobian needs clearance from the sphere")
        jac = np.empty((4, 4))
        for j in range(4):
            lo = 0.0 if j == 3 else None             # w stays nonnegative
            steps = np.array([-2.0, -1.0, 1.0, 2.0]) * h
            nodes = base[j] + steps
            if lo is not None and nodes[0] < lo:
                nodes = nodes + (lo - nodes[0])
            from .fields import fd_weights
            wts = fd_weights(base[j], nodes, 1)[1]
            shifted = np.repeat(base[:, None], 4, axis=1)
            shifted[j, :] = nodes
            img = element.apply_points(Points.from_cartesian(*shifted))
            img_cart = np.stack(img.cart)            # (4, 4 nodes)
            jac[:, j] = img_cart @ wts
        out[p] = abs(np.linalg.det(jac))
    return out


def act(element, field_obj):
    """Solution-generating action: u -> u o T + log|J_T|^{1/4}.

    Nested actions flatten through the chain rule, so the log-Jacobian is
    always evaluated in closed form for the composed element.
    """
    if isinstance(field_obj, CompositeField) and field_obj.logjac_weight == 0.25:
        return CompositeField(field_obj.base, compose(field_obj.transform, element), 0.25)
    return CompositeField(field_obj, element, 0.25)


def pullback(element, field_obj):
    """Plain precomposition u o T, without the Jacobian term."""
    return CompositeField(field_obj, element, 0.0)
