import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cornerq import conformal as C, construct as K, fields as F
from cornerq.geometry import Points

PI = math.pi


def random_interior(rng, n, margin=0.1):
    v = rng.normal(size=(n, 4))
    v /= np.linalg.norm(v, axis=1)[:, None]
    r = (1.0 - margin) * rng.random(n) ** 0.25
    p = v * r[:, None]
    p[:, 3] = np.abs(p[:, 3])
    return Points.from_cartesian(p[:, 0], p[:, 1], p[:, 2], p[:, 3])


def test_inversion_point_values():
    img = C.inversion_map(Points.from_cartesian(0, 0, 0, 0))
    assert_allclose(np.stack(img.cart).ravel(), [0, 0, 0, 1], atol=1e-16)
    img = C.inversion_map(Points.from_cartesian(1, 0, 0, 0))
    assert_allclose(np.stack(img.cart).ravel(), [1, 0, 0, 0], atol=1e-16)


def test_inversion_involution(rng):
    pts = random_interior(rng, 100, margin=0.0)
    back = C.inversion_map(C.inversion_map(pts))
    assert np.max(np.abs(np.stack(back.cart) - np.stack(pts.cart))) < 1e-13


def test_inversion_swaps_faces():
    phis = np.linspace(0.1, 1.5, 8)
    on_m = Points.from_spherical(np.ones_like(phis), phis, 0.7, 0.3)
    img = C.inversion_map(on_m)
    assert np.max(np.abs(img.w)) < 1e-15            # lands on the flat face
    rhos = np.linspace(0.1, 0.9, 8)
    on_n = Points.from_spherical(rhos, np.full_like(rhos, PI / 2), 0.7, 0.3)
    img = C.inversion_map(on_n)
    assert np.max(np.abs(img.rho - 1.0)) < 1e-14    # lands on the round face


def test_inversion_conformal_factor_values():
    assert_allclose(C.inversion_conformal_factor(Points.from_cartesian(0, 0, 0, 0)), [2.0])
    sigma = Points.from_spherical(np.ones(5), np.full(5, PI / 2),
                                  np.linspace(0.3, 2.8, 5), 0.0)
    assert_allclose(C.inversion_conformal_factor(sigma), np.ones(5), rtol=1e-15)


def test_conformality_jacobian(rng):
    pts = random_interior(rng, 100)
    for elem in (C.inversion_element(), C.boost("z", 0.7), C.boost("x", 0.4),
                 C.rotation("xy", 1.1), C.compose(C.boost("y", 0.5), C.inversion_element())):
        fd = C.jacobian_det(elem, pts, method="fd")
        analytic = C.jacobian_det(elem, pts)
        assert np.max(np.abs(fd - analytic) / analytic) < 1e-6


def test_full_jacobian_is_conformal(rng):
    # J^T J = Omega^2 Id by explicit finite differences
    e = C.boost("z", 0.8)
    h = 1e-5
    base = np.array([0.2, -0.1, 0.3, 0.25])
    jac = np.empty((4, 4))
    for j in range(4):
        ep, em = base.copy(), base.copy()
        ep[j] += h
        em[j] -= h
        ip = np.stack(e.apply_points(Points.from_cartesian(*ep)).cart)[:, 0]
        im = np.stack(e.apply_points(Points.from_cartesian(*em)).cart)[:, 0]
        jac[:, j] = (ip - im) / (2 * h)
    om = e.conformal_factor(Points.from_cartesian(*base))[0]
    assert np.max(np.abs(jac.T @ jac / om ** 2 - np.eye(4))) < 1e-5


def test_lorentz_validation():
    with pytest.raises(C.LorentzError):
        C.ConformalElement(np.eye(4) * 1.001)
    flip = np.diag([-1.0, 1.0, 1.0, 1.0])
    with pytest.raises(C.LorentzError, match="orientation"):
        C.ConformalElement(flip)


def test_group_axioms_matrix_level(rng):
    els = [C.boost("z", 0.4), C.rotation("yz", 0.8),
           C.compose(C.boost("x", 0.3), C.inversion_element())]
    eta = C.MINKOWSKI
    for e in els:
        assert np.max(np.abs(e.matrix.T @ eta @ e.matrix - eta)) < 1e-12
        prod = C.compose(e, e.inverse())
        assert prod.is_identity
    a, b, c = els
    left = C.compose(C.compose(a, b), c)
    right = C.compose(a, C.compose(b, c))
    assert np.max(np.abs(left.matrix - right.matrix)) < 1e-13
    assert left.lambda_exp == right.lambda_exp


def test_action_is_pointwise_group_action(rng):
    pts = random_interior(rng, 50)
    e1, e2 = C.boost("z", 0.4), C.rotation("xz", 0.9)
    lhs = C.compose(e1, e2).apply_points(pts)
    rhs = e1.apply_points(e2.apply_points(pts))
    assert np.max(np.abs(np.stack(lhs.cart) - np.stack(rhs.cart))) < 1e-10


def test_inversion_commutes_with_lorentz(rng):
    # the semidirect twist is trivial under the conformal action
    pts = random_interior(rng, 60)
    for e in (C.boost("z", 0.6), C.boost("x", 0.9), C.rotation("yz", 1.1)):
        p1 = C.inversion_map(e.apply_points(pts))
        p2 = e.apply_points(C.inversion_map(pts))
        assert np.max(np.abs(np.stack(p1.cart) - np.stack(p2.cart))) < 1e-13


def test_boost_moves_origin_along_axis():
    # conformal (stereographic) realization: origin -> tanh(s/2) e_axis
    for s in (0.25, 0.5, 1.0):
        img = C.boost("z", s).apply_points(Points.from_cartesian(0, 0, 0, 0))
        assert_allclose(float(img.z[0]), math.tanh(s / 2), rtol=1e-14)
        assert_allclose([float(img.x[0]), float(img.y[0]), float(img.w[0])], [0, 0, 0],
                        atol=1e-16)


def test_identity_action():
    pts = Points.from_spherical(np.array([0.3, 0.9]), np.array([0.4, 1.2]), 0.5, 0.7)
    img = C.identity().apply_points(pts)
    assert_allclose(np.stack(img.cart), np.stack(pts.cart), atol=1e-15)


def test_sigma_and_strata_preserved(rng):
    sigma = Points.from_spherical(np.ones(10), np.full(10, PI / 2),
                                  rng.random(10) * PI, rng.random(10) * 2 * PI)
    for e in (C.boost("z", 0.8), C.boost("x", 0.5), C.inversion_element(),
              C.compose(C.rotation("xy", 0.4), C.boost("z", 0.6))):
        img = e.apply_points(sigma)
        assert np.max(np.abs(img.rho - 1.0)) < 1e-13
        assert np.max(np.abs(img.w)) < 1e-13


def test_face_decomposition_by_lambda_exponent():
    # exactly one of: the flat-face center lands in N (exponent 0) or in M
    center = Points.from_cartesian(0, 0, 0, 0)
    for e in (C.boost("z", 0.7), C.rotation("xy", 0.5)):
        img = e.apply_points(center)
        assert abs(float(img.w[0])) < 1e-14          # stays on the flat face
    for e in (C.inversion_element(), C.compose(C.boost("z", 0.7), C.inversion_element())):
        img = e.apply_points(center)
        assert abs(float(img.rho[0]) - 1.0) < 1e-14  # lands on the round face


def test_jacobian_values():
    assert_allclose(C.jacobian_det(C.identity(),
                                   Points.from_cartesian(0.2, 0.1, 0.0, 0.3)), [1.0])
    assert_allclose(C.jacobian_det(C.inversion_element(),
                                   Points.from_cartesian(0, 0, 0, 0)), [16.0], rtol=1e-14)


def test_jacobian_cocycle(rng):
    pts = random_interior(rng, 40)
    e1, e2 = C.boost("z", 0.5), C.compose(C.rotation("xz", 0.7), C.inversion_element())
    j12 = C.jacobian_det(C.compose(e1, e2), pts)
    chain = C.jacobian_det(e1, e2.apply_points(pts)) * C.jacobian_det(e2, pts)
    assert np.max(np.abs(j12 - chain) / chain) < 1e-12


def test_act_identity_and_corner_value(base_512):
    pts = Points.from_spherical(np.array([0.3, 0.8]), np.array([0.5, 1.1]), 0.4, 0.2)
    acted = C.act(C.identity(), base_512)
    assert_allclose(acted.eval(pts), base_512.eval(pts), rtol=1e-14)
    # the inversion keeps the corner value at zero: log |J|^(1/4) = 0 there
    sigma = Points.from_spherical(np.ones(4), np.full(4, PI / 2),
                                  np.linspace(0.4, 2.6, 4), 0.3)
    acted_l = C.act(C.inversion_element(), base_512)
    assert np.max(np.abs(acted_l.eval(sigma))) < 1e-13


def test_act_flattens_and_respects_cocycle(base_512):
    e1, e2 = C.boost("z", 0.3), C.rotation("xy", 0.8)
    nested = C.act(e2, C.act(e1, base_512))
    assert isinstance(nested.base, type(base_512))
    direct = C.act(C.compose(e1, e2), base_512)
    pts = Points.from_spherical(np.array([0.45, 0.7]), np.array([0.6, 1.2]), 0.9, 1.3)
    assert_allclose(nested.eval(pts), direct.eval(pts), rtol=1e-12)


def test_area_covariance(rng):
    from cornerq.verify import corner_area_integral
    for s in (0.25, 0.5, 1.0):
        val = corner_area_integral(C.boost("z", s))
        assert abs(val - 4 * PI) < 1e-8
    assert abs(corner_area_integral(C.inversion_element()) - 4 * PI) < 1e-12


def test_element_serialization_roundtrip():
    for e in (C.inversion_element(), C.boost("y", 0.77),
              C.compose(C.boost("z", 0.2), C.inversion_element())):
        back = C.ConformalElement.from_dict(e.to_dict())
        assert np.max(np.abs(back.matrix - e.matrix)) < 1e-15
        assert back.lambda_exp == e.lambda_exp
