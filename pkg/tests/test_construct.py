import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cornerq import conformal as C, construct as K, fields as F, harmonics as H
from cornerq.geometry import Points

PI = math.pi
PHIS = np.linspace(0.05, PI / 2, 11)
RHOS = np.linspace(0.05, 1.0, 11)
PTS_M = Points.from_spherical(np.ones_like(PHIS), PHIS, PI / 2, 0.0)
PTS_N = Points.from_spherical(RHOS, np.full_like(RHOS, PI / 2), PI / 2, 0.0)


def test_seed_flux_data(base_512):
    u1 = K.seed_field(256)
    assert_allclose(F.apply_mu("M", u1, PTS_M), -np.cos(PHIS) / 8.0, atol=1e-15)
    assert_allclose(F.apply_mu("N", u1, PTS_N), np.full_like(RHOS, 0.125), atol=1e-14)
    assert np.all(F.apply_p3n(u1, PTS_N) == 0.0)


def test_base_solution_exact_data(base_512):
    w1 = base_512
    assert_allclose(F.apply_mu("M", w1, PTS_M), PI / 4 * np.cos(PHIS), atol=1e-13)
    assert_allclose(F.apply_mu("N", w1, PTS_N), np.full_like(RHOS, -PI / 4), atol=1e-13)
    assert np.all(F.apply_p3n(w1, PTS_N) == 0.0)
    corner = Points.from_spherical(np.array([1.0]), np.array([PI / 2]), 0.3, 0.1)
    assert_allclose(F.apply_p2(w1, corner), [PI / 2], rtol=1e-13)


def test_base_solution_round_face_flux(base_512):
    vals = F.apply_p3m(base_512, PTS_M)
    assert np.max(np.abs(vals + 2.0)) < 5e-3


def test_corner_value_vanishes(base_512):
    corner = Points.from_spherical(np.array([1.0]), np.array([PI / 2]), 0.9, 2.0)
    assert abs(base_512.eval(corner)[0]) < 1e-13
    assert abs(base_512.corner_value()) < 1e-15


def test_seed_corner_constant_closed_form():
    # truncated corner sums approach (log 2 - 2/3) / pi
    exact = (math.log(2.0) - 2.0 / 3.0) / PI
    assert abs(K.seed_corner_value(100000) - exact) < 1e-15
    assert abs(K.seed_corner_value(4096) - exact) < 1e-12


def test_seed_eval_paths_agree(rng):
    u1 = K.seed_field(512)
    rho = np.concatenate([rng.random(150), [1.0, 0.999, 0.0, 1e-5, 0.95]])
    phi = np.concatenate([rng.random(150) * PI / 2, [PI / 2, 1.3, 0.2, 0.0, 1.5707]])
    pts = Points.from_spherical(rho, phi, 0.7, 0.2)
    direct = u1.eval_direct(pts)
    sbp = u1.eval_summed_by_parts(pts)
    closed = u1.eval(pts)
    assert np.max(np.abs(direct - sbp)) < 1e-13
    # closed form carries the (tiny) tail beyond the truncation
    assert np.max(np.abs(direct - closed)) < 1e-9


def test_solve_fullball_single_modes():
    # constant data c: u = -(c/2)(rho^2 - 1)
    c = 0.37
    u = K.solve_fullball({0: c * PI})
    pts = Points.from_spherical(np.array([0.0, 0.4, 1.0]), np.array([0.3, 1.0, 0.2]), 0.5, 0.1)
    assert_allclose(u.eval(pts), -(c / 2) * (pts.rho ** 2 - 1.0), rtol=1e-14)
    assert_allclose(F.apply_mu("M", u, PTS_M), np.full_like(PHIS, c), rtol=1e-13)
    # data f_2: u = -(1/2)(rho^2-1) rho^2 f_2 and the third-order image vanishes
    u2 = K.solve_fullball({2: 1.0})
    assert np.all(F.apply_p3m(u2, PTS_M) == 0.0)
    assert_allclose(F.apply_mu("M", u2, PTS_M), H.zonal(2, PHIS), rtol=1e-13)


def test_solve_fullball_vanishes_on_sphere_exactly(rng):
    c = np.zeros(11)
    c[1::2] = rng.normal(size=5)
    u = K.solve_fullball(c)
    sphere = Points.from_spherical(np.ones(40), rng.random(40) * PI / 2,
                                   rng.random(40) * PI, rng.random(40) * 2 * PI)
    assert np.all(u.eval(sphere) == 0.0)


def test_solve_fullball_zero_data():
    u = K.solve_fullball(np.zeros(8))
    pts = Points.from_spherical(np.array([0.5]), np.array([0.7]), 0.1, 0.1)
    assert u.eval(pts)[0] == 0.0


def test_solve_fullball_rejects_mixed_parity():
    with pytest.raises(ValueError, match="parity"):
        K.solve_fullball({1: 1.0, 2: 0.5})


def test_maximum_principle(rng):
    phis_fine = np.linspace(0.0, PI / 2, 400)
    for _ in range(50):
        c = np.zeros(11)
        parity = int(rng.integers(0, 2))
        ks = np.arange(parity, 11, 2)
        c[ks] = rng.normal(size=ks.size)
        u = K.solve_fullball(c)
        data_sup = np.max(np.abs(K._zonal_sum(c, phis_fine)))
        n = 10000
        pts = Points.from_spherical(rng.random(n) ** 0.25, rng.random(n) * PI / 2,
                                    rng.random(n) * PI, rng.random(n) * 2 * PI)
        assert np.max(np.abs(u.eval(pts))) <= data_sup + 1e-10


def test_extract_zonal_coeffs_roundtrip():
    c_true = {0: 0.5, 2: -0.25, 6: 0.1}
    fn = lambda phi: sum(v * H.zonal(k, phi) for k, v in c_true.items())
    c = K.extract_zonal_coeffs(fn, parity=0, kmax=16)
    for k, v in c_true.items():
        assert_allclose(c[k], v, rtol=1e-12)
    others = [k for k in range(17) if k not in c_true]
    assert np.max(np.abs(c[others])) < 1e-12


def test_boundary_data_constraints():
    good = K.BoundaryData.from_sources("pi/4*cos(phi)", "-pi/4")
    r_m, r_n = good.constraint_residuals()
    assert abs(r_m) < 1e-10 and abs(r_n) < 1e-10
    bad = K.BoundaryData.from_sources("cos(phi)", "-pi/4")
    with pytest.raises(K.ConstraintError) as err:
        bad.validate()
    assert abs(err.value.residual_m - (1.0 - PI / 4)) < 1e-8


def test_boundary_data_from_table():
    xs = np.linspace(0.0, PI / 2, 200)
    data = K.DataFn((xs, PI / 4 * np.cos(xs)), "phi", (0.0, PI / 2))
    assert data.kind == "table"
    assert abs(-data.derivative(PI / 2) - PI / 4) < 1e-4


def test_pullback_trivial_and_constant_family():
    phi_n = K.DataFn("-pi/4", "r", (0.0, 1.0))
    phat = K.pullback_flat_data(phi_n)
    assert np.max(np.abs(phat(np.linspace(0, PI / 2, 50)))) < 1e-14
    # the family that cancels the conformal factor: -pi/4 + 2c/(1+r^2)
    c = 0.31
    phi_n2 = K.DataFn(f"-pi/4 + 2*{c}/(1+r^2)", "r", (0.0, 1.0))
    phat2 = K.pullback_flat_data(phi_n2)
    vals = phat2(np.linspace(0, PI / 2, 50))
    assert_allclose(vals, np.full(50, c), rtol=1e-12)


def test_pullback_rejects_constraint_violation():
    phi_n = K.DataFn("-pi/4 + (1+r^2)/2*0.2", "r", (0.0, 1.0))
    with pytest.raises(K.ConstraintError):
        K.pullback_flat_data(phi_n)


def test_build_solution_reduces_to_base():
    data = K.BoundaryData.from_sources("pi/4*cos(phi)", "-pi/4")
    sol = K.build_solution(data, n_terms=128)
    assert np.sum(sol.v1 ** 2) == 0.0
    assert np.sum(sol.v2 ** 2) == 0.0


def test_build_solution_constant_shift():
    data = K.BoundaryData.from_sources("pi/4*cos(phi)+1", "-pi/4")
    sol = K.build_solution(data, n_terms=128)
    assert np.sum(sol.v1 ** 2) == 0.0
    nz = np.nonzero(sol.v2)[0]
    assert 0 in nz
    assert_allclose(sol.v2[0], PI, rtol=1e-12)
    # v2 = -(c0/2)(rho^2 - 1) f_0 = -(1/2)(rho^2 - 1) for c = 1
    omega = sol.field()
    assert np.max(np.abs(F.apply_mu("M", omega, PTS_M) - data.psi(PHIS))) < 1e-10


def test_build_solution_flat_face_family():
    c = 0.2
    data = K.BoundaryData.from_sources("pi/4*cos(phi)", f"-pi/4 + 2*{c}/(1+r^2)")
    sol = K.build_solution(data, n_terms=128)
    assert_allclose(sol.v1[0], c * PI, rtol=1e-10)
    assert np.max(np.abs(sol.v1[1:])) < 1e-10
    omega = sol.field()
    rho = np.linspace(0.1, 0.9, 7)
    pts_n = Points.from_spherical(rho, np.full_like(rho, PI / 2), PI / 2, 0.0)
    assert np.max(np.abs(F.apply_mu("N", omega, pts_n) - data.phi_n(rho))) < 1e-8


def test_build_solution_generic_data():
    data = K.BoundaryData.from_sources("pi/4*cos(phi) + 0.2*cos(phi)^2",
                                       "-pi/4 + 2*0.1/(1+r^2) + 0.3*(1-r^2)^2")
    sol = K.build_solution(data, n_terms=256)
    omega = sol.field()
    phi = np.linspace(0.1, 1.4, 9)
    pts_m = Points.from_spherical(np.ones_like(phi), phi, PI / 2, 0.0)
    assert np.max(np.abs(F.apply_mu("M", omega, pts_m) - data.psi(phi))) < 1e-10
    rho = np.linspace(0.1, 0.9, 9)
    pts_n = Points.from_spherical(rho, np.full_like(rho, PI / 2), PI / 2, 0.0)
    assert np.max(np.abs(F.apply_mu("N", omega, pts_n) - data.phi_n(rho))) < 1e-5
    # recorded diagnostics are honest
    assert sol.tolerances["mu_n_sup_residual"] < 1e-4
    corner = Points.from_spherical(np.array([1.0]), np.array([PI / 2]), 0.4, 0.2)
    assert abs(omega.eval(corner)[0]) < 1e-12


def test_build_solution_rejects_bad_data():
    data = K.BoundaryData.from_sources("cos(phi)", "-pi/4")
    with pytest.raises(K.ConstraintError):
        K.build_solution(data, n_terms=64)


def test_corner_constraints_values(base_512):
    got = K.check_corner_constraints(base_512)
    assert_allclose(got, (PI / 4, PI / 4), rtol=1e-12)
    zero = F.ConstField(0.0)
    assert K.check_corner_constraints(zero) == (0.0, 0.0)


def test_corner_constraints_fd_for_pipeline():
    data = K.BoundaryData.from_sources("pi/4*cos(phi)", "-pi/4 + 2*0.15/(1+r^2)")
    sol = K.build_solution(data, n_terms=256)
    got = K.check_corner_constraints(sol)
    assert abs(got[0] - PI / 4) < 1e-3
    assert abs(got[1] - PI / 4) < 1e-3


def test_solution_json_roundtrip_and_transforms():
    data = K.BoundaryData.from_sources("pi/4*cos(phi)+1", "-pi/4")
    sol = K.build_solution(data, n_terms=64)
    sol2 = sol.transformed(C.boost("z", 0.5))
    text = sol2.to_json()
    back = K.Solution.from_json(text)
    assert back.omega1_terms == 64
    assert_allclose(back.v2, sol.v2)
    assert back.transforms == [C.boost("z", 0.5).to_dict()]
    assert json.loads(text)["data"]["psi"] == sol.data["psi"]
    # reconstructed field evaluates
    pts = Points.from_spherical(np.array([0.4]), np.array([0.7]), 0.3, 0.2)
    assert np.isfinite(back.field().eval(pts)[0])


def test_evenness_propagation(rng):
    # solver output on even data is invariant under phi -> pi - phi
    c = np.zeros(9)
    c[0:9:2] = rng.normal(size=5)
    u = K.solve_fullball(c)
    rho = 0.3 + 0.6 * rng.random(20)
    phi = rng.random(20) * PI / 2
    up = u.eval(Points.from_spherical(rho, phi, 0.5, 0.1))
    down = u.eval(Points.from_spherical(rho, PI - phi, 0.5, 0.1))
    assert_allclose(up, down, atol=1e-13)
    # hence flat-face normal data and third-order image vanish
    assert np.max(np.abs(F.apply_mu("N", u, PTS_N))) == 0.0
    assert np.max(np.abs(F.apply_p3n(u, PTS_N))) == 0.0
