import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cornerq import biharmonic as B, fields as F, harmonics as H
from cornerq.geometry import Points

PI = math.pi


def pts_on_M(phis):
    phis = np.asarray(phis, dtype=float)
    return Points.from_spherical(np.ones_like(phis), phis, PI / 2, 0.0)


def pts_on_N(rhos):
    rhos = np.asarray(rhos, dtype=float)
    return Points.from_spherical(rhos, np.full_like(rhos, PI / 2), PI / 2, 0.0)


CORNER = Points.from_spherical(np.array([1.0]), np.array([PI / 2]),
                               np.array([1.0]), np.array([0.5]))


def test_fd_weights_exact_on_polynomials():
    nodes = np.array([-2.5, -1.0, 0.5, 1.5, 3.0, 4.0]) * 1e-3
    w = F.fd_weights(2e-4, nodes, 2)
    for deg in range(4):
        vals = nodes ** deg
        d1 = np.dot(w[1], vals)
        d2 = np.dot(w[2], vals)
        x = 2e-4
        assert_allclose(d1, deg * x ** max(deg - 1, 0) if deg else 0.0, atol=1e-10)
        assert_allclose(d2, deg * (deg - 1) * x ** max(deg - 2, 0) if deg >= 2 else 0.0,
                        atol=1e-9)


def test_interior_derivatives_exact_on_quartics():
    fld = F.CallableField(lambda p: p.rho ** 4 * np.cos(p.phi) ** 0,
                          depends_alpha=False, depends_theta=False)
    pts = Points.from_spherical(np.array([0.5]), np.array([0.8]), 0.5, 0.5)
    lap = F.laplacian4(fld, pts)
    assert_allclose(lap, 24 * 0.25, rtol=1e-9)  # Δ rho^4 = 24 rho^2


def test_mu_examples():
    f11 = F.SeriesField([(B.BasisTerm(4, 1), 1.0)])
    f2 = F.SeriesField([(B.BasisTerm(4, 2), 1.0)])
    phis = np.linspace(0.2, 1.3, 5)
    assert np.all(F.apply_mu("M", f11, pts_on_M(phis)) == 0.0)
    assert_allclose(F.apply_mu("M", f2, pts_on_M(phis)),
                    -2 * H.zonal(4, phis), rtol=1e-13)
    # mu_N(rho cos phi) = sin(phi) = 1 on the flat face
    zc = F.CallableField(lambda p: p.rho * np.cos(p.phi),
                         depends_alpha=False, depends_theta=False)
    got = F.apply_mu("N", zc, pts_on_N(np.array([0.3, 0.7])))
    assert_allclose(got, [1.0, 1.0], rtol=1e-9)


def test_mu_n_undefined_at_origin():
    with pytest.raises(ValueError, match="origin"):
        F.apply_mu("N", F.ConstField(1.0), pts_on_N(np.array([0.0])))


def test_p3m_examples():
    phis = np.linspace(0.15, 1.4, 6)
    f21 = F.SeriesField([(B.BasisTerm(2, 1), 1.0)])
    assert_allclose(F.apply_p3m(f21, pts_on_M(phis)), 48 * H.zonal(2, phis), rtol=1e-13)
    fk2 = F.SeriesField([(B.BasisTerm(5, 2), 1.0)])
    assert np.all(F.apply_p3m(fk2, pts_on_M(phis)) == 0.0)
    assert np.all(F.apply_p2(F.ConstField(4.2), CORNER) == 0.0)


def test_p3n_examples():
    rhos = np.linspace(0.1, 0.9, 5)
    f12 = F.SeriesField([(B.BasisTerm(1, 2), 1.0)])
    assert_allclose(F.apply_p3n(f12, pts_on_N(rhos)), np.full(5, 24 / PI), rtol=1e-13)
    for k in (0, 2, 6):
        fld = F.SeriesField([(B.BasisTerm(k, 1), 1.0)])
        assert np.all(F.apply_p3n(fld, pts_on_N(rhos)) == 0.0)
    f31 = F.SeriesField([(B.BasisTerm(3, 1), 1.0)])
    expected = -15 * (2 - 6 * rhos ** 2) * (4 / PI)
    assert_allclose(F.apply_p3n(f31, pts_on_N(rhos)), expected, rtol=1e-12)


def test_p2_examples():
    zc = F.CallableField(lambda p: p.rho * np.cos(p.phi),
                         depends_alpha=False, depends_theta=False)
    assert_allclose(F.apply_p2(zc, CORNER), [-2.0], rtol=1e-8)
    # family-by-family closed forms
    for k in (1, 3, 5):
        fam1 = F.SeriesField([(B.BasisTerm(k, 1), 1.0)])
        assert_allclose(F.apply_p2(fam1, CORNER), [0.0], atol=1e-12)
        fam2 = F.SeriesField([(B.BasisTerm(k, 2), 1.0)])
        assert_allclose(F.apply_p2(fam2, CORNER),
                        [4 * H.zonal_prime_equator(k)], rtol=1e-12)


def test_p4_examples():
    r4 = F.CallableField(lambda p: p.rho ** 4, depends_alpha=False, depends_theta=False)
    pts = Points.from_spherical(np.array([0.35, 0.6]), np.array([0.8, 1.0]), 0.7, 0.2)
    assert_allclose(F.apply_p4(r4, pts), [192.0, 192.0], rtol=1e-6)
    linear = F.CallableField(lambda p: p.x, depends_alpha=True, depends_theta=True)
    assert_allclose(F.apply_p4(linear, pts), [0.0, 0.0], atol=1e-7)


def test_analytic_vs_fd_agreement_table_rows():
    scheme = F.FDScheme(h=1.2e-3, n_nodes=8)
    phis = np.linspace(0.1, PI / 2 - 0.1, 7)
    rhos = np.linspace(0.1, 0.9, 5)
    for k in range(11):
        for fam in (1, 2):
            ana = F.SeriesField([(B.BasisTerm(k, fam), 1.0)])
            num = F.SeriesField([(B.BasisTerm(k, fam), 1.0)], force_numeric=True)
            for op, pts in ((F.apply_p3m, pts_on_M(phis)), (F.apply_p3n, pts_on_N(rhos)),
                            (lambda f, p, s: F.apply_mu("M", f, p, s), pts_on_M(phis)),
                            (lambda f, p, s: F.apply_mu("N", f, p, s), pts_on_N(rhos))):
                a = op(ana, pts, scheme)
                b = op(num, pts, scheme)
                scale = max(1.0, float(np.max(np.abs(a))))
                assert np.max(np.abs(a - b)) / scale < 1e-4, (k, fam, op)


def test_linearity():
    f = F.SeriesField([(B.BasisTerm(3, 1), 1.0)])
    g = F.SeriesField([(B.BasisTerm(2, 2), 1.0)])
    combo = 2.5 * f - 1.25 * g
    phis = np.linspace(0.3, 1.2, 4)
    lhs = F.apply_p3m(combo, pts_on_M(phis))
    rhs = 2.5 * F.apply_p3m(f, pts_on_M(phis)) - 1.25 * F.apply_p3m(g, pts_on_M(phis))
    assert_allclose(lhs, rhs, rtol=1e-13)
    # FD path linearity
    fn = F.CallableField(lambda p: np.exp(p.w) * np.cos(p.phi),
                         depends_alpha=False, depends_theta=False)
    gn = F.CallableField(lambda p: p.rho ** 2 * np.sin(p.phi) ** 2,
                         depends_alpha=False, depends_theta=False)
    combo_n = 0.7 * fn + 0.3 * gn
    a = F.apply_p3m(combo_n, pts_on_M(phis))
    b = 0.7 * F.apply_p3m(fn, pts_on_M(phis)) + 0.3 * F.apply_p3m(gn, pts_on_M(phis))
    assert_allclose(a, b, atol=1e-8)


def test_normals_coincide_on_corner():
    # mu_N = nu_M and mu_M = nu_N when restricted to the corner sphere
    fld = F.CallableField(lambda p: np.sin(p.rho) * np.cos(p.phi) ** 2 + p.w,
                          depends_alpha=False, depends_theta=False)
    pieces = F.corner_pieces(fld, CORNER)
    mu_m = F.apply_mu("M", fld, CORNER)
    nu_n_direct = F._axis_derivs(F._SphFn(fld), F._coords_from_points(CORNER),
                                 "rho", (1,), F.FDScheme())[1]
    assert_allclose(pieces["nu_m"], F.apply_nu("M", fld, CORNER), rtol=1e-10)
    assert_allclose(pieces["mu_n"], F.apply_nu("M", fld, CORNER), rtol=1e-8)
    assert_allclose(mu_m, -nu_n_direct, rtol=1e-10)


def test_corner_exclusion_band_enforced():
    base = F.SeriesField([(B.BasisTerm(2, 1), 1.0)])
    from cornerq import conformal as C
    comp = C.act(C.boost("z", 0.3), base)
    near_corner = pts_on_M(np.array([PI / 2 - 0.01]))
    with pytest.raises(ValueError, match="corner"):
        F.apply_p3m(comp, near_corner)
    near_rim = pts_on_N(np.array([0.99]))
    with pytest.raises(ValueError, match="corner"):
        F.apply_p3n(comp, near_rim)


def test_p4_requires_clearance():
    fld = F.CallableField(lambda p: p.w, depends_alpha=False, depends_theta=False)
    boundary_pts = Points.from_spherical(np.array([0.999]), np.array([0.5]), 0.5, 0.5)
    with pytest.raises(ValueError, match="clearance"):
        F.apply_p4(fld, boundary_pts)


def test_series_field_two_eval_paths_agree(rng):
    terms = [(B.BasisTerm(int(k), int(f)), float(c)) for k, f, c in
             zip(rng.integers(0, 12, 6), rng.integers(1, 3, 6), rng.normal(size=6))]
    fld = F.SeriesField(terms, const=0.3)
    pts = Points.from_spherical(rng.random(50), rng.random(50) * PI / 2,
                                rng.random(50) * PI, rng.random(50) * 2 * PI)
    via_terms = fld.eval(pts)
    via_entries = F.ZonalPowerField(list(zip(fld.ks, fld.ps, fld.cs)), const=0.3).eval(pts)
    assert_allclose(via_terms, via_entries, atol=1e-12)
