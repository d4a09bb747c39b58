import numpy as np
import pytest

from kropinalab import dynamics as D
from kropinalab.kropina import ConicDomainError, eval_F, from_navigation
from kropinalab.riemann import lie_derivative_metric
from kropinalab.suite import draw_samples


def tangent_samples(scene, points=5, tangents=4, seed=9):
    smp = draw_samples(scene, seed, points, tangents)
    return list(zip(smp.points, smp.tangents))


# Killing equations ---------------------------------------------------------

def test_killing_eq_flat_zero(scenes):
    for x, ys in tangent_samples(scenes["flat-const"]):
        assert np.all(D.killing_eq_F(scenes["flat-const"].nav, x, ys) == 0)


def test_killing_eq_hopf_and_shear(scenes):
    hopf, shear = scenes["hopf-s3"], scenes["shear"]
    vals = np.concatenate([D.killing_eq_F(hopf.nav, x, ys)
                           for x, ys in tangent_samples(hopf, 25, 4)])
    assert np.max(np.abs(vals)) <= 1e-8
    vals = np.concatenate([D.killing_eq_F(shear.nav, x, ys) for x, ys in tangent_samples(shear)])
    assert np.max(np.abs(vals)) >= 1e-2


@pytest.mark.parametrize("name", ["shear", "hopf-s3", "prod-r-s2"])
def test_flow_derivative_oracle(scenes, name):
    sc = scenes[name]
    k = sc.kropina
    for x, ys in tangent_samples(sc, 2, 2):
        kf = D.killing_eq_F(sc.nav, x, ys)
        ka = D.k_alpha(k.a, k.b, sc.nav.W, x, ys)
        for y, kfy, kay in zip(ys, kf, ka):
            dF = D.flow_derivative(sc.nav, lambda X, Y: eval_F(sc.nav, X, Y), x, y)
            assert abs(dF - kfy) <= 1e-5 * max(1.0, abs(kfy))
            da = D.flow_derivative(sc.nav, lambda X, Y: np.sqrt(Y @ k.a(X) @ Y), x, y)
            assert abs(da - kay) <= 1e-7 * max(1.0, abs(kay))


def test_k_alpha_shear_example(scenes):
    sc = scenes["shear"]
    k = sc.kropina
    assert D.k_alpha(k.a, k.b, sc.nav.W, [0.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0, abs=1e-15)


def test_k_alpha_k_beta_flat(scenes):
    sc = scenes["flat-const"]
    k = sc.kropina
    assert D.k_alpha(k.a, k.b, sc.nav.W, [0.1, 0.2], [1.0, 0.3]) == 0
    assert D.k_beta(k.a, k.b, sc.nav.W, [0.1, 0.2], [1.0, 0.3]) == 0


@pytest.mark.parametrize("name", ["shear", "hopf-s3", "prod-r-s2"])
def test_alpha_beta_killing_matches_direct(scenes, name):
    sc = scenes[name]
    m = D.AlphaBetaMetric.from_kropina(sc.kropina)
    for x, ys in tangent_samples(sc, 10, 10):
        np.testing.assert_allclose(m.F(x, ys), eval_F(sc.nav, x, ys), rtol=1e-12)
        ab = D.alpha_beta_killing_eq(m, sc.nav.W, x, ys)
        direct = D.killing_eq_F(sc.nav, x, ys)
        np.testing.assert_allclose(ab.eq413, direct, atol=1e-8 * max(1.0, np.max(np.abs(direct))))
        # the (4.14) form is the Kropina member rescaled by beta^2 / alpha
        al = np.sqrt(np.einsum("ij,ki,kj->k", sc.kropina.a(x), ys, ys))
        beta = ys @ sc.kropina.b(x)
        np.testing.assert_allclose(ab.eq414, ab.eq413 * beta ** 2 / al,
                                   atol=1e-10 * max(1.0, np.max(np.abs(ab.eq414))))


def test_alpha_beta_riemann_member_is_k_alpha(scenes):
    sc = scenes["shear"]
    k = sc.kropina
    m = D.AlphaBetaMetric(k.a, k.b, "riemann")
    for x, ys in tangent_samples(sc, 3, 3):
        ab = D.alpha_beta_killing_eq(m, sc.nav.W, x, ys)
        np.testing.assert_allclose(ab.eq413, D.k_alpha(k.a, k.b, sc.nav.W, x, ys))
        assert ab.eq414 is None


def test_alpha_beta_rejects_unknown_phi(scenes):
    k = scenes["shear"].kropina
    with pytest.raises(ValueError):
        D.AlphaBetaMetric(k.a, k.b, "matsumoto")


@pytest.mark.parametrize("name,verdict", [("hopf-s3", True), ("shear", False), ("prod-r-s2", True)])
def test_eq416(scenes, name, verdict):
    sc = scenes[name]
    pts = draw_samples(sc, 2, 8, 1).points
    e = D.eq416_test(sc.kropina, pts)
    assert e.verdict == verdict and e.consistent
    if verdict:
        np.testing.assert_allclose(e.fitted_scalars, 0.0, atol=1e-10)


# flows ---------------------------------------------------------------------

def test_flat_flow_translation(flat):
    tr = D.integrate_flow(flat, [0.0, 0.0], [0.3, 0.7], 1.0)
    np.testing.assert_allclose(tr.x[-1], [1.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(tr.y[-1], [0.3, 0.7])


def test_hopf_flow_is_isometry(scenes):
    sc = scenes["hopf-s3"]
    smp = draw_samples(sc, 4, 3, 3)
    x0 = np.repeat(smp.points, 3, axis=0)
    y0 = np.concatenate(smp.tangents)
    tr = D.integrate_flow(sc.nav, x0, y0, 1.0, 1e-3)
    F = eval_F(sc.nav, tr.x, tr.y)
    hyy = np.einsum("...ij,...i,...j->...", sc.nav.h(tr.x), tr.y, tr.y)
    assert np.max(np.abs(F - F[0])) <= 1e-6
    assert np.max(np.abs(hyy - hyy[0])) <= 1e-6


def test_shear_flow_is_not_isometry(scenes):
    sc = scenes["shear"]
    tr = D.integrate_flow(sc.nav, [0.0, 0.0], [0.6, 0.8], 1.0)
    assert abs(tr.y[-1] @ tr.y[-1] - 1.0) > 1e-3


def test_group_property_and_reversibility(scenes):
    sc = scenes["hopf-s3"]
    dt = 1e-2
    p = np.array([0.2, -0.1, 0.3]), np.array([0.3, 0.5, 0.4])
    a = D.flow_map(sc.nav, *p, 0.6, dt)
    b = D.flow_map(sc.nav, *D.flow_map(sc.nav, *p, 0.2, dt), 0.4, dt)
    assert np.max(np.abs(a[0] - b[0])) <= 10 * dt ** 2
    back = D.flow_map(sc.nav, *a, -0.6, dt)
    assert np.max(np.abs(back[0] - p[0])) <= 10 * dt ** 2 * 0.6
    assert np.max(np.abs(back[1] - p[1])) <= 10 * dt ** 2 * 0.6


def test_flow_first_order_expansion(scenes):
    sc = scenes["shear"]
    x, y = np.array([0.3, 0.1]), np.array([0.2, 0.9])
    t = 1e-4
    xb, yb = D.flow_map(sc.nav, x, y, t, t / 4)
    w, dw = sc.nav.W.derivs(x, 1)
    assert np.max(np.abs(xb - (x + t * w))) <= 10 * t ** 2
    assert np.max(np.abs(yb - (y + t * dw @ y))) <= 10 * t ** 2


def test_chart_exit_returns_partial(flat):
    with pytest.raises(D.ChartExitError) as exc:
        D.integrate_flow(flat, [0.0, 0.0], [0.0, 1.0], 5.0, 0.1, box=[[-1, 1], [-1, 1]])
    part = exc.value.partial
    assert part.x[-1][0] > 1.0 and part.x[-2][0] <= 1.0
    assert exc.value.time == pytest.approx(1.1)


def test_step_underflow(flat):
    with pytest.raises(D.StepUnderflowError):
        D.integrate_flow(flat, [0.0, 0.0], [0.0, 1.0], 1.0, 1e-9)


def test_lie_max_flags_shear(scenes):
    pts = draw_samples(scenes["shear"], 1, 4, 1).points
    assert D.lie_max(scenes["shear"].nav, pts) == pytest.approx(
        max(np.max(np.abs(lie_derivative_metric(scenes["shear"].nav.h, scenes["shear"].nav.W, p)))
            for p in pts))


# geodesics -----------------------------------------------------------------

def test_flat_geodesics_straight(flat):
    g = D.integrate_geodesic(flat, [0.0, 0.0], [1.0, 0.5], 1.0, 0.1)
    np.testing.assert_allclose(np.diff(g.v, axis=0), 0.0)
    np.testing.assert_allclose(g.x[-1], g.v[0] * 1.0, atol=1e-14)
    assert eval_F(flat, g.x[0], g.v[0]) == pytest.approx(1.0)


def test_prod_finsler_and_riemann_geodesics_coincide(prod):
    gf = D.integrate_geodesic(prod, [0.0, 1.5, 0.0], [1.0, 0.3, 0.2], 1.0, 5e-3)
    gr = D.integrate_geodesic(prod, [0.0, 1.5, 0.0], gf.v[0], 1.0, 5e-3, mode="riemann",
                              normalize=False)
    assert np.max(np.abs(gf.x - gr.x)) <= 1e-6
    assert np.ptp(gf.speed) <= 1e-6


def test_hopf_finsler_geodesic_differs(hopf):
    gf = D.integrate_geodesic(hopf, [0.1, 0.0, 0.0], [0.5, 0.3, 0.2], 1.0, 1e-2)
    gr = D.integrate_geodesic(hopf, [0.1, 0.0, 0.0], gf.v[0], 1.0, 1e-2, mode="riemann",
                              normalize=False)
    assert np.max(np.abs(gf.x - gr.x)) >= 1e-2
    assert np.ptp(gf.speed) <= 1e-6
    assert np.ptp(gr.speed) <= 1e-6


def test_geodesic_needs_admissible_start(shear):
    with pytest.raises(ConicDomainError):
        D.integrate_geodesic(shear, [0.0, 0.0], [-1.0, 0.2], 1.0, 1e-2)


def test_geodesic_chart_exit(flat):
    with pytest.raises(D.ChartExitError) as exc:
        D.integrate_geodesic(flat, [0.0, 0.0], [1.0, 0.0], 5.0, 0.1, box=[[-1, 1], [-1, 1]])
    assert exc.value.time == pytest.approx(0.6)


def test_geodesic_batch_matches_single(hopf):
    x0 = np.array([[0.1, 0.0, 0.0], [0.0, 0.2, -0.1]])
    y0 = np.array([[0.5, 0.3, 0.2], [0.1, 0.2, 0.9]])
    gb = D.integrate_geodesic(hopf, x0, y0, 0.05, 5e-3)
    for k in range(2):
        gs = D.integrate_geodesic(hopf, x0[k], y0[k], 0.05, 5e-3)
        np.testing.assert_allclose(gb.x[:, k], gs.x, rtol=1e-13, atol=1e-15)


def test_geodesic_image(flat, hopf, shear):
    g = D.integrate_geodesic(flat, [0.0, 0.0], [1.0, 0.5], 0.2, 1e-2)
    assert D.isometry_geodesic_test(flat, g, 0.5, 1e-2) <= 1e-12
    g = D.integrate_geodesic(hopf, [0.1, 0.0, 0.0], [0.5, 0.3, 0.2], 0.2)
    assert D.isometry_geodesic_test(hopf, g, 0.5) <= 1e-5
    g = D.integrate_geodesic(shear, [0.0, 0.0], [1.0, 0.5], 0.2)
    assert D.isometry_geodesic_test(shear, g, 0.5) >= 1e-2


def test_geodesic_csv(hopf):
    g = D.integrate_geodesic(hopf, [0.1, 0.0, 0.0], [0.5, 0.3, 0.2], 0.01, 5e-3)
    lines = g.to_csv().splitlines()
    assert lines[0] == "t,x1,x2,x3,y1,y2,y3,F"
    assert len(lines) == 4
    row = [float(v) for v in lines[1].split(",")]
    assert row[0] == 0.0 and row[-1] == pytest.approx(1.0)


def test_from_navigation_used_for_alpha_beta(scenes):
    k = from_navigation(scenes["hopf-s3"].nav)
    m = D.AlphaBetaMetric.from_kropina(k)
    assert m.phi == "kropina"
