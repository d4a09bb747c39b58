import numpy as np
import pytest
from hypothesis import given, strategies as st

from kropinalab.kropina import (ConicDomainError, KropinaData, NavigationData, NavigationError,
                                eval_F, flag_curvature, from_navigation, fundamental_tensor,
                                killing_spray, mean_berwald, regauge, riemann_spray, spray,
                                to_navigation)
from kropinalab.riemann import Field, christoffel, metric_from_exprs, vector_from_exprs
from kropinalab.sampling import SplitMix64, sample_tangents, sample_transverse

from .oracles import richardson_partial


def kdata(n, a, b, kappa=None):
    kap = Field.from_exprs(n, np.array(kappa, dtype=object), shape=()) if kappa else None
    return KropinaData(metric_from_exprs(n, a), vector_from_exprs(n, b), kap)


def samples(nav, box, count, per_point, seed=3):
    rng = SplitMix64(seed)
    box = np.asarray(box, float)
    for _ in range(count):
        x = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.uniforms(len(box))
        yield x, sample_tangents(rng, nav, x, per_point)


# navigation transform ------------------------------------------------------

def test_to_navigation_unit_b():
    nav = to_navigation(kdata(2, [["1", "0"], ["0", "1"]], ["2", "0"]))
    np.testing.assert_allclose(nav.h([0.3, 0.1]), np.eye(2))
    np.testing.assert_allclose(nav.W([0.3, 0.1]), [1.0, 0.0])


def test_to_navigation_scaled_a():
    k = kdata(2, [["4", "0"], ["0", "4"]], ["4", "0"])
    assert k.b_squared([0.0, 0.0]) == pytest.approx(4.0)
    nav = to_navigation(k)
    np.testing.assert_allclose(nav.h([0.0, 0.0]), 4 * np.eye(2))
    np.testing.assert_allclose(nav.W([0.0, 0.0]), [0.5, 0.0])
    assert nav.unit_residual([0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)


def test_to_navigation_rescales_when_b_short():
    k = kdata(2, [["1", "0"], ["0", "1"]], ["1", "0"])
    nav = to_navigation(k)
    np.testing.assert_allclose(nav.h([0.0, 0.0]), 4 * np.eye(2))
    np.testing.assert_allclose(nav.W_flat([0.0, 0.0]), [2.0, 0.0])
    back = from_navigation(nav)
    for y in ([1.0, 0.2], [0.5, -0.4]):
        assert back.F([0.0, 0.0], y) == pytest.approx(k.F([0.0, 0.0], y), rel=1e-14)


def test_from_navigation(flat, hopf, rng):
    k = from_navigation(flat)
    np.testing.assert_allclose(k.b([0.2, 0.4]), [2.0, 0.0])
    k = from_navigation(hopf)
    pts = rng.uniform(-0.5, 0.5, (20, 3))
    assert np.max(np.abs(k.gauge_residual(pts))) <= 1e-12
    hv = hopf.h(pts[0])
    np.testing.assert_allclose(k.b(pts[0]), 2 * hv @ hopf.W(pts[0]))


def test_from_navigation_rejects_long_wind():
    nav = NavigationData(metric_from_exprs(2, [["1", "0"], ["0", "1"]]),
                         vector_from_exprs(2, ["2", "0"]))
    with pytest.raises(NavigationError, match=r"unit-length violation at \(0,0\): \|W\|=2"):
        from_navigation(nav, points=[[0.0, 0.0]])


def test_regauge_preserves_F(hopf, rng):
    kap = Field.from_exprs(3, np.array("x1*x2 + sin(x3)", dtype=object), shape=())
    k = regauge(hopf, kap)
    k0 = from_navigation(hopf)
    for x, ys in samples(hopf, [[-0.5, 0.5]] * 3, 5, 4):
        np.testing.assert_allclose(k.F(x, ys), k0.F(x, ys), rtol=1e-12)
        np.testing.assert_allclose(k.F(x, ys), eval_F(hopf, x, ys), rtol=1e-12)
        assert abs(k.gauge_residual(x)) <= 1e-10
        back = to_navigation(k)
        np.testing.assert_allclose(back.h(x), hopf.h(x), rtol=1e-12)
        np.testing.assert_allclose(back.W(x), hopf.W(x), atol=1e-12)


# the metric ----------------------------------------------------------------

def test_eval_F_flat_examples(flat):
    assert eval_F(flat, [0, 0], [1.0, 0.0]) == pytest.approx(0.5)
    assert eval_F(flat, [0, 0], [1.0, 1.0]) == pytest.approx(1.0)
    with pytest.raises(ConicDomainError):
        eval_F(flat, [0, 0], [-1.0, 0.0])


@given(lam=st.floats(0.01, 100.0))
def test_F_positively_homogeneous(hopf, lam):
    x = np.array([0.1, -0.2, 0.3])
    y = np.array([0.4, 0.1, 0.6])
    assert eval_F(hopf, x, lam * y) == pytest.approx(lam * eval_F(hopf, x, y), rel=1e-13)


def test_fundamental_tensor_against_finite_differences(flat):
    x, y = np.zeros(2), np.array([1.0, 0.0])
    g = fundamental_tensor(flat, x, y)
    F2 = lambda yy: eval_F(flat, x, yy) ** 2  # noqa: E731
    fd = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            idx = tuple(int(i == k) + int(j == k) for k in range(2))
            fd[i, j] = 0.5 * richardson_partial(F2, y, idx)
    np.testing.assert_allclose(g, fd, atol=1e-8)
    np.testing.assert_allclose(np.linalg.eigvalsh(g), np.linalg.eigvalsh(fd), atol=1e-8)
    assert np.all(np.linalg.eigvalsh(g) > 0)


def test_fundamental_tensor_homogeneity_and_euler(hopf):
    for x, ys in samples(hopf, [[-0.5, 0.5]] * 3, 10, 10):
        g = fundamental_tensor(hopf, x, ys)
        np.testing.assert_allclose(fundamental_tensor(hopf, x, 2 * ys), g, rtol=1e-12, atol=1e-12)
        gyy = np.einsum("kij,ki,kj->k", g, ys, ys)
        np.testing.assert_allclose(gyy, eval_F(hopf, x, ys) ** 2, rtol=1e-12)


# spray ---------------------------------------------------------------------

@pytest.mark.parametrize("name", ["flat-const", "shear", "hopf-s3", "prod-r-s2"])
def test_spray_euler_identities(scenes, name):
    sc = scenes[name]
    for x, ys in samples(sc.nav, sc.box, 10, 20):
        sj = spray(sc.nav, x, ys)
        scale = max(1.0, np.max(np.abs(sj.G)))
        np.testing.assert_allclose(np.einsum("kij,kj->ki", sj.G_j, ys), 2 * sj.G,
                                   atol=1e-10 * scale)
        np.testing.assert_allclose(np.einsum("kijl,kl->kij", sj.G_jk, ys), sj.G_j,
                                   atol=1e-10 * max(1.0, np.max(np.abs(sj.G_j))))
        np.testing.assert_allclose(np.einsum("kijlm,km->kijl", sj.G_jkl, ys), 0.0,
                                   atol=1e-10 * max(1.0, np.max(np.abs(sj.G_jk))))
        np.testing.assert_allclose(sj.G_jk, np.swapaxes(sj.G_jk, -1, -2), atol=1e-12 * scale)


def test_spray_against_finite_differences_of_euler_lagrange(shear):
    # G^i from the Euler-Lagrange form, every derivative by Richardson differences
    x, y = np.array([0.2, -0.1]), np.array([0.7, 0.5])
    L = lambda xy: eval_F(shear, xy[:2], xy[2:]) ** 2  # noqa: E731
    xy = np.concatenate([x, y])
    e = lambda *ks: tuple(sum(1 for k in ks if k == m) for m in range(4))  # noqa: E731
    g = np.array([[0.5 * richardson_partial(L, xy, e(2 + i, 2 + j)) for j in range(2)]
                  for i in range(2)])
    mixed = np.array([[richardson_partial(L, xy, e(2 + l, m)) for m in range(2)] for l in range(2)])
    dx = np.array([richardson_partial(L, xy, e(l)) for l in range(2)])
    G = 0.25 * np.linalg.solve(g, mixed @ y - dx)
    np.testing.assert_allclose(spray(shear, x, y).G, G, atol=1e-7)


def test_flat_spray_zero(flat):
    sj = spray(flat, [0.1, 0.2], [[1.0, 0.3]])
    for arr in (sj.G, sj.G_j, sj.G_jk, sj.G_jkl):
        assert np.all(np.abs(arr) <= 1e-15)


def test_killing_closed_form(hopf, shear):
    for x, ys in samples(hopf, [[-0.5, 0.5]] * 3, 5, 10):
        np.testing.assert_allclose(killing_spray(hopf, x, ys), spray(hopf, x, ys).G, atol=1e-8)
    worst = max(np.max(np.abs(killing_spray(shear, x, ys) - spray(shear, x, ys).G))
                for x, ys in samples(shear, [[-1, 1]] * 2, 5, 5))
    assert worst > 1e-2


def test_berwald_fixtures_match_levi_civita(prod, flat):
    for nav, box in ((prod, [[-1, 1], [1, 2.1], [-1, 1]]), (flat, [[-1, 1]] * 2)):
        for x, ys in samples(nav, box, 5, 5):
            sj = spray(nav, x, ys)
            assert np.max(np.abs(sj.G_jkl)) <= 1e-8
            gamma = christoffel(nav.h, x)
            np.testing.assert_allclose(sj.G_jk, np.broadcast_to(gamma, sj.G_jk.shape), atol=1e-8)
            np.testing.assert_allclose(sj.G, riemann_spray(nav.h, x, ys), atol=1e-12)


def test_hopf_weakly_berwald_not_berwald(hopf):
    gmax = 0.0
    for x, ys in samples(hopf, [[-0.5, 0.5]] * 3, 10, 10):
        sj = spray(hopf, x, ys)
        assert np.max(np.abs(sj.mean)) <= 1e-7
        gamma = christoffel(hopf.h, x)
        np.testing.assert_allclose(np.einsum("krjr->kj", sj.G_jk),
                                   np.broadcast_to(np.einsum("rjr->j", gamma), (len(ys), 3)),
                                   atol=1e-8)
        gmax = max(gmax, np.max(np.abs(sj.G_jkl)))
    assert gmax > 1e-2


def test_shear_not_weakly_berwald(shear):
    worst = max(np.max(np.abs(mean_berwald(shear, x, ys)))
                for x, ys in samples(shear, [[-1, 1]] * 2, 5, 5))
    assert worst >= 1e-2


# flag curvature ------------------------------------------------------------

def test_flag_curvature(flat, hopf, prod):
    rng = SplitMix64(11)
    for x, ys in samples(flat, [[-1, 1]] * 2, 3, 3):
        np.testing.assert_allclose(flag_curvature(flat, x, ys, sample_transverse(rng, ys)), 0.0,
                                   atol=1e-14)
    Ks = [flag_curvature(hopf, x, ys, sample_transverse(rng, ys))
          for x, ys in samples(hopf, [[-0.5, 0.5]] * 3, 10, 5)]
    np.testing.assert_allclose(np.concatenate(Ks), 1.0, atol=1e-5)
    Kp = np.concatenate([flag_curvature(prod, x, ys, sample_transverse(rng, ys))
                         for x, ys in samples(prod, [[-1, 1], [1, 2.1], [-1, 1]], 5, 5)])
    assert np.ptp(Kp) > 0.1


def test_flag_curvature_degenerate(hopf):
    y = np.array([0.2, 0.1, 0.9])
    with pytest.raises(ValueError, match="degenerate"):
        flag_curvature(hopf, [0, 0, 0], y, 2 * y)
