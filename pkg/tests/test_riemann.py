import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kropinalab.riemann import (SingularMetricError, christoffel, covariant_deriv,
                                killing_lemma_residual, lie_derivative_metric, metric_compatibility,
                                metric_from_exprs, metric_jet, nav_deform, riemann_tensor,
                                second_covariant_deriv, sectional_curvature, vector_from_exprs)

from .oracles import richardson_partial

unit_cube = st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3).map(np.array)


def fd_christoffel(h, x):
    n = len(x)
    dh = np.empty((n, n, n))
    for k in range(n):
        idx = tuple(1 if m == k else 0 for m in range(n))
        for i in range(n):
            for j in range(n):
                dh[i, j, k] = richardson_partial(lambda p: h(p)[i, j], x, idx)
    gl = 0.5 * (np.einsum("lkj->ljk", dh) + dh - np.einsum("jkl->ljk", dh))
    return np.einsum("il,ljk->ijk", np.linalg.inv(h(x)), gl)


def test_flat_christoffel_zero(flat):
    assert np.all(christoffel(flat.h, [0.3, -0.1]) == 0)


def test_hopf_christoffel_vanishes_at_origin(hopf):
    np.testing.assert_allclose(christoffel(hopf.h, [0.0, 0.0, 0.0]), 0.0, atol=1e-15)


def test_prod_christoffel_hand_formula(prod):
    g = christoffel(prod.h, [0.0, math.pi / 2, 0.0])
    assert abs(g[2, 1, 2]) < 1e-15 and abs(g[1, 2, 2]) < 1e-15
    g = christoffel(prod.h, [0.0, math.pi / 4, 0.0])
    assert g[1, 2, 2] == pytest.approx(-0.5)
    assert g[2, 1, 2] == pytest.approx(1.0)        # cot(pi/4)


def test_christoffel_against_finite_differences(hopf):
    x = np.array([0.2, -0.3, 0.1])
    np.testing.assert_allclose(christoffel(hopf.h, x), fd_christoffel(hopf.h, x), atol=1e-9)


def test_riemann_against_finite_differences_of_christoffel(hopf):
    x = np.array([0.1, 0.25, -0.2])
    g = christoffel(hopf.h, x)
    dg = np.empty(g.shape + (3,))
    for m in range(3):
        idx = tuple(1 if k == m else 0 for k in range(3))
        for a in np.ndindex(g.shape):
            dg[a + (m,)] = richardson_partial(lambda p: christoffel(hopf.h, p)[a], x, idx)
    std = (np.einsum("rjki->rkij", dg) - np.einsum("rikj->rkij", dg)
           + np.einsum("ris,sjk->rkij", g, g) - np.einsum("rjs,sik->rkij", g, g))
    np.testing.assert_allclose(riemann_tensor(hopf.h, x), np.einsum("rkji->krij", std), atol=1e-8)


def test_shear_covariant_derivative(shear):
    T = covariant_deriv(shear.h, shear.W, [0.0, 0.0])
    np.testing.assert_allclose(T, [[0.0, 0.0], [1.0, 0.0]], atol=1e-15)
    nd = nav_deform(shear.h, shear.W, [0.0, 0.0])
    assert nd.R[0, 1] == nd.R[1, 0] == pytest.approx(0.5)
    assert nd.S[0, 1] == pytest.approx(-0.5)
    assert lie_derivative_metric(shear.h, shear.W, [0.0, 0.0])[0, 1] == pytest.approx(1.0)


@given(x=unit_cube)
def test_hopf_killing_and_deform(hopf, x):
    T = covariant_deriv(hopf.h, hopf.W, x)
    assert np.max(np.abs(T + T.T)) <= 1e-9
    assert np.max(np.abs(lie_derivative_metric(hopf.h, hopf.W, x))) <= 1e-9
    nd = nav_deform(hopf.h, hopf.W, x)
    assert np.max(np.abs(nd.S)) > 0.1
    np.testing.assert_allclose(nd.S_cov, 0.0, atol=1e-12)


@pytest.mark.parametrize("name", ["flat-const", "shear", "hopf-s3", "prod-r-s2"])
def test_lie_derivative_is_twice_R(scenes, name, rng):
    nav = scenes[name].nav
    box = scenes[name].box
    for x in box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((5, len(box))):
        L = lie_derivative_metric(nav.h, nav.W, x)
        R = nav_deform(nav.h, nav.W, x).R
        np.testing.assert_allclose(L, 2 * R, atol=1e-10 * max(1.0, np.max(np.abs(L))))
        # unit length: W^r W_{r||i} = 0
        T = covariant_deriv(nav.h, nav.W, x)
        assert np.max(np.abs(nav.W(x) @ T)) <= 1e-9
        np.testing.assert_allclose(metric_compatibility(nav.h, x), 0.0, atol=1e-10)
        g = christoffel(nav.h, x)
        np.testing.assert_allclose(g, np.swapaxes(g, 1, 2), atol=1e-15)


def test_bianchi_and_hopf_sectional_curvature(hopf, rng):
    for _ in range(10):
        x = rng.uniform(-0.5, 0.5, 3)
        rm = riemann_tensor(hopf.h, x)
        # antisymmetric in the last pair, first Bianchi on std R^r_{kij}
        np.testing.assert_allclose(rm, -np.swapaxes(rm, 2, 3), atol=1e-10)
        std = np.einsum("krji->rkij", rm)
        bianchi = std + np.einsum("rkij->rijk", std) + np.einsum("rkij->rjki", std)
        np.testing.assert_allclose(bianchi, 0.0, atol=1e-10)
        for _ in range(5):
            u, v = rng.normal(size=3), rng.normal(size=3)
            assert sectional_curvature(hopf.h, x, u, v, rm) == pytest.approx(1.0, abs=1e-7)


def test_prod_sectional_curvature_blocks(prod):
    x = np.array([0.1, 1.2, -0.4])
    assert sectional_curvature(prod.h, x, [0, 1, 0], [0, 0, 1]) == pytest.approx(1.0, abs=1e-10)
    assert sectional_curvature(prod.h, x, [1, 0, 0], [0, 1, 1]) == pytest.approx(0.0, abs=1e-10)


def test_flat_curvature_zero(flat):
    assert np.all(riemann_tensor(flat.h, [0.1, 0.2]) == 0)
    assert np.all(second_covariant_deriv(flat.h, flat.W, [0.1, 0.2]) == 0)


def test_killing_lemma(hopf, shear, rng):
    for x in rng.uniform(-0.5, 0.5, (5, 3)):
        assert killing_lemma_residual(hopf.h, hopf.W, x) <= 1e-8
    worst = max(killing_lemma_residual(shear.h, shear.W, x) for x in rng.uniform(-1, 1, (10, 2)))
    assert worst >= 1e-2


def test_singular_metric_rejected():
    h = metric_from_exprs(2, [["x1", "0"], ["0", "1"]])
    with pytest.raises(SingularMetricError):
        metric_jet(h, [-1.0, 0.0])


def test_asymmetric_metric_rejected():
    with pytest.raises(ValueError):
        metric_from_exprs(2, [["1", "x1"], ["0", "1"]])


def test_vector_field_values():
    W = vector_from_exprs(2, ["cos(x1)", "sin(x1)"])
    np.testing.assert_allclose(W([0.0, 3.0]), [1.0, 0.0])
