"""Chart Riemannian geometry of (M, h) and the deformation tensors of a wind W.

Index conventions: ``dh[i, j, k] = d_k h_ij``; ``gamma[i, j, k]`` is the
Christoffel symbol with upper index first; ``riemann_tensor`` returns
``R[k, r, i, j]`` with the index placement used for Killing fields,
``W_{i||j||k} = W_r R[k, r, i, j]``, which on a space of constant curvature
K reads ``R[k, r, i, j] = K (h_ki delta^r_j - h_kj delta^r_i)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .jetcalc import Expr, Jet, JetSpace, as_expr, eval_jet, evaluate, x_space
from .jetcalc import jet as J

MAX_DIM = 6


class SingularMetricError(ValueError):
    pass


class Field:
    """Tensor field on a chart; ``fn(x, space)`` returns its Taylor jet.

    ``x`` may carry leading batch axes; the jet then has shape
    ``batch + self.shape``.
    """

    def __init__(self, n: int, shape: tuple[int, ...],
                 fn: Callable[[np.ndarray, JetSpace], Jet],
                 values: Callable[[np.ndarray], np.ndarray] | None = None):
        if not 1 <= n <= MAX_DIM:
            raise ValueError(f"dimension must be between 1 and {MAX_DIM}, got {n}")
        self.n = n
        self.shape = shape
        self._fn = fn
        self._values = values

    def jet(self, x, space: JetSpace | int = 2) -> Jet:
        x = np.asarray(x, dtype=float)
        if isinstance(space, int):
            space = x_space(self.n, space)
        return self._fn(x, space)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._values is not None:
            return self._values(x)
        return self.jet(x, 0).value

    def derivs(self, x, order: int = 1) -> list[np.ndarray]:
        """[value, d value, d^2 value, ...]; derivative axes are appended last."""
        return jet_derivs(self.jet(x, order), self.n, order)

    @classmethod
    def from_exprs(cls, n: int, exprs, shape: tuple[int, ...] | None = None) -> "Field":
        arr = np.empty(np.shape(exprs) if shape is None else shape, dtype=object)
        flat = [as_expr(e, n) for e in np.asarray(exprs, dtype=object).ravel()]
        for k, e in enumerate(flat):
            arr.flat[k] = e
        field_shape = arr.shape

        def fn(x, space):
            jets = [eval_jet(e, x, space) for e in arr.ravel()]
            st = J.stack(jets, axis=-1) if jets else None
            return J.Jet(st.space, st.c.reshape(x.shape[:-1] + field_shape + (st.c.shape[-1],)))

        def values(x):
            vals = [np.broadcast_to(evaluate(e, x), x.shape[:-1]) for e in arr.ravel()]
            return np.stack(vals, axis=-1).reshape(x.shape[:-1] + field_shape)

        f = cls(n, field_shape, fn, values)
        f.exprs = arr
        return f


class MetricField(Field):
    @classmethod
    def from_exprs(cls, n: int, exprs, shape=None) -> "MetricField":
        exprs = np.asarray(exprs, dtype=object)
        if exprs.shape != (n, n):
            raise ValueError(f"metric needs {n}x{n} entries, got shape {exprs.shape}")
        parsed = np.empty((n, n), dtype=object)
        for i in range(n):
            for j in range(n):
                parsed[i, j] = as_expr(exprs[i, j], n)
        for i in range(n):
            for j in range(i):
                if parsed[i, j] != parsed[j, i]:
                    raise ValueError(f"metric entries ({i + 1},{j + 1}) and ({j + 1},{i + 1}) differ")
        return super().from_exprs(n, parsed)


class VectorField(Field):
    pass


def as_metric(f: Field) -> MetricField:
    m = MetricField(f.n, f.shape, f._fn, f._values)
    if hasattr(f, "exprs"):
        m.exprs = f.exprs
    return m


def jet_derivs(jet: Jet, n: int, order: int, offset: int = 0) -> list[np.ndarray]:
    """Value and symmetric derivative tensors (axes appended) of a jet.

    Derivatives are taken along variables ``offset .. offset + n - 1``, so
    ``offset = n`` reads the tangent-vector block of an (x, y) jet.
    """
    out = [jet.value]
    for k in range(1, order + 1):
        d = np.empty(jet.shape + (n,) * k)
        cache = {}
        for idx in itertools.product(range(n), repeat=k):
            key = tuple(sorted(idx))
            if key not in cache:
                cache[key] = jet.partial(*(offset + i for i in key))
            d[(Ellipsis,) + idx] = cache[key]
        out.append(d)
    return out


def check_positive_definite(h: np.ndarray, x, what: str = "metric") -> None:
    try:
        np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        raise SingularMetricError(
            f"{what} is not positive definite at x={np.asarray(x).tolist()}") from None


# connection and curvature ------------------------------------------------

@dataclass
class MetricJet:
    """h, its inverse and coordinate derivatives at one point."""

    h: np.ndarray
    hinv: np.ndarray
    dh: np.ndarray
    d2h: np.ndarray | None = None


def metric_jet(h: Field, x, order: int = 2) -> MetricJet:
    ds = h.derivs(x, order)
    check_positive_definite(ds[0], x)
    return MetricJet(ds[0], np.linalg.inv(ds[0]), ds[1], ds[2] if order >= 2 else None)


def _gamma_lower(dh):
    return 0.5 * (np.einsum("...lkj->...ljk", dh) + dh - np.einsum("...jkl->...ljk", dh))


def christoffel(h: Field, x, mj: MetricJet | None = None) -> np.ndarray:
    """Gamma^i_jk = 1/2 h^il (d_j h_lk + d_k h_lj - d_l h_jk), batched over ``x``."""
    mj = mj or metric_jet(h, x, 1)
    return np.einsum("...il,...ljk->...ijk", mj.hinv, _gamma_lower(mj.dh))


def christoffel_derivs(h: Field, x, mj: MetricJet | None = None):
    """(Gamma, dGamma) with dGamma[i, j, k, m] = d_m Gamma^i_jk."""
    mj = mj or metric_jet(h, x, 2)
    gl = _gamma_lower(mj.dh)
    d2 = mj.d2h
    dgl = 0.5 * (np.einsum("lkjm->ljkm", d2) + d2 - np.einsum("jklm->ljkm", d2))
    dhinv = -np.einsum("ia,abm,bl->ilm", mj.hinv, mj.dh, mj.hinv)
    gamma = np.einsum("il,ljk->ijk", mj.hinv, gl)
    dgamma = np.einsum("ilm,ljk->ijkm", dhinv, gl) + np.einsum("il,ljkm->ijkm", mj.hinv, dgl)
    return gamma, dgamma


def riemann_tensor(h: Field, x, mj: MetricJet | None = None) -> np.ndarray:
    """R[k, r, i, j] such that W_{i||j||k} = W_r R[k, r, i, j] for Killing W."""
    g, dg = christoffel_derivs(h, x, mj)
    # std[r, k, i, j] = R^r_{kij}, the commutator [nabla_i, nabla_j] acting on vectors
    std = (np.einsum("rjki->rkij", dg) - np.einsum("rikj->rkij", dg)
           + np.einsum("ris,sjk->rkij", g, g) - np.einsum("rjs,sik->rkij", g, g))
    return np.einsum("rkji->krij", std)


def sectional_curvature(h: Field, x, u, v, rm: np.ndarray | None = None,
                        hval: np.ndarray | None = None) -> float:
    if rm is None:
        rm = riemann_tensor(h, x)
    if hval is None:
        hval = h(x)
    u, v = np.asarray(u, float), np.asarray(v, float)
    # std R^r_{kij} = rm[k, r, j, i]
    num = np.einsum("rs,s,krji,k,i,j->", hval, u, rm, v, u, v)
    den = (u @ hval @ u) * (v @ hval @ v) - (u @ hval @ v) ** 2
    if den <= 1e-14 * (u @ hval @ u) * (v @ hval @ v):
        raise ValueError("degenerate plane: u and v are parallel")
    return float(num / den)


# wind tensors ------------------------------------------------------------

def lower(h: Field, w: Field) -> Field:
    """W_i = h_ij W^j as a field."""
    return Field(h.n, (h.n,), lambda x, sp: J.einsum("...ij,...j->...i", h.jet(x, sp), w.jet(x, sp)))


def raise_index(h: Field, w: Field) -> Field:
    def fn(x, sp):
        return J.einsum("...ij,...j->...i", J.inv(h.jet(x, sp)), w.jet(x, sp))
    return Field(h.n, (h.n,), fn)


def covariant_deriv(h: Field, W: Field, x, mj: MetricJet | None = None) -> np.ndarray:
    """T[i, j] = W_{i||j} = d_j W_i - Gamma^r_ij W_r, with W_i = h_ir W^r."""
    mj = mj or metric_jet(h, x, 1)
    wl, dwl = lower(h, W).derivs(x, 1)
    return dwl - np.einsum("rij,r->ij", christoffel(h, x, mj), wl)


def covariant_deriv_lowered(a: Field, b: Field, x, mj: MetricJet | None = None) -> np.ndarray:
    """b_{i;j} for a covector field b with respect to the metric a."""
    mj = mj or metric_jet(a, x, 1)
    bv, db = b.derivs(x, 1)
    return db - np.einsum("rij,r->ij", christoffel(a, x, mj), bv)


@dataclass
class NavDeform:
    R: np.ndarray        # symmetric part of W_{i||j}
    S: np.ndarray        # antisymmetric part
    S_mixed: np.ndarray  # S^i_j = h^ir S_rj
    S_cov: np.ndarray    # S_i = W^r S_ri


def nav_deform(h: Field, W: Field, x, mj: MetricJet | None = None) -> NavDeform:
    mj = mj or metric_jet(h, x, 1)
    T = covariant_deriv(h, W, x, mj)
    R = 0.5 * (T + T.T)
    S = 0.5 * (T - T.T)
    w = W(x)
    return NavDeform(R, S, mj.hinv @ S, np.einsum("r,ri->i", w, S))


def lie_derivative_metric(h: Field, W: Field, x) -> np.ndarray:
    """(L_W h)_ij = W^r d_r h_ij + h_rj d_i W^r + h_ir d_j W^r."""
    hv, dh = h.derivs(x, 1)
    w, dw = W.derivs(x, 1)
    return (np.einsum("r,ijr->ij", w, dh) + np.einsum("rj,ri->ij", hv, dw)
            + np.einsum("ir,rj->ij", hv, dw))


def second_covariant_deriv(h: Field, W: Field, x, mj: MetricJet | None = None) -> np.ndarray:
    """D[i, j, k] = W_{i||j||k}."""
    mj = mj or metric_jet(h, x, 2)
    g, dg = christoffel_derivs(h, x, mj)
    wl, dwl, d2wl = lower(h, W).derivs(x, 2)
    T = dwl - np.einsum("rij,r->ij", g, wl)
    dT = d2wl - np.einsum("rijk,r->ijk", dg, wl) - np.einsum("rij,rk->ijk", g, dwl)
    return dT - np.einsum("rik,rj->ijk", g, T) - np.einsum("rjk,ir->ijk", g, T)


def killing_lemma_residual(h: Field, W: Field, x) -> float:
    """max |W_{i||j||k} - W_r R[k, r, i, j]|."""
    mj = metric_jet(h, x, 2)
    D = second_covariant_deriv(h, W, x, mj)
    wl = mj.h @ W(x)
    rhs = np.einsum("r,krij->ijk", wl, riemann_tensor(h, x, mj))
    return float(np.max(np.abs(D - rhs)))


def metric_compatibility(h: Field, x) -> np.ndarray:
    """h_{ij||k}, which must vanish for the Levi-Civita connection."""
    mj = metric_jet(h, x, 1)
    g = christoffel(h, x, mj)
    return mj.dh - np.einsum("rik,rj->ijk", g, mj.h) - np.einsum("rjk,ir->ijk", g, mj.h)


def unit_residual(h: Field, W: Field, x) -> np.ndarray:
    """|W|_h - 1, vectorised over leading axes of ``x``."""
    hv, w = h(x), W(x)
    return np.sqrt(np.einsum("...ij,...i,...j->...", hv, w, w)) - 1.0


def metric_from_exprs(n: int, exprs: Sequence[Sequence[Expr | str]]) -> MetricField:
    return MetricField.from_exprs(n, exprs)


def vector_from_exprs(n: int, exprs: Sequence[Expr | str]) -> VectorField:
    f = Field.from_exprs(n, list(exprs))
    v = VectorField(n, f.shape, f._fn, f._values)
    v.exprs = f.exprs
    return v
