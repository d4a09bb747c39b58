"""Kropina metrics F = alpha^2 / beta and their navigation data (h, W).

The two presentations are tied together by

    h_ij = e^kappa a_ij,   2 W_i = e^kappa b_i,   e^kappa b^2 = 4,

and in navigation form the metric reads F = h(y, y) / (2 h(W, y)), which
does not depend on the gauge function kappa.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jetcalc import Jet, JetSpace, make_space, x_space
from .jetcalc import jet as J
from .riemann import (Field, MetricField, as_metric, christoffel, jet_derivs, lower,
                      metric_jet, nav_deform)

ADMISSIBLE_EPS = 1e-9
UNIT_TOL = 1e-8
MAX_COND = 1e12


class ConicDomainError(ValueError):
    """Tangent vector outside the half-space W_0 > 0 where F is defined."""


class NavigationError(ValueError):
    pass


# presentations -------------------------------------------------------------

def _scalar_field(n: int, fn) -> Field:
    return Field(n, (), fn)


def _constant_field(n: int, value: float) -> Field:
    def fn(x, sp):
        return Jet.constant(sp, np.full(x.shape[:-1], value))
    return Field(n, (), fn, lambda x: np.full(x.shape[:-1], value))


@dataclass
class KropinaData:
    """alpha = sqrt(a_ij y^i y^j), beta = b_i y^i, plus the conformal exponent kappa.

    ``kappa=None`` means kappa is defined through e^kappa = 4 / b^2.
    """

    a: MetricField
    b: Field
    kappa: Field | None = None

    @property
    def n(self) -> int:
        return self.a.n

    @property
    def b_squared(self) -> Field:
        a, b = self.a, self.b
        return _scalar_field(self.n, lambda x, sp: J.jsum(
            J.einsum("...ij,...j->...i", J.inv(a.jet(x, sp)), b.jet(x, sp)) * b.jet(x, sp), -1))

    @property
    def kappa_field(self) -> Field:
        if self.kappa is not None:
            return self.kappa
        b2 = self.b_squared
        return _scalar_field(self.n, lambda x, sp: np.log(4.0) - J.log(b2.jet(x, sp)))

    def b_sharp(self) -> Field:
        a, b = self.a, self.b
        return Field(self.n, (self.n,), lambda x, sp: J.einsum(
            "...ij,...j->...i", J.inv(a.jet(x, sp)), b.jet(x, sp)))

    def alpha(self, x, y) -> np.ndarray:
        return np.sqrt(np.einsum("...ij,...i,...j->...", self.a(x), y, y))

    def beta(self, x, y) -> np.ndarray:
        return np.einsum("...i,...i->...", self.b(x), y)

    def F(self, x, y) -> np.ndarray:
        x, y = np.asarray(x, float), np.asarray(y, float)
        beta = self.beta(x, y)
        if np.any(beta <= ADMISSIBLE_EPS):
            raise ConicDomainError(f"beta = {np.min(beta):.3g} <= 0: y outside the conic domain")
        return np.einsum("...ij,...i,...j->...", self.a(x), y, y) / beta

    def gauge_residual(self, x) -> np.ndarray:
        """e^kappa b^2 - 4 at ``x`` (vectorised)."""
        x = np.asarray(x, float)
        return np.exp(self.kappa_field(x)) * self.b_squared(x) - 4.0

    def check(self, points, tol: float = 1e-10) -> None:
        pts = np.atleast_2d(np.asarray(points, float))
        b2 = self.b_squared(pts)
        if np.any(b2 <= 0.0):
            k = int(np.argmin(b2))
            raise NavigationError(f"b vanishes at x={pts[k].tolist()}")
        res = np.abs(self.gauge_residual(pts))
        if np.max(res) > tol:
            k = int(np.argmax(res))
            raise NavigationError(
                f"e^kappa b^2 = 4 violated at x={pts[k].tolist()}: residual {res[k]:.3g}")


@dataclass
class NavigationData:
    h: MetricField
    W: Field

    @property
    def n(self) -> int:
        return self.h.n

    @property
    def W_flat(self) -> Field:
        return lower(self.h, self.W)

    def unit_residual(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        w = self.W(x)
        return np.sqrt(np.einsum("...ij,...i,...j->...", self.h(x), w, w)) - 1.0

    def check_unit(self, points, tol: float = UNIT_TOL) -> None:
        pts = np.atleast_2d(np.asarray(points, float))
        res = np.abs(self.unit_residual(pts))
        k = int(np.argmax(res))
        if res[k] > tol:
            norm = float(self.unit_residual(pts[k])) + 1.0
            raise NavigationError(
                f"unit-length violation at {_fmt_point(pts[k])}: |W|={norm:.6g}")

    def W0(self, x, y) -> np.ndarray:
        return np.einsum("...ij,...i,...j->...", self.h(x), self.W(x), y)

    def F(self, x, y) -> np.ndarray:
        return eval_F(self, x, y)


def _fmt_point(p) -> str:
    return "(" + ",".join(f"{v:g}" for v in np.asarray(p)) + ")"


def to_navigation(k: KropinaData) -> NavigationData:
    """h = e^kappa a, W^i = 1/2 b^i (index raised with a)."""
    kap = k.kappa_field
    a = k.a

    def h_fn(x, sp):
        return J.exp(kap.jet(x, sp))[..., None, None] * a.jet(x, sp)

    def h_val(x):
        return np.exp(kap(x))[..., None, None] * a(x)

    h = MetricField(k.n, (k.n, k.n), h_fn, h_val)
    bs = k.b_sharp()
    W = Field(k.n, (k.n,), lambda x, sp: bs.jet(x, sp) * 0.5)
    return NavigationData(h, W)


def from_navigation(nav: NavigationData, points=None, tol: float = UNIT_TOL) -> KropinaData:
    """Gauge kappa = 0: a = h, b = 2 W_flat.  ``points`` are checked for |W|_h = 1."""
    if points is not None:
        nav.check_unit(points, tol)
    wf = nav.W_flat
    b = Field(nav.n, (nav.n,), lambda x, sp: wf.jet(x, sp) * 2.0)
    return KropinaData(nav.h, b, _constant_field(nav.n, 0.0))


def regauge(nav: NavigationData, kappa: Field) -> KropinaData:
    """Kropina data in the gauge ``kappa``: a = e^-kappa h, b = 2 e^-kappa W_flat."""
    h, wf = nav.h, nav.W_flat

    def a_fn(x, sp):
        return J.exp(-kappa.jet(x, sp))[..., None, None] * h.jet(x, sp)

    def b_fn(x, sp):
        return J.exp(-kappa.jet(x, sp))[..., None] * wf.jet(x, sp) * 2.0

    a = MetricField(nav.n, (nav.n, nav.n), a_fn)
    return KropinaData(a, Field(nav.n, (nav.n,), b_fn), kappa)


# the metric ----------------------------------------------------------------

def eval_F(nav: NavigationData, x, y) -> np.ndarray:
    """F = h_00 / (2 W_0), vectorised over leading axes of ``y`` (and ``x``)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    hv, w = nav.h(x), nav.W(x)
    h00 = np.einsum("...ij,...i,...j->...", hv, y, y)
    w0 = np.einsum("...ij,...i,...j->...", hv, w, y)
    if np.any(w0 <= ADMISSIBLE_EPS):
        raise ConicDomainError(f"W_0 = {np.min(w0):.3g} <= 0: y outside the conic domain")
    return h00 / (2.0 * w0)


def admissible(nav: NavigationData, x, y, eps: float = ADMISSIBLE_EPS) -> np.ndarray:
    return nav.W0(np.asarray(x, float), np.asarray(y, float)) > eps


@dataclass
class _XYJets:
    space: JetSpace
    y: Jet
    F: Jet
    F2: Jet


def _xy_jets(nav: NavigationData, x, y, dx: int, dy: int, dtot: int) -> _XYJets:
    n = nav.n
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    w0 = nav.W0(x, y)
    if np.any(w0 <= ADMISSIBLE_EPS):
        raise ConicDomainError(f"W_0 = {np.min(w0):.3g} <= 0: y outside the conic domain")
    sp = make_space(n, n, dx, dy, dtot)
    xs = x_space(n, min(dx, dtot))
    h = nav.h.jet(x, xs).to(sp)
    wl = nav.W_flat.jet(x, xs).to(sp)
    yj = J.stack([Jet.variable(sp, n + i, y[..., i]) for i in range(n)], axis=-1)
    h00 = J.jsum(J.einsum("...ij,...j->...i", h, yj) * yj, -1)
    W0 = J.jsum(wl * yj, -1)
    F = h00 / (W0 * 2.0)
    return _XYJets(sp, yj, F, F * F)


def fundamental_tensor(nav: NavigationData, x, y) -> np.ndarray:
    """g_ij = 1/2 d^2 F^2 / dy^i dy^j, vectorised over leading axes of ``y``."""
    n = nav.n
    jets = _xy_jets(nav, x, y, 0, 2, 2)
    g = 0.5 * jet_derivs(jets.F2, n, 2, offset=n)[2]
    _check_condition(g)
    return g


def _check_condition(g: np.ndarray) -> None:
    cond = np.linalg.cond(g)
    if np.any(~np.isfinite(cond)) or np.any(cond > MAX_COND):
        raise np.linalg.LinAlgError(f"fundamental tensor ill conditioned (cond={np.max(cond):.3g})")


@dataclass
class SprayJet:
    """G^i and its y-derivatives at one (batch of) tangent sample(s).

    ``G_j[..., i, j] = dG^i/dy^j``, ``G_jk[..., i, j, k]`` and
    ``G_jkl[..., i, j, k, l]`` likewise (the Berwald coefficients and their
    y-derivative); ``mean[..., i, j] = G_i^r_jr``.
    """

    G: np.ndarray
    G_j: np.ndarray
    G_jk: np.ndarray
    G_jkl: np.ndarray
    mean: np.ndarray


def spray_jet(nav: NavigationData, x, y, dx: int = 0, dy: int = 3) -> Jet:
    """Jet of G^i in (x, y) with the given truncation orders.

    G^i = 1/4 g^il ((d^2 F^2 / dy^l dx^m) y^m - dF^2/dx^l).
    """
    n = nav.n
    jets = _xy_jets(nav, x, y, dx + 1, dy + 2, dx + dy + 2)
    target = make_space(n, n, dx, dy, dx + dy)
    F2 = jets.F2
    F2_y = [F2.d(n + l) for l in range(n)]
    g = J.stack([J.stack([F2_y[l].d(n + i).to(target) * 0.5 for i in range(n)], axis=-1)
                 for l in range(n)], axis=-2)
    _check_condition(g.value)
    yt = jets.y.to(target)
    mixed = J.stack([J.stack([F2_y[l].d(m).to(target) for m in range(n)], axis=-1)
                     for l in range(n)], axis=-2)
    F2_x = J.stack([F2.d(l).to(target) for l in range(n)], axis=-1)
    rhs = J.einsum("...lm,...m->...l", mixed, yt) - F2_x
    return J.einsum("...il,...l->...i", J.inv(g), rhs) * 0.25


def spray(nav: NavigationData, x, y) -> SprayJet:
    n = nav.n
    G, G1, G2, G3 = jet_derivs(spray_jet(nav, x, y, 0, 3), n, 3, offset=n)
    # G3[..., i, j, k, l]; mean curvature contracts i with l
    mean = np.einsum("...rijr->...ij", G3)
    return SprayJet(G, G1, G2, G3, mean)


def mean_berwald(nav: NavigationData, x, y) -> np.ndarray:
    return spray(nav, x, y).mean


def killing_spray(nav: NavigationData, x, y) -> np.ndarray:
    """Closed form G^i = 1/2 gamma_0^i_0 - F S^i_0, valid when W is unit Killing."""
    y = np.asarray(y, float)
    mj = metric_jet(nav.h, x, 1)
    gamma = christoffel(nav.h, x, mj)
    nd = nav_deform(nav.h, nav.W, x, mj)
    F = eval_F(nav, x, y)
    return (0.5 * np.einsum("ijk,...j,...k->...i", gamma, y, y)
            - F[..., None] * np.einsum("ij,...j->...i", nd.S_mixed, y))


def riemann_spray(h: MetricField, x, y) -> np.ndarray:
    """G^i = 1/2 Gamma^i_jk y^j y^k of the Riemannian metric h."""
    gamma = christoffel(h, x)
    return 0.5 * np.einsum("ijk,...j,...k->...i", gamma, np.asarray(y, float), np.asarray(y, float))


def riemann_curvature(nav: NavigationData, x, y) -> tuple[np.ndarray, np.ndarray]:
    """(R^i_k, g_ij) at (x, y) from the spray.

    R^i_k = 2 dG^i/dx^k - y^j d^2G^i/dx^j dy^k + 2 G^j d^2G^i/dy^j dy^k
            - dG^i/dy^j dG^j/dy^k.
    """
    n = nav.n
    Gj = spray_jet(nav, x, y, 1, 2)
    G = Gj.value
    Gx = np.stack([Gj.partial(k) for k in range(n)], axis=-1)
    Gy = np.stack([Gj.partial(n + k) for k in range(n)], axis=-1)
    Gxy = np.empty(Gj.shape + (n, n))
    Gyy = np.empty(Gj.shape + (n, n))
    for j in range(n):
        for k in range(n):
            Gxy[..., j, k] = Gj.partial(j, n + k)
            Gyy[..., j, k] = Gj.partial(n + j, n + k)
    y = np.asarray(y, float)
    R = (2.0 * Gx - np.einsum("...j,...ijk->...ik", y, Gxy)
         + 2.0 * np.einsum("...j,...ijk->...ik", G, Gyy)
         - np.einsum("...ij,...jk->...ik", Gy, Gy))
    return R, fundamental_tensor(nav, x, y)


def flag_curvature(nav: NavigationData, x, y, u) -> np.ndarray:
    """K(x, y, u) = g(R(u), u) / (F^2 g(u, u) - g(y, u)^2)."""
    y, u = np.asarray(y, float), np.asarray(u, float)
    R, g = riemann_curvature(nav, x, y)
    Ru = np.einsum("...ik,...k->...i", R, u)
    num = np.einsum("...ij,...i,...j->...", g, Ru, u)
    gyy = np.einsum("...ij,...i,...j->...", g, y, y)
    guu = np.einsum("...ij,...i,...j->...", g, u, u)
    gyu = np.einsum("...ij,...i,...j->...", g, y, u)
    den = gyy * guu - gyu ** 2
    if np.any(den <= 1e-12 * gyy * guu):
        raise ValueError("degenerate flag: u is parallel to y")
    return num / den


def as_navigation(h: Field, W: Field) -> NavigationData:
    return NavigationData(h if isinstance(h, MetricField) else as_metric(h), W)
