"""Flows of the wind, Killing equations and geodesics.

The flow of W is integrated together with its tangent lift

    x' = W(x),    y'^i = (dW^i/dx^j) y^j,

with fixed-step RK4, vectorised over a batch of initial states.  Geodesics
solve x'' + 2 G(x, x') = 0 for the Kropina spray (Finsler mode) or the
Levi-Civita spray of h (Riemann mode).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classify import PREDICATE_TOL, ReportEntry, fit_proportional, rs_tensors, _entry
from .kropina import (ADMISSIBLE_EPS, ConicDomainError, KropinaData, NavigationData,
                      _xy_jets, eval_F, spray_jet)
from .riemann import Field, christoffel, covariant_deriv_lowered, lie_derivative_metric, lower

DEFAULT_DT = 1e-3
MAX_STEPS = 10_000_000


class ChartExitError(RuntimeError):
    def __init__(self, message: str, partial=None, time: float | None = None):
        super().__init__(message)
        self.partial = partial
        self.time = time


class StepUnderflowError(RuntimeError):
    pass


# Killing equations ---------------------------------------------------------

def killing_eq_F(nav: NavigationData, x, y) -> np.ndarray:
    """K_W(F) = dF/dx^s W^s + dF/dy^s dW^s/dx^u y^u, vectorised over rows of ``y``."""
    n = nav.n
    x, y = np.asarray(x, float), np.asarray(y, float)
    F = _xy_jets(nav, x, y, 1, 1, 1).F
    Fx = np.stack([F.partial(k) for k in range(n)], axis=-1)
    Fy = np.stack([F.partial(n + k) for k in range(n)], axis=-1)
    w, dw = nav.W.derivs(x, 1)
    return Fx @ w + np.einsum("...s,su,...u->...", Fy, dw, y)


def _alpha(a: Field, x, y):
    return np.sqrt(np.einsum("ij,...i,...j->...", a(x), y, y))


def k_alpha(a: Field, b: Field, V: Field, x, y) -> np.ndarray:
    """K_V(alpha) = (V_{i;j} + V_{j;i}) y^i y^j / (2 alpha)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    al = _alpha(a, x, y)
    if np.any(al <= 0):
        raise ValueError("alpha must be positive")
    dv = covariant_deriv_lowered(a, lower(a, V), x)
    return np.einsum("ij,...i,...j->...", dv + dv.T, y, y) / (2.0 * al)


def k_beta(a: Field, b: Field, V: Field, x, y) -> np.ndarray:
    """K_V(beta) = (b_{j;i} V^i + b^i V_{i;j}) y^j."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    db = covariant_deriv_lowered(a, b, x)
    dv = covariant_deriv_lowered(a, lower(a, V), x)
    b_up = np.linalg.solve(a(x), b(x))
    cov = np.einsum("ji,i->j", db, V(x)) + np.einsum("i,ij->j", b_up, dv)
    return y @ cov


PHI = {
    "kropina": (lambda s: 1.0 / s, lambda s: -1.0 / s ** 2),
    "randers": (lambda s: 1.0 + s, lambda s: np.ones_like(s)),
    "riemann": (lambda s: np.ones_like(s), lambda s: np.zeros_like(s)),
}


@dataclass
class AlphaBetaMetric:
    a: Field
    b: Field
    phi: str = "kropina"

    def __post_init__(self):
        if self.phi not in PHI:
            raise ValueError(f"unknown phi {self.phi!r}; choose from {sorted(PHI)}")

    def s(self, x, y) -> np.ndarray:
        x, y = np.asarray(x, float), np.asarray(y, float)
        return np.einsum("...i,...i->...", self.b(x), y) / _alpha(self.a, x, y)

    def F(self, x, y) -> np.ndarray:
        x, y = np.asarray(x, float), np.asarray(y, float)
        s = self.s(x, y)
        if self.phi == "kropina" and np.any(s <= ADMISSIBLE_EPS):
            raise ConicDomainError("beta <= 0: y outside the conic domain")
        return _alpha(self.a, x, y) * PHI[self.phi][0](s)

    @classmethod
    def from_kropina(cls, k: KropinaData) -> "AlphaBetaMetric":
        return cls(k.a, k.b, "kropina")


@dataclass
class AlphaBetaKilling:
    eq413: np.ndarray            # (phi - s phi') K_V(alpha) + phi' K_V(beta)
    eq414: np.ndarray | None     # 2 beta K_V(alpha) - alpha K_V(beta), Kropina only


def alpha_beta_killing_eq(m: AlphaBetaMetric, V: Field, x, y) -> AlphaBetaKilling:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ka = k_alpha(m.a, m.b, V, x, y)
    kb = k_beta(m.a, m.b, V, x, y)
    s = m.s(x, y)
    phi, dphi = PHI[m.phi]
    lhs = (phi(s) - s * dphi(s)) * ka + dphi(s) * kb
    eq414 = None
    if m.phi == "kropina":
        al = _alpha(m.a, x, y)
        beta = s * al
        eq414 = 2.0 * beta * ka - al * kb
    return AlphaBetaKilling(lhs, eq414)


@dataclass
class Eq416Point:
    c: float
    residual: float        # relative misfit of b_{t;s} + b_{s;t} = c a_st
    transvected: float     # |b_{t;s} b^s + b^s b_{s;t} - c b_t|
    bound: float           # ||2r - c a||_F * |b^#|, which bounds ``transvected``


def eq416_point(k: KropinaData, x) -> Eq416Point:
    x = np.asarray(x, float)
    rs = rs_tensors(k, x)
    av = k.a(x)
    fit = fit_proportional(2.0 * rs.r, av)
    b = k.b(x)
    b_up = np.linalg.solve(av, b)
    transv = float(np.linalg.norm(2.0 * rs.r @ b_up - fit.c * b))
    bound = float(np.linalg.norm(2.0 * rs.r - fit.c * av) * np.linalg.norm(b_up))
    return Eq416Point(fit.c, fit.residual, transv, bound)


def eq416_test(k: KropinaData, points, tol: float = PREDICATE_TOL) -> ReportEntry:
    rows = [eq416_point(k, x) for x in np.atleast_2d(points)]
    e = _entry("eq416", [r.residual for r in rows], tol, [r.c for r in rows],
               transvected_max=max(r.transvected for r in rows))
    # the first equation follows from the second
    e.consistent = all(r.transvected <= r.bound * (1 + 1e-9) + 1e-12 for r in rows)
    return e


# flows ---------------------------------------------------------------------

@dataclass
class FlowTrack:
    t: np.ndarray   # (steps + 1,)
    x: np.ndarray   # (steps + 1, ..., n)
    y: np.ndarray   # (steps + 1, ..., n)

    @property
    def final(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x[-1], self.y[-1]


def _in_box(x, box) -> bool:
    if box is None:
        return True
    box = np.asarray(box, float)
    return bool(np.all((x >= box[:, 0]) & (x <= box[:, 1])))


def _steps(T: float, dt: float) -> tuple[int, float]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T == 0:
        return 0, 0.0
    steps = int(math.ceil(abs(T) / dt - 1e-9))
    if steps > MAX_STEPS:
        raise StepUnderflowError(f"{steps} steps requested for T={T}, dt={dt}")
    h = T / steps
    if abs(h) < 1e-14 * max(1.0, abs(T)):
        raise StepUnderflowError(f"step {h} underflows")
    return steps, h


def _rk4(rhs: Callable, state: np.ndarray, T: float, dt: float, box, n: int,
         check: Callable | None = None) -> tuple[np.ndarray, np.ndarray]:
    steps, h = _steps(T, dt)
    ts = np.empty(steps + 1)
    out = np.empty((steps + 1,) + state.shape)
    ts[0], out[0] = 0.0, state
    for k in range(steps):
        s = out[k]
        k1 = rhs(s)
        k2 = rhs(s + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h * k2)
        k4 = rhs(s + h * k3)
        out[k + 1] = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        ts[k + 1] = (k + 1) * h
        if not _in_box(out[k + 1][..., :n], box):
            raise ChartExitError(f"trajectory left the chart box at t={ts[k + 1]:.6g}",
                                 (ts[:k + 2], out[:k + 2]), ts[k + 1])
        if check is not None:
            check(ts[k + 1], out[k + 1], (ts[:k + 2], out[:k + 2]))
    return ts, out


def integrate_flow(nav: NavigationData, x0, y0, T: float, dt: float = DEFAULT_DT,
                   box=None) -> FlowTrack:
    """RK4 for x' = W(x), y' = dW(x) y.  ``x0``/``y0`` may be batches of shape (m, n)."""
    W = nav.W
    n = nav.n
    x0 = np.asarray(x0, float)
    y0 = np.broadcast_to(np.asarray(y0, float), x0.shape)

    def rhs(state):
        x, y = state[..., :n], state[..., n:]
        w, dw = W.derivs(x, 1)
        return np.concatenate([w, np.einsum("...ij,...j->...i", dw, y)], axis=-1)

    try:
        ts, out = _rk4(rhs, np.concatenate([x0, y0], axis=-1), T, dt, box, n)
    except ChartExitError as exc:
        t_part, s_part = exc.partial
        exc.partial = FlowTrack(t_part, s_part[..., :n], s_part[..., n:])
        raise
    return FlowTrack(ts, out[..., :n], out[..., n:])


def flow_map(nav: NavigationData, x0, y0, t: float, dt: float = DEFAULT_DT, box=None):
    return integrate_flow(nav, x0, y0, t, dt, box).final


# geodesics -----------------------------------------------------------------

@dataclass
class GeodesicTrack:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    speed: np.ndarray         # F(x, v) in Finsler mode, |v|_h in Riemann mode
    mode: str
    dt: float
    method: str = "rk4"
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        n = self.x.shape[-1]
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)] + ["F"])
        for t, x, v, f in zip(self.t, self.x, self.v, self.speed):
            wr.writerow([repr(float(t))] + [repr(float(c)) for c in x]
                        + [repr(float(c)) for c in v] + [repr(float(f))])
        return buf.getvalue()


def finsler_spray_value(nav: NavigationData, x, y) -> np.ndarray:
    return spray_jet(nav, x, y, 0, 0).value


def riemann_spray_value(h: Field, x, y) -> np.ndarray:
    return 0.5 * np.einsum("...ijk,...j,...k->...i", christoffel(h, x), y, y)


def integrate_geodesic(nav: NavigationData, x0, y0, T: float, dt: float = DEFAULT_DT,
                       mode: str = "finsler", normalize: bool = True, box=None) -> GeodesicTrack:
    """Integrate x'' + 2 G(x, x') = 0; ``x0``/``y0`` may be batches of shape (m, n).

    In Finsler mode with ``normalize`` the initial velocity is rescaled so that
    F(x0, y0) = 1; Riemann mode rescales to unit h-length.
    """
    n = nav.n
    x0 = np.asarray(x0, float)
    y0 = np.broadcast_to(np.asarray(y0, float), x0.shape)
    if mode == "finsler":
        speed0 = eval_F(nav, x0, y0)
        G = lambda x, v: finsler_spray_value(nav, x, v)  # noqa: E731
    elif mode == "riemann":
        speed0 = np.sqrt(np.einsum("...ij,...i,...j->...", nav.h(x0), y0, y0))
        G = lambda x, v: riemann_spray_value(nav.h, x, v)  # noqa: E731
    else:
        raise ValueError(f"mode must be 'finsler' or 'riemann', got {mode!r}")
    if normalize:
        y0 = y0 / np.asarray(speed0)[..., None]

    def rhs(state):
        x, v = state[..., :n], state[..., n:]
        return np.concatenate([v, -2.0 * G(x, v)], axis=-1)

    def check(t, state, partial):
        if mode == "finsler" and np.any(nav.W0(state[..., :n], state[..., n:]) <= ADMISSIBLE_EPS):
            exc = ConicDomainError(f"geodesic left the conic domain at t={t:.6g}")
            exc.time = t
            exc.partial = partial
            raise exc

    ts, out = _rk4(rhs, np.concatenate([x0, y0], axis=-1), T, dt, box, n, check)
    xs, vs = out[..., :n], out[..., n:]
    if mode == "finsler":
        speed = eval_F(nav, xs, vs)
    else:
        speed = np.sqrt(np.einsum("...ij,...i,...j->...", nav.h(xs), vs, vs))
    return GeodesicTrack(ts, xs, vs, speed, mode, dt)


def geodesic_equation_residual(nav: NavigationData, t: np.ndarray, x: np.ndarray,
                               v: np.ndarray) -> np.ndarray:
    """max(|dv/dt + 2 G(x, v)|, |dx/dt - v|) at interior samples (4th-order stencils).

    ``x`` and ``v`` have the time axis first; further batch axes are allowed.
    """
    h = t[1] - t[0]

    def d(arr):
        return (-arr[4:] + 8 * arr[3:-1] - 8 * arr[1:-3] + arr[:-4]) / (12 * h)

    xi, vi = x[2:-2], v[2:-2]
    acc = d(v) + 2 * finsler_spray_value(nav, xi, vi)
    return np.maximum(np.linalg.norm(acc, axis=-1), np.linalg.norm(d(x) - vi, axis=-1))


def isometry_geodesic_test(nav: NavigationData, track: GeodesicTrack, t_flow: float,
                           dt: float = DEFAULT_DT, box=None) -> float:
    """Push a geodesic through the flow of W for time ``t_flow`` and return the
    largest geodesic-equation residual along the image curve."""
    xb, vb = flow_map(nav, track.x, track.v, t_flow, dt, box)
    return float(np.max(geodesic_equation_residual(nav, track.t, xb, vb)))


# oracles -------------------------------------------------------------------

def flow_derivative(nav: NavigationData, fn: Callable, x0, y0, tau: float = 1e-3,
                    dt: float | None = None) -> np.ndarray:
    """d/dt fn(phi_t x0, dphi_t y0) at t = 0 by a 4th-order central stencil."""
    dt = dt or tau / 8
    x0, y0 = np.asarray(x0, float), np.asarray(y0, float)
    vals = {}
    for m in (-2, -1, 1, 2):
        x, y = flow_map(nav, x0, y0, m * tau, dt)
        vals[m] = fn(x, y)
    return (-vals[2] + 8 * vals[1] - 8 * vals[-1] + vals[-2]) / (12 * tau)


def lie_max(nav: NavigationData, points) -> float:
    return max(float(np.max(np.abs(lie_derivative_metric(nav.h, nav.W, x))))
               for x in np.atleast_2d(points))
