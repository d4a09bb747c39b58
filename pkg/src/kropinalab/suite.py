"""Verification suites: sample a scene, run every check, compare with expectations."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import classify as C
from . import dynamics as D
from .jetcalc import DomainError
from .kropina import ConicDomainError
from .riemann import SingularMetricError
from .sampling import SplitMix64, sample_points, sample_tangents, sample_transverse
from .scenes import Scene

CLASSIFY_KEYS = ["T-constantK", "T-wB", "T-B", "I-eq22", "I-eq26", "T-pscalar", "T-K0-berwald"]
DYNAMICS_KEYS = ["E-killingF", "E-eq413", "E-eq414", "E-eq416", "T-geodesic-image",
                 "T-isometry-equiv"]
SUITE_KEYS = CLASSIFY_KEYS + DYNAMICS_KEYS
SUITES = {"all": SUITE_KEYS, "classify": CLASSIFY_KEYS, "dynamics": DYNAMICS_KEYS}

FLOW_TIME = 1.0
GEODESIC_TIME = 0.25
IMAGE_FLOW_TIME = 0.5
GEODESIC_TRACKS = 3

# key -> (operations, what is checked)
COVERAGE = {
    "T-constantK": ("classify.constant_flag_test",
                    "constant flag curvature iff W unit Killing and h of constant curvature"),
    "T-wB": ("classify.weakly_berwald_test, kropina.spray",
             "r_ij = c a_ij, cross-checked with the mean Berwald curvature"),
    "T-B": ("classify.berwald_test, kropina.spray",
            "wB plus the s-condition, cross-checked with G_j^i_kl = 0"),
    "I-eq22": ("classify.eq22_test", "r_ij in terms of R_ij, kappa and W (identity)"),
    "I-eq26": ("classify.eq26_test", "S_ij = W_i S_j - W_j S_i"),
    "T-pscalar": ("classify.pscalar_test, kropina.flag_curvature",
                  "p-scalar flag curvature iff W unit Killing and h of scalar curvature"),
    "T-K0-berwald": ("classify.k0_berwald_test",
                     "in the p-scalar case Berwald iff K = 0"),
    "E-killingF": ("dynamics.killing_eq_F, riemann.lie_derivative_metric",
                   "K_W(F) = 0 iff L_W h = 0"),
    "E-eq413": ("dynamics.alpha_beta_killing_eq, dynamics.killing_eq_F",
                "(alpha, beta) form of the Killing equation equals K_W(F)"),
    "E-eq414": ("dynamics.alpha_beta_killing_eq", "2 beta K_W(alpha) - alpha K_W(beta) = 0"),
    "E-eq416": ("dynamics.eq416_test", "b_{t;s} + b_{s;t} = c a_st and its transvection"),
    "T-geodesic-image": ("dynamics.integrate_geodesic, dynamics.isometry_geodesic_test",
                         "images of geodesics under the flow of W are geodesics"),
    "T-isometry-equiv": ("dynamics.integrate_flow",
                         "the flow of W preserves F iff it preserves h"),
}

NUMERIC_ERRORS = (ConicDomainError, D.ChartExitError, D.StepUnderflowError,
                  SingularMetricError, DomainError, np.linalg.LinAlgError, FloatingPointError)


@dataclass
class Samples:
    points: np.ndarray
    tangents: list[np.ndarray]
    transverse: list[np.ndarray]


def draw_samples(scene: Scene, seed: int, points: int | None = None,
                 tangents: int | None = None) -> Samples:
    rng = SplitMix64(seed)
    prng, trng, urng = rng.spawn(1), rng.spawn(2), rng.spawn(3)
    pts = sample_points(prng, scene.box, points or scene.points)
    ys = [sample_tangents(trng, scene.nav, x, tangents or scene.tangents_per_point,
                          scene.conic_margin) for x in pts]
    us = [sample_transverse(urng, y) for y in ys]
    return Samples(pts, ys, us)


@dataclass
class SuiteResult:
    scene: Scene
    seed: int
    entries: dict[str, C.ReportEntry]
    points_evaluated: int
    timings: dict[str, float] = field(default_factory=dict)
    numeric_failures: list[str] = field(default_factory=list)

    def mismatches(self) -> list[str]:
        bad = []
        for key, e in self.entries.items():
            exp = self.scene.expected.get(key)
            if (exp is not None and e.verdict != exp) or not e.consistent:
                bad.append(key)
        return bad

    @property
    def exit_code(self) -> int:
        if self.numeric_failures:
            return 3
        return 1 if self.mismatches() else 0

    def as_dict(self, timings: bool = True) -> dict:
        preds = []
        for key, e in self.entries.items():
            d = {"key": key, **e.as_dict()}
            exp = self.scene.expected.get(key)
            if exp is not None:
                d["expected"] = exp
                d["match"] = e.verdict == exp
            preds.append(d)
        out = {"scene": self.scene.echo(), "seed": self.seed,
               "tolerances": dict(self.scene.tolerances), "predicates": preds,
               "points_evaluated": self.points_evaluated,
               "status": {0: "pass", 1: "mismatch", 3: "numeric-failure"}[self.exit_code]}
        if timings:
            out["timings"] = {k: round(v, 6) for k, v in self.timings.items()}
        return out


class _Runner:
    def __init__(self, scene: Scene, smp: Samples):
        self.scene, self.smp = scene, smp
        self.nav, self.k = scene.nav, scene.kropina
        tol = scene.tolerances
        self.itol, self.ptol, self.otol = tol["identity"], tol["predicate"], tol["ode"]
        self._cache: dict = {}

    def cached(self, name, fn):
        if name not in self._cache:
            self._cache[name] = fn()
        return self._cache[name]

    # shared quantities
    def sprays(self):
        return self.cached("sprays", lambda: C.spray_samples(self.nav, self.smp.points,
                                                             self.smp.tangents))

    def lie_max(self) -> float:
        return self.cached("lie", lambda: D.lie_max(self.nav, self.smp.points))

    def killing(self) -> bool:
        return self.lie_max() <= self.ptol

    def nav_wb(self):
        return self.cached("navwb", lambda: C.nav_weakly_berwald_test(self.nav, self.smp.points,
                                                                      self.ptol))

    def killing_values(self):
        def go():
            K, ab = [], []
            m = D.AlphaBetaMetric.from_kropina(self.k)
            for x, ys in zip(self.smp.points, self.smp.tangents):
                K.append(D.killing_eq_F(self.nav, x, ys))
                ab.append(D.alpha_beta_killing_eq(m, self.nav.W, x, ys))
            return np.concatenate(K), ab
        return self.cached("killing_values", go)

    # entries
    def T_constantK(self):
        return C.constant_flag_test(self.nav, self.smp.points, self.smp.tangents,
                                    self.smp.transverse, self.ptol, self.otol)

    def T_wB(self):
        e = C.weakly_berwald_test(self.k, self.smp.points, self.sprays(), self.ptol, self.nav)
        nav = self.nav_wb()
        e.details["nav_route_residual_max"] = nav.residual_max
        e.consistent = e.consistent and e.verdict == nav.verdict
        return e

    def T_B(self):
        def go():
            e = C.berwald_test(self.k, self.smp.points, self.sprays(), self.ptol, self.nav)
            nav = C.nav_berwald_test(self.nav, self.smp.points, self.ptol)
            e.details["nav_route_residual_max"] = nav.residual_max
            e.consistent = e.consistent and e.verdict == nav.verdict
            return e
        return self.cached("B", go)

    def I_eq22(self):
        return C.eq22_test(self.k, self.nav, self.smp.points, self.itol)

    def I_eq26(self):
        e = C.eq26_test(self.nav, self.smp.points, self.ptol)
        smax = self.T_B().details["s_condition_max"]
        e.details["s_condition_max"] = smax
        e.consistent = e.verdict == (smax <= self.ptol)
        return e

    def T_pscalar(self):
        return self.cached("pscalar", lambda: C.pscalar_test(
            self.nav, self.smp.points, self.smp.tangents, self.smp.transverse,
            self.ptol, self.otol))

    def T_K0_berwald(self):
        return C.k0_berwald_test(self.T_pscalar(), self.T_B(), self.ptol)

    def E_killingF(self):
        K, _ = self.killing_values()
        e = C._entry("killingF", np.abs(K), self.ptol, lie_max=self.lie_max())
        e.consistent = e.verdict == self.killing()
        return e

    def E_eq413(self):
        K, ab = self.killing_values()
        lhs = np.concatenate([a.eq413 for a in ab])
        res = np.abs(lhs - K) / np.maximum(1.0, np.abs(K))
        return C._entry("eq413", res, self.itol)

    def E_eq416(self):
        def go():
            e = D.eq416_test(self.k, self.smp.points, self.ptol)
            transvection_ok = e.consistent
            e.details["transvection_bounded"] = transvection_ok
            e.details["killing"] = self.killing()
            e.details["nav_wB"] = self.nav_wb().verdict
            e.consistent = transvection_ok and e.verdict == self.killing() == self.nav_wb().verdict
            return e
        return self.cached("eq416", go)

    def E_eq414(self):
        _, ab = self.killing_values()
        res = np.abs(np.concatenate([a.eq414 for a in ab]))
        e = C._entry("eq414", res, self.ptol)
        e.details["eq416_verdict"] = self.E_eq416().verdict
        e.consistent = e.verdict == self.E_eq416().verdict
        return e

    def T_geodesic_image(self):
        sc = self.scene
        m = min(GEODESIC_TRACKS, len(self.smp.points))
        x0 = self.smp.points[:m]
        y0 = np.array([ys[0] for ys in self.smp.tangents[:m]])
        track = D.integrate_geodesic(self.nav, x0, y0, GEODESIC_TIME, sc.dt, box=sc.chart_box)
        xb, vb = D.flow_map(self.nav, track.x, track.v, IMAGE_FLOW_TIME, sc.dt, sc.chart_box)
        res = np.max(D.geodesic_equation_residual(self.nav, track.t, xb, vb), axis=0)
        e = C._entry("geodesic-image", res, self.otol, flow_time=IMAGE_FLOW_TIME,
                     geodesic_time=GEODESIC_TIME)
        e.consistent = e.verdict == self.killing()
        return e

    def T_isometry_equiv(self):
        sc = self.scene
        x0 = np.repeat(self.smp.points, [len(y) for y in self.smp.tangents], axis=0)
        y0 = np.concatenate(self.smp.tangents)
        tr = D.integrate_flow(self.nav, x0, y0, FLOW_TIME, sc.dt, sc.chart_box)
        hv = self.nav.h(tr.x)
        h00 = np.einsum("...ij,...i,...j->...", hv, tr.y, tr.y)
        w0 = np.einsum("...ij,...i,...j->...", hv, self.nav.W(tr.x), tr.y)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            F = np.where(w0 > 0, h00 / (2.0 * w0), np.inf)
            dF = np.max(np.abs(F - F[0]), axis=0)
        dF = np.where(np.isnan(dF), np.inf, dF)
        dh = np.max(np.abs(h00 - h00[0]), axis=0)
        e = C._entry("isometry-equiv", np.maximum(dF, dh), self.ptol,
                     dF_max=float(np.max(dF)), dh_max=float(np.max(dh)),
                     flow_time=FLOW_TIME, lie_max=self.lie_max())
        dF_ok, dh_ok = np.max(dF) <= self.ptol, np.max(dh) <= self.ptol
        K, _ = self.killing_values()
        e.consistent = dF_ok == dh_ok == self.killing() == (np.max(np.abs(K)) <= self.ptol)
        return e


def run_suite(scene: Scene, suite: str = "all", seed: int | None = None,
              points: int | None = None, tangents: int | None = None) -> SuiteResult:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    seed = scene.seed if seed is None else seed
    smp = draw_samples(scene, seed, points, tangents)
    run = _Runner(scene, smp)
    entries, timings, failures = {}, {}, []
    for key in SUITES[suite]:
        t0 = time.perf_counter()
        try:
            e = getattr(run, key.replace("-", "_"))()
        except NUMERIC_ERRORS as exc:
            e = C.ReportEntry(key, float("nan"), float("nan"), False, consistent=False)
            e.error = f"{type(exc).__name__}: {exc}"
            failures.append(key)
        e.name = key
        entries[key] = e
        timings[key] = time.perf_counter() - t0
    return SuiteResult(scene, seed, entries, len(smp.points), timings, failures)


def coverage_table() -> str:
    w = max(len(k) for k in COVERAGE)
    lines = [f"{'key':<{w}}  operations  ->  property"]
    for key, (ops, what) in COVERAGE.items():
        lines.append(f"{key:<{w}}  {ops}  ->  {what}")
    return "\n".join(lines)
