"""Residual-reporting classifiers for (weakly) Berwald and p-scalar Kropina spaces.

Every test runs in two presentations: the (alpha, beta) one, where the
covariant derivative ``;`` belongs to a, and the navigation one, where
``||`` belongs to h.  Agreement between the routes is recorded on each
:class:`ReportEntry` as ``consistent``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kropina import (KropinaData, NavigationData, SprayJet, flag_curvature, spray,
                      to_navigation)
from .riemann import (covariant_deriv, covariant_deriv_lowered, metric_jet, nav_deform,
                      riemann_tensor, second_covariant_deriv)

IDENTITY_TOL = 1e-8
PREDICATE_TOL = 1e-6
ODE_TOL = 1e-5


@dataclass
class RSTensors:
    r: np.ndarray    # symmetric part of b_{i;j}
    s: np.ndarray    # antisymmetric part
    s_cov: np.ndarray  # s_i = a^rs b_r s_si


@dataclass
class ProportionalityFit:
    c: float
    residual: float


@dataclass
class ReportEntry:
    name: str
    residual_max: float
    residual_mean: float
    verdict: bool
    fitted_scalars: list[float] = field(default_factory=list)
    consistent: bool = True
    details: dict = field(default_factory=dict)
    error: str | None = None

    def as_dict(self) -> dict:
        d = {"name": self.name, "residual_max": _clean(self.residual_max),
             "residual_mean": _clean(self.residual_mean),
             "fitted_scalars": [_clean(v) for v in self.fitted_scalars],
             "verdict": bool(self.verdict), "consistent": bool(self.consistent)}
        if self.details:
            d["details"] = {k: _clean(v) for k, v in self.details.items()}
        if self.error:
            d["error"] = self.error
        return d


def _clean(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(u) for u in v]
    if isinstance(v, (float, np.floating, int, np.integer)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    return v


def _entry(name, residuals, tol, fitted=(), **details) -> ReportEntry:
    r = np.asarray(residuals, float)
    rmax = float(np.max(r)) if r.size else 0.0
    return ReportEntry(name, rmax, float(np.mean(r)) if r.size else 0.0, rmax <= tol,
                       [float(c) for c in fitted], details=details)


# building blocks -----------------------------------------------------------

def rs_tensors(k: KropinaData, x) -> RSTensors:
    x = np.asarray(x, float)
    mj = metric_jet(k.a, x, 1)
    db = covariant_deriv_lowered(k.a, k.b, x, mj)
    r = 0.5 * (db + db.T)
    s = 0.5 * (db - db.T)
    b_up = mj.hinv @ k.b(x)
    return RSTensors(r, s, np.einsum("s,si->i", b_up, s))


def fit_proportional(t, m, metric=None, floor: float | None = None) -> ProportionalityFit:
    """Fit t ~ c m.

    c = tr(metric^-1 t) / tr(metric^-1 m) with ``metric`` defaulting to m
    (so c = m^ij t_ij / n).  The residual is ||t - c m||_F relative to
    max(||t||_F, floor); ``floor`` defaults to ||m||_F so rounding noise in an
    identically vanishing t is not blown up to O(1).
    """
    t, m = np.asarray(t, float), np.asarray(m, float)
    g = m if metric is None else np.asarray(metric, float)
    gi = np.linalg.inv(g)
    den = np.einsum("ij,ji->", gi, m)
    c = float(np.einsum("ij,ji->", gi, t) / den)
    if floor is None:
        floor = np.linalg.norm(m)
    scale = max(np.linalg.norm(t), floor, 1e-30)
    return ProportionalityFit(c, float(np.linalg.norm(t - c * m) / scale))


def fit_tensor(t, model) -> ProportionalityFit:
    """Frobenius least-squares fit t ~ c model for tensors of any rank."""
    t, model = np.asarray(t, float), np.asarray(model, float)
    mm = float(np.sum(model * model))
    c = float(np.sum(t * model) / mm) if mm > 0 else 0.0
    scale = max(np.linalg.norm(t), np.linalg.norm(model), 1e-30)
    return ProportionalityFit(c, float(np.linalg.norm(t - c * model) / scale))


def constant_curvature_model(hv: np.ndarray) -> np.ndarray:
    """Q[k, r, i, j] = h_ki delta^r_j - h_kj delta^r_i, the K = 1 curvature tensor."""
    d = np.eye(len(hv))
    return np.einsum("ki,rj->krij", hv, d) - np.einsum("kj,ri->krij", hv, d)


def _points(points) -> np.ndarray:
    return np.atleast_2d(np.asarray(points, float))


def _tangent_batches(tangents, count):
    if tangents is None:
        return [None] * count
    return list(tangents)


# (alpha, beta) route -------------------------------------------------------

def spray_samples(nav: NavigationData, points, tangents) -> list[SprayJet]:
    """Spray jets for ``tangents[p]`` sampled at ``points[p]``."""
    return [spray(nav, x, ys) for x, ys in zip(_points(points), tangents)]


def weakly_berwald_test(k: KropinaData, points, sprays: list[SprayJet] | None = None,
                        tol: float = PREDICATE_TOL,
                        nav: NavigationData | None = None) -> ReportEntry:
    """wB: r_ij = c(x) a_ij.  ``sprays`` (see :func:`spray_samples`) feed the
    direct mean Berwald cross-check on the navigation form."""
    pts = _points(points)
    nav = nav or to_navigation(k)
    res, cs, transv = [], [], []
    kap = k.kappa_field
    for x in pts:
        rs = rs_tensors(k, x)
        fit = fit_proportional(rs.r, k.a(x))
        res.append(fit.residual)
        cs.append(fit.c)
        # c + W_r kappa-bar^r = 0 wherever wB holds
        hv = nav.h(x)
        kbar = np.linalg.solve(hv, kap.derivs(x, 1)[1])
        transv.append(abs(fit.c + (hv @ nav.W(x)) @ kbar))
    e = _entry("wB", res, tol, cs, c_plus_W_kappabar_max=max(transv, default=0.0))
    if sprays is not None:
        mean_max = max((float(np.max(np.linalg.norm(sj.mean, axis=(-2, -1)))) for sj in sprays),
                       default=0.0)
        e.details["mean_berwald_max"] = mean_max
        e.consistent = e.verdict == (mean_max <= tol)
    return e


def s_condition_residual(k: KropinaData, x) -> float:
    """||s_j b_i - s_i b_j - b^2 s_ij||_F."""
    rs = rs_tensors(k, x)
    b = k.b(x)
    b2 = float(k.b_squared(x))
    m = np.outer(b, rs.s_cov) - np.outer(rs.s_cov, b) - b2 * rs.s
    return float(np.linalg.norm(m))


def berwald_test(k: KropinaData, points, sprays: list[SprayJet] | None = None,
                 tol: float = PREDICATE_TOL,
                 nav: NavigationData | None = None) -> ReportEntry:
    """(B): wB and s_j b_i - s_i b_j = b^2 s_ij; cross-checked with G_j^i_kl = 0."""
    pts = _points(points)
    nav = nav or to_navigation(k)
    wb = weakly_berwald_test(k, pts, None, tol, nav)
    sres = [s_condition_residual(k, x) for x in pts]
    res = np.maximum(np.asarray(sres), np.asarray([wb.residual_max] * len(pts)))
    e = _entry("B", res, tol, wb.fitted_scalars, wB_residual_max=wb.residual_max,
               s_condition_max=max(sres))
    e.verdict = wb.verdict and max(sres) <= tol
    if sprays is not None:
        gmax = max((float(np.max(np.abs(sj.G_jkl))) for sj in sprays), default=0.0)
        e.details["berwald_curvature_max"] = gmax
        e.consistent = e.verdict == (gmax <= tol)
    return e


# navigation route ----------------------------------------------------------

def nav_weakly_berwald_test(nav: NavigationData, points, tol: float = PREDICATE_TOL) -> ReportEntry:
    """Strong Kropina: the symmetric part R_ij of W_{i||j} vanishes."""
    res = [np.linalg.norm(nav_deform(nav.h, nav.W, x).R) for x in _points(points)]
    return _entry("navWB", res, tol)


def nav_berwald_test(nav: NavigationData, points, tol: float = PREDICATE_TOL) -> ReportEntry:
    """W parallel: W_{i||j} = 0."""
    res = [np.linalg.norm(covariant_deriv(nav.h, nav.W, x)) for x in _points(points)]
    return _entry("navB", res, tol)


def eq22_residual(k: KropinaData, nav: NavigationData, x) -> float:
    """||r_ij - 2 e^-kappa (R_ij - 1/2 W_r kappa-bar^r h_ij)||_F."""
    x = np.asarray(x, float)
    rs = rs_tensors(k, x)
    mj = metric_jet(nav.h, x, 1)
    R = nav_deform(nav.h, nav.W, x, mj).R
    kap, dkap = k.kappa_field.derivs(x, 1)
    kbar = mj.hinv @ dkap
    wl = mj.h @ nav.W(x)
    rhs = 2.0 * np.exp(-kap) * (R - 0.5 * (wl @ kbar) * mj.h)
    return float(np.linalg.norm(rs.r - rhs))


def eq26_residual(nav: NavigationData, x) -> float:
    """||S_ij - (W_i S_j - W_j S_i)||_F."""
    x = np.asarray(x, float)
    mj = metric_jet(nav.h, x, 1)
    nd = nav_deform(nav.h, nav.W, x, mj)
    wl = mj.h @ nav.W(x)
    return float(np.linalg.norm(nd.S - (np.outer(wl, nd.S_cov) - np.outer(nd.S_cov, wl))))


def eq22_test(k, nav, points, tol: float = IDENTITY_TOL) -> ReportEntry:
    return _entry("eq22", [eq22_residual(k, nav, x) for x in _points(points)], tol)


def eq26_test(nav, points, tol: float = PREDICATE_TOL) -> ReportEntry:
    return _entry("eq26", [eq26_residual(nav, x) for x in _points(points)], tol)


# p-scalar flag curvature ---------------------------------------------------

@dataclass
class PScalarPoint:
    K: float                 # fitted from h_rs W^s_||i W^r_||j = K (h_ij - W_i W_j)
    residual: float
    sectional_K: float       # fitted from the curvature tensor of h
    sectional_residual: float
    lemma_residual: float
    flag_spread: float
    flag_mean: float


def pscalar_point(nav: NavigationData, x, ys=None, us=None) -> PScalarPoint:
    x = np.asarray(x, float)
    mj = metric_jet(nav.h, x, 2)
    T = covariant_deriv(nav.h, nav.W, x, mj)
    wl = mj.h @ nav.W(x)
    lhs = T.T @ mj.hinv @ T
    fit = fit_proportional(lhs, mj.h - np.outer(wl, wl), metric=mj.h)
    rm = riemann_tensor(nav.h, x, mj)
    sfit = fit_tensor(rm, constant_curvature_model(mj.h))
    D = second_covariant_deriv(nav.h, nav.W, x, mj)
    lemma = float(np.max(np.abs(D - np.einsum("r,krij->ijk", wl, rm))))
    spread, fmean = 0.0, float("nan")
    if ys is not None and len(ys):
        K = flag_curvature(nav, x, ys, us)
        spread, fmean = float(np.max(K) - np.min(K)), float(np.mean(K))
    return PScalarPoint(fit.c, fit.residual, sfit.c, sfit.residual, lemma, spread, fmean)


def pscalar_test(nav: NavigationData, points, tangents=None, transverse=None,
                 tol: float = PREDICATE_TOL, ode_tol: float = ODE_TOL) -> ReportEntry:
    """p-scalar flag curvature K(x): W unit Killing and h of scalar sectional curvature.

    The fitted K(x) comes from h_rs W^s_||i W^r_||j = K (h_ij - W_i W_j); the
    flag curvature spread over random flags at each point is the independent
    cross-check.
    """
    pts = _points(points)
    killing = nav_weakly_berwald_test(nav, pts, tol)
    ys_all = _tangent_batches(tangents, len(pts))
    us_all = _tangent_batches(transverse, len(pts))
    rows = [pscalar_point(nav, x, ys, us) for x, ys, us in zip(pts, ys_all, us_all)]
    Ks = [r.K for r in rows]
    res = [max(r.residual, r.sectional_residual) for r in rows]
    e = _entry("pscalar", res, tol, Ks,
               killing_square_residual_max=max(r.residual for r in rows),
               sectional_residual_max=max(r.sectional_residual for r in rows),
               sectional_K=[r.sectional_K for r in rows],
               lemma_residual_max=max(r.lemma_residual for r in rows),
               K_min=min(Ks), K_std=float(np.std(Ks)),
               killing_residual_max=killing.residual_max)
    sectional_ok = max(r.sectional_residual for r in rows) <= tol
    e.verdict = killing.verdict and sectional_ok
    if not killing.verdict:
        e.error = "not p-scalar: W not Killing"
    if tangents is not None:
        spread = max(r.flag_spread for r in rows)
        e.details["flag_spread_max"] = spread
        e.details["flag_mean"] = [r.flag_mean for r in rows]
        e.consistent = e.verdict == (spread <= ode_tol)
        if e.verdict:
            # in the p-scalar case the three K(x) estimates coincide and K >= 0
            agree = max(max(abs(r.K - r.sectional_K), abs(r.K - r.flag_mean)) for r in rows)
            e.details["K_agreement_max"] = agree
            e.consistent = e.consistent and agree <= ode_tol and min(Ks) >= -tol
    return e


def k0_berwald_test(pscalar: ReportEntry, berwald: ReportEntry,
                    tol: float = PREDICATE_TOL) -> ReportEntry:
    """On p-scalar scenes: W^i_||j = 0 iff K(x) = 0."""
    if not pscalar.verdict:
        e = ReportEntry("K0-berwald", float("nan"), float("nan"), False)
        e.error = "precondition failed: not of p-scalar flag curvature"
        return e
    kmax = max(abs(k) for k in pscalar.fitted_scalars)
    e = ReportEntry("K0-berwald", kmax, float(np.mean(np.abs(pscalar.fitted_scalars))),
                    kmax <= tol, list(pscalar.fitted_scalars))
    e.details["berwald_verdict"] = berwald.verdict
    e.consistent = e.verdict == berwald.verdict
    return e


# constant flag curvature ---------------------------------------------------

def constant_flag_test(nav: NavigationData, points, tangents, transverse,
                       tol: float = PREDICATE_TOL, ode_tol: float = ODE_TOL) -> ReportEntry:
    """Constant flag curvature K iff W unit Killing and h of constant curvature K."""
    pts = _points(points)
    Ks, secK, sres = [], [], []
    for x, ys, us in zip(pts, tangents, transverse):
        Ks.extend(np.atleast_1d(flag_curvature(nav, x, ys, us)).tolist())
        mj = metric_jet(nav.h, x, 2)
        fit = fit_tensor(riemann_tensor(nav.h, x, mj), constant_curvature_model(mj.h))
        secK.append(fit.c)
        sres.append(fit.residual)
    spread = max(Ks) - min(Ks)
    killing = nav_weakly_berwald_test(nav, pts, tol)
    const_h = max(sres) <= tol and (max(secK) - min(secK)) <= tol
    e = ReportEntry("constantK", spread, float(np.std(Ks)), spread <= ode_tol,
                    [float(np.mean(Ks))],
                    details={"sectional_K_spread": max(secK) - min(secK),
                             "sectional_residual_max": max(sres),
                             "killing_residual_max": killing.residual_max})
    e.consistent = e.verdict == (killing.verdict and const_h)
    return e
