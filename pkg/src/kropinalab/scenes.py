"""Scene files, built-in fixtures and generated scenes.

A scene is an INI file::

    [scene]
    name = hopf-s3
    dim = 3
    seed = 1
    presentation = navigation      ; or alphabeta
    killing = true                 ; optional: assert L_W h = 0 on the grid

    [metric]                       ; h_ij (navigation) or a_ij (alphabeta), i <= j
    h11 = "4/(1+x1^2+x2^2+x3^2)^2"

    [wind]                         ; navigation only
    W1 = "x1*x3 - x2"

    [form]                         ; alphabeta only; kappa is optional
    b1 = "1"
    kappa = "0"

    [sampling]
    box = "-0.5 0.5; -0.5 0.5; -0.5 0.5"
    chart_box = "-4 4; -4 4; -4 4"
    points = 10
    tangents_per_point = 5
    conic_margin = 0.2
    dt = 1e-3

    [tolerances]
    identity = 1e-8
    predicate = 1e-6
    ode = 1e-5

    [expected]
    T-wB = true

Omitted off-diagonal metric entries are zero.
"""

from __future__ import annotations

import configparser
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .classify import IDENTITY_TOL, ODE_TOL, PREDICATE_TOL
from .jetcalc import ParseError, parse
from .kropina import UNIT_TOL, KropinaData, NavigationData, from_navigation, to_navigation
from .riemann import (MAX_DIM, Field, lie_derivative_metric, metric_from_exprs,
                      vector_from_exprs)
from .sampling import DEFAULT_CONIC_MARGIN, SplitMix64

KILLING_GRID_TOL = 1e-9
GRID_SIZE = 5


class SceneError(ValueError):
    """Schema or constraint violation; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class Scene:
    name: str
    n: int
    presentation: str                     # "navigation" or "alphabeta"
    metric: list[list[str]]
    vector: list[str]                     # W^i or b_i
    kappa: str | None = None
    box: np.ndarray = None
    chart_box: np.ndarray = None
    points: int = 10
    tangents_per_point: int = 5
    conic_margin: float = DEFAULT_CONIC_MARGIN
    dt: float = 1e-3
    tolerances: dict = field(default_factory=lambda: {
        "identity": IDENTITY_TOL, "predicate": PREDICATE_TOL, "ode": ODE_TOL})
    seed: int = 1
    expected: dict = field(default_factory=dict)
    killing: bool = False
    nav: NavigationData | None = field(default=None, repr=False)
    kropina: KropinaData | None = field(default=None, repr=False)

    def echo(self) -> dict:
        d = {"name": self.name, "n": self.n, "presentation": self.presentation,
             "metric": self.metric,
             ("wind" if self.presentation == "navigation" else "form"): self.vector,
             "box": self.box.tolist(), "chart_box": self.chart_box.tolist(),
             "points": self.points, "tangents_per_point": self.tangents_per_point,
             "conic_margin": self.conic_margin, "dt": self.dt}
        if self.kappa is not None:
            d["kappa"] = self.kappa
        return d


# parsing -------------------------------------------------------------------

def _unquote(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        return s[1:-1]
    return s


def parse_box(text: str, n: int, path: str) -> np.ndarray:
    rows = [r.split() for r in _unquote(text).split(";") if r.strip()]
    try:
        box = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise SceneError(path, f"not a list of 'lo hi' pairs ({exc})") from None
    if box.shape != (n, 2):
        raise SceneError(path, f"expected {n} 'lo hi' pairs separated by ';'")
    if np.any(~np.isfinite(box)) or np.any(box[:, 1] <= box[:, 0]):
        raise SceneError(path, "degenerate box (need lo < hi)")
    return box


def _expr(text: str, n: int, path: str) -> str:
    src = _unquote(text)
    try:
        parse(src, n)
    except ParseError as exc:
        raise SceneError(path, str(exc)) from None
    return src


def _get(cp, section, key, conv, default, path=None):
    if not cp.has_option(section, key):
        if default is _REQUIRED:
            raise SceneError(path or f"[{section}] {key}", "missing")
        return default
    raw = _unquote(cp.get(section, key))
    try:
        return conv(raw)
    except ValueError:
        raise SceneError(f"[{section}] {key}", f"invalid value {raw!r}") from None


_REQUIRED = object()


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(s)


def parse_scene(text: str, source: str = "<scene>", validate: bool = True) -> Scene:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise SceneError("", f"{source}: {exc}") from None
    if not cp.has_section("scene"):
        raise SceneError("[scene]", "missing section")
    name = _get(cp, "scene", "name", str, source)
    n = _get(cp, "scene", "dim", int, _REQUIRED)
    if not 2 <= n <= MAX_DIM:
        raise SceneError("[scene] dim", f"dimension {n} outside 2..{MAX_DIM}")
    pres = _get(cp, "scene", "presentation", str, "navigation")
    if pres not in ("navigation", "alphabeta"):
        raise SceneError("[scene] presentation", f"unknown presentation {pres!r}")
    seed = _get(cp, "scene", "seed", lambda s: int(s, 0), 1)
    killing = _get(cp, "scene", "killing", _bool, False)

    mname = "h" if pres == "navigation" else "a"
    if not cp.has_section("metric"):
        raise SceneError("[metric]", "missing section")
    metric = [["0"] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            key = f"{mname}{i + 1}{j + 1}"
            alt = f"{mname}{j + 1}{i + 1}"
            raw = cp.get("metric", key, fallback=None) or cp.get("metric", alt, fallback=None)
            if raw is None:
                if i == j:
                    raise SceneError(f"[metric] {key}", "missing diagonal entry")
                continue
            metric[i][j] = metric[j][i] = _expr(raw, n, f"[metric] {key}")
    allowed = {f"{mname}{i + 1}{j + 1}" for i in range(n) for j in range(n)}
    for key in cp.options("metric"):
        if key not in allowed:
            raise SceneError(f"[metric] {key}", "unknown key")

    vsec, vname = ("wind", "W") if pres == "navigation" else ("form", "b")
    if not cp.has_section(vsec):
        raise SceneError(f"[{vsec}]", "missing section")
    vector = []
    for i in range(n):
        key = f"{vname}{i + 1}"
        if not cp.has_option(vsec, key):
            raise SceneError(f"[{vsec}] {key}", "missing")
        vector.append(_expr(cp.get(vsec, key), n, f"[{vsec}] {key}"))
    kappa = None
    if pres == "alphabeta" and cp.has_option("form", "kappa"):
        kappa = _expr(cp.get("form", "kappa"), n, "[form] kappa")

    if not cp.has_section("sampling"):
        raise SceneError("[sampling]", "missing section")
    box = parse_box(_get(cp, "sampling", "box", str, _REQUIRED), n, "[sampling] box")
    chart = cp.get("sampling", "chart_box", fallback=None)
    chart_box = (parse_box(chart, n, "[sampling] chart_box") if chart is not None
                 else default_chart_box(box))
    if np.any(chart_box[:, 0] > box[:, 0]) or np.any(chart_box[:, 1] < box[:, 1]):
        raise SceneError("[sampling] chart_box", "must contain the sampling box")
    scene = Scene(
        name=name, n=n, presentation=pres, metric=metric, vector=vector, kappa=kappa,
        box=box, chart_box=chart_box,
        points=_get(cp, "sampling", "points", int, 10),
        tangents_per_point=_get(cp, "sampling", "tangents_per_point", int, 5),
        conic_margin=_get(cp, "sampling", "conic_margin", float, DEFAULT_CONIC_MARGIN),
        dt=_get(cp, "sampling", "dt", float, 1e-3),
        seed=seed, killing=killing)
    if scene.points < 1 or scene.tangents_per_point < 1:
        raise SceneError("[sampling]", "points and tangents_per_point must be positive")
    if not 0 < scene.dt < 1:
        raise SceneError("[sampling] dt", "must lie in (0, 1)")
    if cp.has_section("tolerances"):
        for key in cp.options("tolerances"):
            if key not in scene.tolerances:
                raise SceneError(f"[tolerances] {key}", "unknown key")
            scene.tolerances[key] = _get(cp, "tolerances", key, float, None)
    if cp.has_section("expected"):
        from .suite import SUITE_KEYS
        for key in cp.options("expected"):
            if key not in SUITE_KEYS:
                raise SceneError(f"[expected] {key}", "unknown suite key")
            scene.expected[key] = _get(cp, "expected", key, _bool, None)
    return build(scene, validate)


def load_scene(path_or_name: str, validate: bool = True) -> Scene:
    if path_or_name in BUILTINS:
        return builtin(path_or_name, validate)
    try:
        with open(path_or_name, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SceneError("", f"cannot read scene {path_or_name!r}: {exc.strerror}") from None
    return parse_scene(text, path_or_name, validate)


def default_chart_box(box: np.ndarray) -> np.ndarray:
    return np.column_stack([box[:, 0] - 3.0, box[:, 1] + 3.0])


# building and validation ---------------------------------------------------

def grid(box: np.ndarray, size: int = GRID_SIZE) -> np.ndarray:
    axes = [np.linspace(lo, hi, size) for lo, hi in box]
    return np.array(list(itertools.product(*axes)))


def _fmt(p) -> str:
    return "(" + ",".join(f"{v:g}" for v in p) + ")"


def _check_metric(field_: Field, pts: np.ndarray, path: str) -> None:
    vals = field_(pts)
    bad = ~np.all(np.isfinite(vals), axis=(-2, -1))
    if np.any(bad):
        raise SceneError(path, f"metric not finite at {_fmt(pts[np.argmax(bad)])}")
    ev = np.linalg.eigvalsh(vals)[:, 0]
    k = int(np.argmin(ev))
    if ev[k] <= 0:
        raise SceneError(path, f"metric not positive definite at {_fmt(pts[k])} "
                               f"(smallest eigenvalue {ev[k]:.3g})")


def build(scene: Scene, validate: bool = True) -> Scene:
    """Compile the expressions and derive the other presentation."""
    n = scene.n
    try:
        m = metric_from_exprs(n, scene.metric)
        v = vector_from_exprs(n, scene.vector)
    except (ValueError, ParseError) as exc:
        raise SceneError("[metric]", str(exc)) from None
    pts = grid(scene.box)
    if scene.presentation == "navigation":
        nav = NavigationData(m, v)
        if validate:
            _check_metric(m, pts, "[metric]")
            res = np.abs(np.sqrt(np.einsum("kij,ki,kj->k", m(pts), v(pts), v(pts))) - 1.0)
            k = int(np.argmax(res))
            if not np.isfinite(res[k]) or res[k] > UNIT_TOL:
                size = float(np.sqrt(v(pts[k]) @ m(pts[k]) @ v(pts[k])))
                raise SceneError("[wind]", f"unit-length violation at {_fmt(pts[k])}: |W|={size:g}")
        kropina = from_navigation(nav)
    else:
        kappa = None
        if scene.kappa is not None:
            kappa = Field.from_exprs(n, np.array(scene.kappa, dtype=object), shape=())
        kropina = KropinaData(m, v, kappa)
        if validate:
            _check_metric(m, pts, "[metric]")
            b2 = kropina.b_squared(pts)
            k = int(np.argmin(b2))
            if not b2[k] > 0:
                raise SceneError("[form]", f"b^2 = {b2[k]:.3g} <= 0 at {_fmt(pts[k])}")
            if kappa is not None:
                res = kropina.gauge_residual(pts)
                k = int(np.argmax(np.abs(res)))
                if abs(res[k]) > 1e-10:
                    raise SceneError("[form] kappa",
                                     f"e^kappa b^2 != 4 at {_fmt(pts[k])} (residual {res[k]:.3g})")
        nav = to_navigation(kropina)
    if validate and scene.killing:
        worst = max(float(np.max(np.abs(lie_derivative_metric(nav.h, nav.W, p)))) for p in pts)
        if worst > KILLING_GRID_TOL:
            raise SceneError("[scene] killing", f"W is not Killing on the grid (|L_W h| = {worst:.3g})")
    return replace(scene, nav=nav, kropina=kropina)


# built-in fixtures ---------------------------------------------------------

_ALL_TRUE = dict.fromkeys(
    ["T-constantK", "T-wB", "T-B", "I-eq22", "I-eq26", "T-pscalar", "T-K0-berwald",
     "E-killingF", "E-eq413", "E-eq414", "E-eq416", "T-geodesic-image",
     "T-isometry-equiv"], True)


def _diag(n: int, entries) -> list[list[str]]:
    m = [["0"] * n for _ in range(n)]
    for i, e in enumerate(entries):
        m[i][i] = e
    return m


def _hopf_conf() -> str:
    return "4/(1+x1^2+x2^2+x3^2)^2"


BUILTINS = {
    "flat-const": dict(
        n=2, metric=_diag(2, ["1", "1"]), vector=["1", "0"],
        box=[[-1, 1], [-1, 1]], chart_box=[[-3, 3], [-3, 3]],
        expected=dict(_ALL_TRUE)),
    "shear": dict(
        n=2, metric=_diag(2, ["1", "1"]), vector=["cos(x1)", "sin(x1)"],
        box=[[-1, 1], [-1, 1]], chart_box=[[-4, 4], [-4, 4]],
        expected={**_ALL_TRUE, **dict.fromkeys(
            ["T-constantK", "T-wB", "T-B", "T-pscalar", "T-K0-berwald", "E-killingF",
             "E-eq414", "E-eq416", "T-geodesic-image", "T-isometry-equiv"], False)}),
    "hopf-s3": dict(
        n=3, metric=_diag(3, [_hopf_conf()] * 3),
        vector=["x1*x3 - x2", "x2*x3 + x1", "(1 - x1^2 - x2^2 + x3^2)/2"],
        box=[[-0.5, 0.5]] * 3, chart_box=[[-4, 4]] * 3, killing=True,
        expected={**_ALL_TRUE, "T-B": False, "I-eq26": False, "T-K0-berwald": False}),
    "prod-r-s2": dict(
        n=3, metric=_diag(3, ["1", "1", "sin(x2)^2"]), vector=["1", "0", "0"],
        box=[[-1, 1], [1, 2.1], [-1, 1]], chart_box=[[-4, 4], [0.3, 2.8], [-4, 4]],
        killing=True,
        expected={**_ALL_TRUE, "T-constantK": False, "T-pscalar": False,
                  "T-K0-berwald": False}),
}


def builtin(name: str, validate: bool = True, **overrides) -> Scene:
    if name not in BUILTINS:
        raise SceneError("", f"unknown built-in scene {name!r}; choose from {sorted(BUILTINS)}")
    spec = dict(BUILTINS[name])
    spec.update(overrides)
    scene = Scene(name=name, n=spec["n"], presentation="navigation",
                  metric=spec["metric"], vector=spec["vector"],
                  box=np.asarray(spec["box"], float),
                  chart_box=np.asarray(spec["chart_box"], float),
                  expected=dict(spec["expected"]), killing=spec.get("killing", False))
    return build(scene, validate)


# generated scenes ----------------------------------------------------------

def _num(v: float) -> str:
    s = repr(float(v))
    return f"({s})" if s.startswith("-") else s


def perturbed_scene(base: Scene, delta: float, rng: SplitMix64, name: str | None = None) -> Scene:
    """W + delta V renormalised to unit h-length, V a random polynomial field.

    The expected table is dropped: only cross-route consistency is meaningful.
    """
    n = base.n
    c = rng.normals((n, n + 1))
    V = [" + ".join([_num(c[i, 0])] + [f"{_num(c[i, j + 1])}*x{j + 1}" for j in range(n)])
         for i in range(n)]
    comps = [f"(({w}) + {_num(delta)}*({v}))" for w, v in zip(base.vector, V)]
    quad = " + ".join(f"({base.metric[i][j]})*{comps[i]}*{comps[j]}"
                      for i in range(n) for j in range(n) if base.metric[i][j] != "0")
    vector = [f"{comp}/sqrt({quad})" for comp in comps]
    scene = replace(base, name=name or f"{base.name}+{delta:g}V", vector=vector,
                    expected={}, killing=False, nav=None, kropina=None)
    return build(scene)


def random_alphabeta_scene(rng: SplitMix64, n: int | None = None, name: str = "random-ab") -> Scene:
    """Random (a, b) presentation: a near the identity, b with a nonzero constant part."""
    n = n or (2 + int(rng.uniform() * 2))
    metric = [["0"] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            u = rng.uniform()
            k = 1 + int(rng.uniform() * n)
            if i == j:
                metric[i][j] = f"1 + {0.3 * u!r}*sin(x{k})^2"
            else:
                metric[i][j] = metric[j][i] = f"{0.1 * (u - 0.5)!r}*cos(x{k})"
    c = rng.normals(n)
    c = c / np.linalg.norm(c) * (0.5 + rng.uniform())
    vector = []
    for i in range(n):
        k = 1 + int(rng.uniform() * n)
        vector.append(f"{_num(c[i])} + {0.2 * (rng.uniform() - 0.5)!r}*x{k}")
    scene = Scene(name=name, n=n, presentation="alphabeta", metric=metric, vector=vector,
                  box=np.array([[-1.0, 1.0]] * n), chart_box=np.array([[-3.0, 3.0]] * n))
    return build(scene)


def scene_to_ini(scene: Scene) -> str:
    """Serialise a scene back to the INI format read by :func:`parse_scene`."""
    m = "h" if scene.presentation == "navigation" else "a"
    lines = ["[scene]", f"name = {scene.name}", f"dim = {scene.n}", f"seed = {scene.seed}",
             f"presentation = {scene.presentation}"]
    if scene.killing:
        lines.append("killing = true")
    lines += ["", "[metric]"]
    for i in range(scene.n):
        for j in range(i, scene.n):
            if i == j or scene.metric[i][j] != "0":
                lines.append(f'{m}{i + 1}{j + 1} = "{scene.metric[i][j]}"')
    if scene.presentation == "navigation":
        lines += ["", "[wind]"] + [f'W{i + 1} = "{v}"' for i, v in enumerate(scene.vector)]
    else:
        lines += ["", "[form]"] + [f'b{i + 1} = "{v}"' for i, v in enumerate(scene.vector)]
        if scene.kappa is not None:
            lines.append(f'kappa = "{scene.kappa}"')
    box = "; ".join(f"{lo:g} {hi:g}" for lo, hi in scene.box)
    chart = "; ".join(f"{lo:g} {hi:g}" for lo, hi in scene.chart_box)
    lines += ["", "[sampling]", f'box = "{box}"', f'chart_box = "{chart}"',
              f"points = {scene.points}", f"tangents_per_point = {scene.tangents_per_point}",
              f"conic_margin = {scene.conic_margin!r}", f"dt = {scene.dt!r}",
              "", "[tolerances]"] + [f"{k} = {v!r}" for k, v in scene.tolerances.items()]
    if scene.expected:
        lines += ["", "[expected]"] + [f"{k} = {str(v).lower()}" for k, v in scene.expected.items()]
    return "\n".join(lines) + "\n"
