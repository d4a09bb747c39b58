"""Command line entry point: ``kropinalab verify|classify|geodesic|flow``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import dynamics as D
from .jetcalc import ParseError
from .scenes import BUILTINS, SceneError, load_scene
from .suite import NUMERIC_ERRORS, SUITES, coverage_table, run_suite

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class InputError(ValueError):
    pass


def _vector(text: str, n: int, name: str) -> np.ndarray:
    try:
        v = np.array([float(t) for t in text.replace(",", " ").split()])
    except ValueError:
        raise InputError(f"--{name}: not a list of numbers: {text!r}") from None
    if v.shape != (n,):
        raise InputError(f"--{name}: expected {n} components, got {v.size}")
    return v


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report(args, suite: str) -> int:
    scene = load_scene(args.scene)
    result = run_suite(scene, suite, seed=args.seed, points=args.points)
    text = json.dumps(result.as_dict(timings=not args.no_timings), indent=2, sort_keys=False)
    _emit(text + "\n", args.out)
    for key in result.numeric_failures:
        print(f"numeric failure in {key}: {result.entries[key].error}", file=sys.stderr)
    for key in result.mismatches():
        print(f"mismatch: {key}", file=sys.stderr)
    return result.exit_code


def cmd_verify(args) -> int:
    if args.list_coverage:
        print(coverage_table())
        if args.scene is None:
            return EXIT_OK
    if args.scene is None:
        raise InputError("verify: a scene file or built-in name is required")
    return _report(args, args.suite)


def cmd_classify(args) -> int:
    return _report(args, "classify")


def _track_csv(t, x, y, F) -> str:
    return D.GeodesicTrack(t, x, y, F, "", 0.0).to_csv()


def _flow_F(nav, x, y) -> np.ndarray:
    hv = nav.h(x)
    w0 = np.einsum("...ij,...i,...j->...", hv, nav.W(x), y)
    h00 = np.einsum("...ij,...i,...j->...", hv, y, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(w0 > 0, h00 / (2.0 * w0), np.nan)


def cmd_geodesic(args) -> int:
    scene = load_scene(args.scene)
    x0, y0 = _vector(args.x0, scene.n, "x0"), _vector(args.y0, scene.n, "y0")
    try:
        track = D.integrate_geodesic(scene.nav, x0, y0, args.T, args.dt, mode=args.mode,
                                     box=scene.chart_box)
    except (D.ChartExitError, D.ConicDomainError) as exc:
        if exc.partial is not None:
            t, s = exc.partial
            n = scene.n
            _emit(_track_csv(t, s[:, :n], s[:, n:], _flow_F(scene.nav, s[:, :n], s[:, n:])),
                  args.out)
        raise
    _emit(track.to_csv(), args.out)
    return EXIT_OK


def cmd_flow(args) -> int:
    scene = load_scene(args.scene)
    x0, y0 = _vector(args.x0, scene.n, "x0"), _vector(args.y0, scene.n, "y0")
    try:
        tr = D.integrate_flow(scene.nav, x0, y0, args.T, args.dt, scene.chart_box)
    except D.ChartExitError as exc:
        p = exc.partial
        _emit(_track_csv(p.t, p.x, p.y, _flow_F(scene.nav, p.x, p.y)), args.out)
        raise
    _emit(_track_csv(tr.t, tr.x, tr.y, _flow_F(scene.nav, tr.x, tr.y)), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kropinalab",
        description="Kropina metrics through navigation data: classification and flows. "
                    f"Built-in scenes: {', '.join(BUILTINS)}.")
    sub = p.add_subparsers(dest="command", required=True)

    def report_opts(sp):
        sp.add_argument("--out", help="write JSON here instead of stdout")
        sp.add_argument("--seed", type=int, help="override the scene seed")
        sp.add_argument("--points", type=int, help="override the number of sample points")
        sp.add_argument("--no-timings", action="store_true", help="omit timings from the report")

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("scene", nargs="?", help="scene file or built-in name")
    v.add_argument("--suite", choices=sorted(SUITES), default="all")
    v.add_argument("--list-coverage", action="store_true",
                   help="print the suite key -> operation -> property table")
    report_opts(v)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("classify", help="JSON report of the classification suite")
    c.add_argument("scene")
    report_opts(c)
    c.set_defaults(func=cmd_classify)

    for name, func, helptext in (("geodesic", cmd_geodesic, "integrate a geodesic (CSV)"),
                                 ("flow", cmd_flow, "integrate the flow of W (CSV)")):
        g = sub.add_parser(name, help=helptext)
        g.add_argument("scene")
        g.add_argument("--x0", required=True, help="initial point, e.g. '0.1,0,0'")
        g.add_argument("--y0", required=True, help="initial tangent vector")
        g.add_argument("--T", type=float, default=1.0, help="parameter span")
        g.add_argument("--dt", type=float, default=D.DEFAULT_DT, help="RK4 step")
        g.add_argument("--out", help="write CSV here instead of stdout")
        if name == "geodesic":
            g.add_argument("--mode", choices=("finsler", "riemann"), default="finsler")
        g.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SceneError, ParseError, InputError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
