"""Command line interface: ``capmink {solve,measure,capacity,verify}``.

Exit codes: 0 success, 1 input error, 2 inadmissible target, 3 stalled
solve, 4 failed verification.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .capacitary import capacity_report, curvature_measure
from .config import ConfigError, SolverConfig, check_p
from .diagnostics import verify_all
from .geometry import ConvexPolygon, GeometryError, polygon_from_dict
from .measures import MeasureError, SurfaceMeasure
from .minkowski import (
    Inadmissible,
    MinkowskiProblem,
    OptimizerConfig,
    Stalled,
    solve_density,
    solve_discrete,
    uniqueness_check,
)

EXIT_OK, EXIT_INPUT, EXIT_INADMISSIBLE, EXIT_STALLED, EXIT_FAILED = 0, 1, 2, 3, 4
SVG_SIZE = 1000
SVG_MARGIN = 0.05


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# file I/O


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: top level must be an object")
    return data


def _load(path: str, what: str, loader):
    data = _read_json(path)
    try:
        return data, loader(data)
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc.args[0]}") from exc
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad {what}: {exc}") from exc


def _density_from_dict(data: dict) -> tuple[np.ndarray, np.ndarray]:
    if "theta_rad" in data and "theta_deg" in data:
        raise ValueError("theta_rad and theta_deg are mixed")
    if "theta_rad" in data:
        theta = np.asarray(data["theta_rad"], dtype=float)
    elif "theta_deg" in data:
        theta = np.deg2rad(np.asarray(data["theta_deg"], dtype=float))
    else:
        raise KeyError("theta_rad")
    psi = np.asarray(data["psi"], dtype=float)
    if theta.shape != psi.shape or theta.ndim != 1:
        raise ValueError("psi: length differs from the angle list")
    return theta, psi


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _dump(obj: dict, path: str | None, deterministic: bool) -> None:
    if not deterministic:
        obj = {**obj, "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    _write(json.dumps(obj, indent=2, sort_keys=True) + "\n", path)


# ---------------------------------------------------------------------------
# SVG


def render_svg(P: ConvexPolygon, weights: np.ndarray | None = None) -> str:
    """Polygon outline with outward normal ticks scaled by atom weight."""
    v = P.vertices
    mids = 0.5 * (v + np.roll(v, -1, axis=0))
    n = P.normal_vectors
    pts = [v]
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        span = float(np.ptp(v, axis=0).max())
        ticks = mids + n * (0.25 * span * w / w.max())[:, None]
        pts.append(ticks)
    allp = np.vstack(pts)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    inner = SVG_SIZE * (1.0 - 2.0 * SVG_MARGIN)
    s = inner / max(float((hi - lo).max()), 1e-300)
    off = SVG_SIZE * SVG_MARGIN + 0.5 * (inner - s * (hi - lo))

    def xy(p):
        # y axis points down in SVG
        return off[0] + s * (p[0] - lo[0]), SVG_SIZE - (off[1] + s * (p[1] - lo[1]))

    path = " ".join(f"{x:.3f},{y:.3f}" for x, y in map(xy, v))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">',
        f'<rect width="{SVG_SIZE}" height="{SVG_SIZE}" fill="white"/>',
        f'<polygon points="{path}" fill="none" stroke="black" stroke-width="2"/>',
    ]
    if weights is not None:
        for a, b in zip(mids, ticks):
            (x1, y1), (x2, y2) = xy(a), xy(b)
            out.append(f'<line x1="{x1:.3f}" y1="{y1:.3f}" x2="{x2:.3f}" y2="{y2:.3f}" stroke="crimson" stroke-width="3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def _solver_config(args) -> SolverConfig:
    if args.config is None:
        return SolverConfig()
    data = _read_json(args.config)
    try:
        return SolverConfig.from_dict(data)
    except (ConfigError, TypeError) as exc:
        raise InputError(f"{args.config}: {exc}") from exc


def _p(args, data: dict | None = None) -> float:
    p = args.p if args.p is not None else (data or {}).get("p")
    if p is None:
        raise InputError("--p is required (or a \"p\" field in the input)")
    try:
        return check_p(p)
    except (ConfigError, TypeError, ValueError) as exc:
        raise InputError(f"p: {exc}") from exc


def _optimizer(args, data: dict) -> OptimizerConfig:
    over = data.get("optimizer", {})
    try:
        opt = OptimizerConfig(**over)
    except TypeError as exc:
        raise InputError(f"optimizer: {exc}") from exc
    if args.seed is not None:
        opt = replace(opt, seed=args.seed)
    return opt


def cmd_solve(args) -> int:
    data = _read_json(args.input)
    cfg = _solver_config(args)
    p = _p(args, data)
    opt = _optimizer(args, data)
    if "psi" in data:
        _, (theta_s, psi) = _load(args.input, "density", _density_from_dict)
        schedule = _schedule(args.schedule)
        run = solve_density(theta_s, psi, p, schedule, cfg, opt)
        out = {
            "p": p,
            "schedule": list(schedule),
            "solutions": [s.to_dict() for s in run.solutions],
            "table": run.table(),
        }
        _dump(out, args.out, args.deterministic)
        if args.report:
            _write(_density_table(run.table()), args.report)
        if args.svg:
            last = run.solutions[-1]
            _write(render_svg(last.polygon, last.target.weights), args.svg)
        return EXIT_OK
    _, mu = _load(args.input, "measure", SurfaceMeasure.from_dict)
    prob = MinkowskiProblem(mu, p, cfg, opt)
    if args.restarts and args.restarts > 1:
        dist, sols = uniqueness_check(prob, args.restarts)
        sol = sols[0]
    else:
        dist, sol = None, solve_discrete(prob)
    out = sol.to_dict()
    if dist is not None:
        out["restarts"] = args.restarts
        out["uniqueness_distance"] = dist
    _dump(out, args.out, args.deterministic)
    if args.svg:
        _write(render_svg(sol.polygon, mu.weights), args.svg)
    if args.report:
        _write(_solution_table(sol), args.report)
    return EXIT_OK


def _schedule(text: str | None) -> tuple:
    if text is None:
        return (8, 16, 32)
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError as exc:
        raise InputError(f"--schedule: expected comma separated integers, got {text!r}") from exc


def _density_table(rows: list) -> str:
    head = f"{'m':>4} {'kkt':>10} {'R_out/R_in':>11} {'weak_prev':>10} {'haus_prev':>10} {'MA_mean':>10} {'MA_max':>10}"
    lines = [head]
    for r in rows:
        wd = "-" if r["weak_distance_prev"] is None else f"{r['weak_distance_prev']:.3e}"
        hd = "-" if r["hausdorff_prev"] is None else f"{r['hausdorff_prev']:.3e}"
        lines.append(
            f"{r['m']:>4} {r['kkt_residual']:10.3e} {r['circumradius'] / r['inradius']:11.6f} {wd:>10} {hd:>10}"
            f" {r['monge_ampere_mean']:10.3e} {r['monge_ampere_max']:10.3e}"
        )
    return "\n".join(lines) + "\n"


def _solution_table(sol) -> str:
    lines = [f"objective      {sol.objective:.10g}", f"kkt_residual   {sol.kkt_residual:.3e}", f"rescale_factor {sol.rescale_factor:.10g}"]
    lines.append(f"certificate    {sol.certificate:.3e}")
    for t, c, m in zip(sol.target.theta, sol.target.weights, sol.measure):
        lines.append(f"theta {t:9.6f}  target {c:12.6g}  computed {m:12.6g}  rel {abs(m - c) / c:.2e}")
    return "\n".join(lines) + "\n"


def _polygon(args) -> ConvexPolygon:
    _, P = _load(args.input, "polygon", polygon_from_dict)
    return P


def cmd_measure(args) -> int:
    data = _read_json(args.input)
    P = _polygon(args)
    p = _p(args, data)
    cfg = _solver_config(args)
    mu = curvature_measure(P, p, cfg=cfg)
    out = {**mu.to_dict(), "p": p, "total": mu.total}
    _dump(out, args.out, args.deterministic)
    if args.svg:
        _write(render_svg(P, mu.weights), args.svg)
    return EXIT_OK


def cmd_capacity(args) -> int:
    data = _read_json(args.input)
    P = _polygon(args)
    p = _p(args, data)
    cfg = _solver_config(args)
    rep = capacity_report(P, p, cfg=cfg)
    print(f"pcap {rep.pcap:.10g}" if p < 2 else f"log capacity {rep.pcap:.10g}", file=sys.stderr)
    _dump(rep.to_dict(), args.out, args.deterministic)
    if args.report:
        _write(f"p {p}\npcap {rep.pcap:.10g} ({rep.pcap_method})\nstar3_residual {rep.star3_residual:.3e}\n", args.report)
    return EXIT_OK


def cmd_verify(args) -> int:
    data = _read_json(args.input)
    P = _polygon(args)
    p = _p(args, data)
    cfg = _solver_config(args)
    rep = verify_all(P, p, cfg)
    _dump(rep.to_dict(deterministic=args.deterministic), args.out, args.deterministic)
    if args.report:
        _write(rep.table() + "\n", args.report)
    else:
        print(rep.table(), file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="capmink", description="Capacitary curvature measures of convex polygons and their inverse problem.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("solve", cmd_solve, "polygon with a prescribed measure (or density)"),
        ("measure", cmd_measure, "curvature measure of a polygon"),
        ("capacity", cmd_capacity, "capacity and identity report of a polygon"),
        ("verify", cmd_verify, "run the verification suite on a polygon"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.set_defaults(func=fn)
        sp.add_argument("input", help="input JSON file")
        sp.add_argument("--p", type=float, help="exponent in [1.05, 2]")
        sp.add_argument("--out", help="output JSON path (default stdout)")
        sp.add_argument("--svg", help="write an SVG drawing here")
        sp.add_argument("--report", help="write a plain text report here")
        sp.add_argument("--config", help="solver config JSON")
        sp.add_argument("--deterministic", action="store_true", help="omit timestamps and timings")
        if name == "solve":
            sp.add_argument("--schedule", help="refinement schedule for density input, e.g. 8,16,32")
            sp.add_argument("--restarts", type=int, default=1, help="random restarts for the uniqueness check")
            sp.add_argument("--seed", type=int, help="seed of the random restarts")
    return ap


def _thread_limit():
    value = os.environ.get("CAPMINK_THREADS")
    if not value:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    try:
        n = int(value)
    except ValueError as exc:
        raise InputError(f"CAPMINK_THREADS: expected an integer, got {value!r}") from exc
    return threadpool_limits(limits=max(1, n))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.p is not None:
        try:
            check_p(args.p)
        except ConfigError as exc:
            print(f"error: --p: {exc}", file=sys.stderr)
            return EXIT_INPUT
    try:
        with _thread_limit():
            return args.func(args)
    except Inadmissible as exc:
        print(f"inadmissible target: {exc}", file=sys.stderr)
        return EXIT_INADMISSIBLE
    except Stalled as exc:
        print(f"stalled: {exc}", file=sys.stderr)
        if exc.best is not None and args.out not in (None, "-"):
            _dump({**exc.best.to_dict(), "stalled": True}, args.out, args.deterministic)
        return EXIT_STALLED
    except (InputError, GeometryError, MeasureError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
