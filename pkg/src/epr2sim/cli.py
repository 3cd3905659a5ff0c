"""Command-line entry point: simulate, verify, chsh.

Exit codes: 0 success, 1 statistical failure (verify), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

from . import __version__
from .boxes import check_seed
from .core import BlochVector, StateParameter
from .harness import (
    ABS_FLOOR,
    CELLS,
    DEFAULT_THETAS,
    OPTIMAL_CHSH,
    PARTITION_RULE,
    Z_MAX,
    SweepRow,
    chsh,
    compare,
    default_settings,
    estimate,
    sweep,
)
from .protocols import PUBLIC_MODELS, SINGLET_STATE, get_model

CSV_COLUMNS = (
    ["model", "theta", "ax", "ay", "az", "bx", "by", "bz", "n", "seed"]
    + [f"p_{c}" for c in CELLS]
    + [f"q_{c}" for c in CELLS]
    + ["worst_z", "nonlocal_freq", "pass"]
)
FORMAT_VERSION = "1"
DEFAULT_SEED = 0


class UsageError(Exception):
    pass


def parse_vector(text: str) -> BlochVector:
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse vector {text!r}; expected x,y,z") from None
    if len(parts) != 3:
        raise UsageError(f"vector {text!r} needs exactly three components")
    try:
        return BlochVector(*parts)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def parse_count(text: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value.is_integer():
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(value)


@dataclass
class RunConfig:
    model: str
    theta: Optional[float]
    alice: BlochVector
    bob: BlochVector
    samples: int
    seed: int
    fmt: str
    z_max: float = Z_MAX
    abs_floor: float = ABS_FLOOR
    workers: int = 1


def _theta(args) -> Optional[float]:
    if getattr(args, "theta_deg", None) is not None:
        return math.radians(args.theta_deg)
    return args.theta


def _state(model: str, theta: Optional[float]) -> StateParameter:
    if model == "singlet":
        return SINGLET_STATE
    if theta is None:
        raise UsageError(f"--theta is required for model {model}")
    try:
        return StateParameter.from_theta(theta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _check_common(samples: int, seed: int) -> None:
    if samples < 1:
        raise UsageError("--samples must be at least 1")
    try:
        check_seed(seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def format_number(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    return repr(x) if isinstance(x, float) else str(x)


def render_rows(rows: Sequence[dict], fmt: str, seed: int) -> str:
    if fmt == "json":
        doc = {
            "header": {"spec_version": FORMAT_VERSION, "seed": seed,
                       "partition_rule": PARTITION_RULE, "package_version": __version__},
            "rows": [{k: row[k] for k in CSV_COLUMNS} for row in rows],
        }
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([format_number(row[k]) for k in CSV_COLUMNS])
    return buf.getvalue()


def render_table(row: dict) -> str:
    lines = [
        f"model={row['model']} theta={row['theta']:.6f} n={row['n']} seed={row['seed']}",
        f"{'':10}{'++':>10}{'+-':>10}{'-+':>10}{'--':>10}",
        f"{'estimate':10}" + "".join(f"{row['p_' + c]:>10.5f}" for c in CELLS),
        f"{'target':10}" + "".join(f"{row['q_' + c]:>10.5f}" for c in CELLS),
        f"worst z = {row['worst_z']:.3f}   nonlocal freq = {row['nonlocal_freq']:.6f}   "
        f"pass = {row['pass']}",
    ]
    return "\n".join(lines) + "\n"


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        with open(output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    cfg = RunConfig(args.model, _theta(args), parse_vector(args.alice), parse_vector(args.bob),
                    args.samples, args.seed, args.format, args.z_max, args.abs_floor, args.workers)
    _check_common(cfg.samples, cfg.seed)
    state = _state(cfg.model, cfg.theta)
    est = estimate(cfg.model, state, cfg.alice, cfg.bob, cfg.samples, cfg.seed, workers=cfg.workers)
    target = get_model(cfg.model).target(state, cfg.alice, cfg.bob)
    report = compare(est, target, cfg.z_max, cfg.abs_floor)
    row = SweepRow(cfg.model, state.theta, cfg.alice, cfg.bob, cfg.samples, cfg.seed, est, target, report).as_dict()
    text = render_table(row) if cfg.fmt == "table" else render_rows([row], cfg.fmt, cfg.seed)
    _emit(text, args.output)
    return 0


def _parse_thetas(args) -> list[float]:
    if args.thetas_deg:
        values = [math.radians(float(t)) for t in args.thetas_deg.split(",")]
    elif args.thetas:
        values = [float(t) for t in args.thetas.split(",")]
    else:
        values = list(DEFAULT_THETAS)
    for t in values:
        try:
            StateParameter.from_theta(t)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return values


def cmd_verify(args) -> int:
    _check_common(args.samples, args.seed)
    if args.pairs < 0:
        raise UsageError("--pairs must be non-negative")
    try:
        thetas = _parse_thetas(args)
    except ValueError:
        raise UsageError("cannot parse theta list") from None
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    for m in models:
        if m not in PUBLIC_MODELS:
            raise UsageError(f"unknown model {m!r}")
    if args.inject_fault:
        models = ["signaling-fault" if m == "preliminary" else m for m in models]
    settings = default_settings(args.pairs, args.seed)

    def progress(row):
        if args.verbose:
            print(f"[verify] {row.model} theta={row.theta:.4f} worst_z={row.report.worst_z:.2f}",
                  file=sys.stderr)

    result = sweep(thetas, settings, args.samples, args.seed, models=models,
                   z_max=args.z_max, abs_floor=args.abs_floor, workers=args.workers, progress=progress)
    rows = [r.as_dict() for r in result.rows]
    _emit(render_rows(rows, args.format, args.seed), args.output)

    worst = sorted(result.rows, key=lambda r: -r.report.worst_z)[:5]
    print(f"[verify] {len(rows)} rows, {sum(not r.report.passed for r in result.rows)} failing",
          file=sys.stderr)
    for r in worst:
        print(f"[verify] worst: {r.model} theta={r.theta:.4f} a={r.a.as_tuple()} b={r.b.as_tuple()} "
              f"z={r.report.worst_z:.2f} pass={r.report.passed}", file=sys.stderr)
    for u in result.usage:
        print(f"[verify] usage {u.model} theta={u.theta:.4f}: {u.observed:.6f} vs {u.expected:.6f} "
              f"pass={u.passed}", file=sys.stderr)
    return 0 if result.passed else 1


def cmd_chsh(args) -> int:
    _check_common(args.samples, args.seed)
    settings = tuple(parse_vector(s) for s in (args.a0, args.a1, args.b0, args.b1))
    state = _state(args.model, _theta(args))
    res = chsh(args.model, state, settings, args.samples, args.seed, workers=args.workers)
    if args.format == "json":
        doc = {"model": args.model, "theta": state.theta, "n": args.samples, "seed": args.seed,
               "S": res.s, "stderr": res.stderr, "analytic": res.analytic,
               "correlators": list(res.correlators)}
        _emit(json.dumps(doc, indent=2) + "\n", args.output)
    else:
        _emit(f"S = {res.s:.5f} +/- {res.stderr:.5f}   analytic = {res.analytic:.5f}\n", args.output)
    return 0


def _add_state_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta", type=float, help="entanglement angle in radians, (0, pi/4]")
    p.add_argument("--theta-deg", type=float, help="entanglement angle in degrees")


def _add_run_args(p: argparse.ArgumentParser, samples: int) -> None:
    p.add_argument("--samples", type=parse_count, default=samples)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", help="write to this file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epr2sim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="estimate one joint distribution")
    p.add_argument("--model", choices=PUBLIC_MODELS, default="epr2-full")
    _add_state_args(p)
    p.add_argument("--alice", required=True, help="x,y,z")
    p.add_argument("--bob", required=True, help="x,y,z")
    _add_run_args(p, 1_000_000)
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--z-max", type=float, default=Z_MAX)
    p.add_argument("--abs-floor", type=float, default=ABS_FLOOR)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the statistical acceptance sweep")
    p.add_argument("--models", default="preliminary,epr2-full")
    p.add_argument("--thetas", help="comma-separated radians")
    p.add_argument("--thetas-deg", help="comma-separated degrees")
    p.add_argument("--pairs", type=int, default=25, help="random setting pairs besides the anchors")
    _add_run_args(p, 1_000_000)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--z-max", type=float, default=Z_MAX)
    p.add_argument("--abs-floor", type=float, default=ABS_FLOOR)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("chsh", help="estimate the CHSH value S")
    p.add_argument("--model", choices=PUBLIC_MODELS, default="epr2-full")
    _add_state_args(p)
    a0, a1, b0, b1 = (",".join(repr(c) for c in v.as_tuple()) for v in OPTIMAL_CHSH)
    p.add_argument("--a0", default=a0)
    p.add_argument("--a1", default=a1)
    p.add_argument("--b0", default=b0)
    p.add_argument("--b1", default=b1)
    _add_run_args(p, 4_000_000)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_chsh)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"epr2sim {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
