"""Batch command-line front end.

Commands: compute (one record per (t, event) pair), verify (oracle and
identity suites), simulate (Monte Carlo estimate), sweep (CSV tables over a
time or position grid).

Exit codes: 0 ok, 1 verification failure, 2 usage/compatibility error,
3 numerical non-convergence. Output is JSON-lines or CSV; every numeric
payload field is deterministic for a fixed (spec, seed, version), elapsed_ms
being the one wall-clock exception.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from . import __version__
from .core import ParticleConfig, PositionEvent, ProbResult, ValidationError
from .core import validate_params
from .formulas import (
    TruncationPolicy,
    prob_consecutive,
    prob_first_m_large,
    prob_first_m_small,
    prob_single,
    prob_single_step_ic,
    transition_probability,
)
from .oracles import SimConfig, monte_carlo_estimate
from .quadrature import QuadConfig
from .suites import SUITES, run_suites

SCHEMA_VERSION = 1
SWEEP_COLUMNS = ("method", "p", "t", "Y", "event", "value", "imag_residual",
                 "quad_err", "trunc_err", "n_terms", "n_nodes", "elapsed_ms")
SIM_COLUMNS = ("method", "p", "t", "Y", "event", "estimate", "std_error",
               "trials", "seed", "elapsed_ms")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3


class UsageError(Exception):
    pass


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(",") if v != "")
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from exc


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(",") if v != "")
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated number list, got {text!r}") from exc


def _parse_y(text: str) -> ParticleConfig:
    text = str(text).strip()
    if text.startswith("step"):
        origin = 1
        if ":" in text:
            name, _, tail = text.partition(":")
            if name != "step":
                raise UsageError(f"bad configuration descriptor {text!r}")
            try:
                origin = int(tail)
            except ValueError as exc:
                raise UsageError(f"bad step origin in {text!r}") from exc
        elif text != "step":
            raise UsageError(f"bad configuration descriptor {text!r}")
        return ParticleConfig.step(origin)
    return ParticleConfig.finite(_parse_int_list(text))


def _format_y(config: ParticleConfig) -> str:
    if config.kind == "step":
        return f"step:{config.origin}"
    return ",".join(str(v) for v in config.positions)


def _format_event(event: PositionEvent) -> str:
    return f"{event.first_index}:" + ",".join(str(v) for v in event.values)


def _quad_from_args(args) -> QuadConfig:
    return QuadConfig(tol=args.tol, budget=args.budget, workers=args.workers)


def _resolve_event(args, config: ParticleConfig) -> PositionEvent:
    if args.x is None:
        raise UsageError("--x is required")
    values = _parse_int_list(args.x)
    method = args.method
    if method in ("thm4", "step"):
        if len(values) != 1:
            raise UsageError(f"--method {method} takes a single --x value")
        return PositionEvent.of(args.m or 1, values)
    if method == "thm3":
        if args.n is None:
            raise UsageError("--method thm3 requires --n")
        return PositionEvent.of(args.n, values)
    if method == "eq3":
        n = config.n_particles
        if n is not None and len(values) != n:
            raise UsageError(f"--method eq3 needs all {n} positions in --x")
        return PositionEvent.of(1, values)
    # thm1 / thm2: first m particles
    return PositionEvent.of(1, values)


def _dispatch(method: str, config: ParticleConfig, event: PositionEvent,
              t: float, params, quad: QuadConfig,
              policy: TruncationPolicy | None) -> ProbResult:
    # finite configurations small enough for exhaustive enumeration skip the
    # truncated-series machinery entirely
    needs_policy = config.kind == "step" or (
        config.n_particles is not None and config.n_particles > 9)
    use_policy = policy if needs_policy else None
    if method == "eq3":
        return transition_probability(config, event.values, t, params, quad)
    if method == "thm1":
        return prob_first_m_small(config, event.last_index, event.values, t, params, quad)
    if method == "thm2":
        return prob_first_m_large(config, event.last_index, event.values, t,
                                  params, quad, policy=use_policy)
    if method == "thm3":
        return prob_consecutive(config, event.first_index, event.last_index,
                                event.values, t, params, quad)
    if method == "thm4":
        return prob_single(config, event.last_index, event.values[0], t, params,
                           quad, policy=use_policy)
    if method == "step":
        return prob_single_step_ic(event.last_index, event.values[0], t, params,
                                   quad, policy=policy,
                                   origin=config.origin if config.kind == "step" else 1)
    raise UsageError(f"unknown method {method!r}")


def _record(method, p, t, config, event, result: ProbResult) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "method": method,
        "p": p,
        "t": t,
        "Y": _format_y(config),
        "event": _format_event(event),
        "value": result.probability,
        "imag_residual": result.imag_residual,
        "quad_err": result.est_quadrature_error,
        "trunc_err": result.est_truncation_error,
        "n_terms": result.n_terms,
        "n_nodes": result.n_nodes,
        "elapsed_ms": round(result.elapsed * 1e3, 3),
        "converged": result.converged,
    }


def _emit(records, fmt: str, columns, out) -> None:
    if fmt == "json":
        for rec in records:
            out.write(json.dumps(rec, sort_keys=True) + "\n")
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        writer.writerow([rec.get(c, "") for c in columns])


def _add_common(sub):
    sub.add_argument("--p", type=float, required=True, help="right-jump probability")
    sub.add_argument("--y", default=None,
                     help="initial configuration: comma list or step[:origin]")
    sub.add_argument("--t", default="1.0", help="time, or comma-separated time grid")
    sub.add_argument("--tol", type=float, default=1e-10, help="quadrature tolerance")
    sub.add_argument("--budget", type=float, default=1e9,
                     help="max integrand evaluations per computation")
    sub.add_argument("--workers", type=int, default=1, help="grid evaluation threads")
    sub.add_argument("--trunc-tol", type=float, default=1e-9,
                     help="series truncation tolerance (step configurations)")
    sub.add_argument("--format", choices=("json", "csv"), default="json")
    sub.add_argument("--output", default=None, help="output path (default stdout)")
    sub.add_argument("--seed", type=int, default=20260810)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asepquad",
        description="Exact ASEP joint-position probabilities by contour quadrature",
    )
    parser.add_argument("--version", action="version", version=f"asepquad {__version__}")
    parser.add_argument("--config", default=None,
                        help="JSON file with default values for any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("compute", "sweep"):
        s = sub.add_parser(name)
        _add_common(s)
        s.add_argument("--method", required=True,
                       choices=("eq3", "thm1", "thm2", "thm3", "thm4", "step"))
        s.add_argument("--n", type=int, default=None, help="first particle of the event")
        s.add_argument("--m", type=int, default=None, help="last particle of the event")
        s.add_argument("--x", default=None,
                       help="event positions (comma list), or a grid for sweep")
        if name == "sweep":
            s.set_defaults(format="csv")

    s = sub.add_parser("simulate")
    _add_common(s)
    s.add_argument("--n", type=int, default=1, help="first particle of the event")
    s.add_argument("--x", required=True, help="event positions (comma list)")
    s.add_argument("--trials", type=int, default=10000)

    s = sub.add_parser("verify")
    s.add_argument("--suite", default="all",
                   help="|".join(sorted(SUITES)) + "|all (comma list allowed)")
    s.add_argument("--points", type=int, default=100, help="draws per identity case")
    s.add_argument("--N", type=int, default=3, help="particle count for the chain suite")
    s.add_argument("--p", type=float, default=0.5)
    s.add_argument("--t", type=float, default=0.5)
    s.add_argument("--trials", type=int, default=20000)
    s.add_argument("--seed", type=int, default=20260810)
    s.add_argument("--output", default=None)
    return parser


def _load_config_defaults(parser, argv):
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config) as handle:
        values = json.load(handle)
    if not isinstance(values, dict):
        raise UsageError("--config file must hold a JSON object of flag defaults")
    for action in parser._subparsers._group_actions[0].choices.values():
        usable = {k: v for k, v in values.items()
                  if any(a.dest == k for a in action._actions)}
        action.set_defaults(**usable)


def _cmd_compute(args, sweep: bool) -> int:
    params = validate_params(args.p)
    config = _parse_y(args.y) if args.y else ParticleConfig.step()
    if args.method == "step" and config.kind != "step":
        raise UsageError("--method step needs --y step[:origin] (or no --y)")
    if args.method != "step" and args.y is None:
        raise UsageError("--y is required for this method")
    quad = _quad_from_args(args)
    policy = TruncationPolicy(tol=args.trunc_tol)
    times = _parse_float_list(args.t)
    if not times:
        raise UsageError("empty time grid")

    if sweep and args.method in ("thm4", "step") and args.x and "," in args.x:
        x_grid = _parse_int_list(args.x)
        if not x_grid:
            raise UsageError("empty position grid")
        if len(times) != 1:
            raise UsageError("sweep over --x needs a single --t")
        pairs = [(times[0], PositionEvent.of(args.m or 1, (x,))) for x in x_grid]
    else:
        event = _resolve_event(args, config)
        pairs = [(t, event) for t in times]

    records = []
    worst_converged = True
    for t, event in pairs:
        result = _dispatch(args.method, config, event, t, params, quad, policy)
        worst_converged = worst_converged and result.converged
        records.append(_record(args.method, args.p, t, config, event, result))
    out = open(args.output, "w") if args.output else sys.stdout
    try:
        _emit(records, args.format, SWEEP_COLUMNS, out)
    finally:
        if args.output:
            out.close()
    return EXIT_OK if worst_converged else EXIT_NOT_CONVERGED


def _cmd_simulate(args) -> int:
    params = validate_params(args.p)
    config = _parse_y(args.y) if args.y else ParticleConfig.step()
    event = PositionEvent.of(args.n, _parse_int_list(args.x))
    times = _parse_float_list(args.t)
    records = []
    for t in times:
        import time as _time

        t0 = _time.perf_counter()
        est, se = monte_carlo_estimate(event, config, t, params,
                                       SimConfig(seed=args.seed, trials=args.trials))
        records.append({
            "schema": SCHEMA_VERSION,
            "method": "mc",
            "p": args.p,
            "t": t,
            "Y": _format_y(config),
            "event": _format_event(event),
            "estimate": est,
            "std_error": se,
            "trials": args.trials,
            "seed": args.seed,
            "elapsed_ms": round((_time.perf_counter() - t0) * 1e3, 3),
        })
    out = open(args.output, "w") if args.output else sys.stdout
    try:
        _emit(records, args.format, SIM_COLUMNS, out)
    finally:
        if args.output:
            out.close()
    return EXIT_OK


def _cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [s.strip() for s in args.suite.split(",")]
    results = run_suites(
        names,
        points=args.points,
        seed=args.seed,
        n_specs=20,
        n_particles=args.N,
        p=args.p,
        t=args.t,
        trials=args.trials,
    )
    out = open(args.output, "w") if args.output else sys.stdout
    try:
        for r in results:
            out.write(r.line() + "\n")
        failures = [r for r in results if not r.passed]
        if failures:
            out.write(f"{len(failures)} of {len(results)} checks failed\n")
            for r in failures:
                out.write("replay: " + json.dumps({
                    "suite": r.suite, "name": r.name, "residual": r.residual,
                    "threshold": r.threshold, "seed": args.seed,
                }, sort_keys=True) + "\n")
            return EXIT_VERIFY_FAILED
        out.write(f"all {len(results)} checks passed\n")
    finally:
        if args.output:
            out.close()
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _load_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        if args.command == "compute":
            return _cmd_compute(args, sweep=False)
        if args.command == "sweep":
            return _cmd_compute(args, sweep=True)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "verify":
            return _cmd_verify(args)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
