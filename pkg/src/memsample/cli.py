"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage or parameter error,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import sys
from pathlib import Path

from . import __version__, analytic, checks, figures, simulator, solver
from .model import Action, ModelParams

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def write_manifest(path: Path, command: str, args: argparse.Namespace, **extra) -> None:
    lines = [f"command={command}", f"version={__version__}",
             f"timestamp={_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}"]
    for key, value in sorted(vars(args).items()):
        if key not in ("handler", "command"):
            lines.append(f"{key}={value}")
    lines += [f"{k}={v}" for k, v in extra.items()]
    Path(f"{path}.manifest").write_text("\n".join(lines) + "\n")


def _write_csv(path: Path, columns, rows, command: str, args, **extra) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_csv_text(columns, rows))
    write_manifest(path, command, args, **extra)


def _params(args) -> ModelParams:
    try:
        return ModelParams(args.p, args.c)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_closed_form(args) -> int:
    params = _params(args)
    report = analytic.optimal_threshold(params)
    row = {"p": params.p, "c": params.c, "Y_prime": report.Y_prime, "Y0_star": report.Y0_star,
           "g_star": report.g_star, "lower_bound": report.lower_bound, "Y0_tilde": report.Y0_tilde}
    for key in ("Y_prime", "Y0_star", "g_star", "lower_bound", "Y0_tilde"):
        print(f"{key}={row[key]!r}")
    if report.tie:
        print(f"tie: Y0={report.Y0_star + 1} attains the same cost")
    if args.out:
        _write_csv(Path(args.out), row.keys(), [row], "closed-form", args)
    return EXIT_OK


def cmd_solve(args) -> int:
    params = _params(args)
    if not args.tol > 0:
        raise UsageError(f"--tol must be positive, got {args.tol}")
    grid = solver.GridSpec.for_params(params)
    if args.ymax is not None:
        try:
            grid = solver.GridSpec(args.ymax, args.ymax)
            grid.check_covers(params)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    result = solver.relative_value_iteration(params, grid, tol=args.tol, max_iters=args.max_iters)
    threshold = solver.extract_threshold(result.policy)
    print(f"g={result.g:.6f} threshold={threshold if threshold is not None else 'none'} "
          f"iterations={result.iterations} span={result.span_at_stop:.3e} converged={result.converged}")
    if args.out:
        rows = []
        for x in range(grid.x_max + 1):
            for y in range(max(x, 1), grid.y_max + 1):
                rows.append({"x": x, "y": y, "action": Action(int(result.policy.actions[x, y])).name.lower(),
                             "f": float(result.f.values[x, y])})
        _write_csv(Path(args.out), ("x", "y", "action", "f"), rows, "solve", args,
                   g=repr(result.g), threshold=threshold, iterations=result.iterations,
                   span_at_stop=repr(result.span_at_stop), converged=result.converged, y_max=grid.y_max)
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


SIM_COLUMNS = ("p", "c", "policy", "slots", "seed", "mean_cost", "ci_halfwidth", "mean_age", "sample_rate")


def cmd_simulate(args) -> int:
    params = _params(args)
    try:
        policy = simulator.parse_policy(args.policy)
        config = simulator.SimConfig(args.slots, args.warmup, args.seed, args.batches)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    est = simulator.simulate(params, policy, config)
    row = {"p": params.p, "c": params.c, "policy": str(policy), "slots": config.slots, "seed": est.seed,
           "mean_cost": est.mean_cost, "ci_halfwidth": est.ci_halfwidth, "mean_age": est.mean_age,
           "sample_rate": est.sample_rate}
    text = _csv_text(SIM_COLUMNS, [row])
    sys.stdout.write(text)
    if args.out:
        _write_csv(Path(args.out), SIM_COLUMNS, [row], "simulate", args, rng=simulator.RNG_NAME)
    return EXIT_OK


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_figures(args) -> int:
    if args.figure not in figures.FIGURES + ("all",):
        raise UsageError(f"unknown figure {args.figure!r}; choose from {', '.join(figures.FIGURES)} or all")
    wanted = figures.FIGURES if args.figure == "all" else (args.figure,)
    out = Path(args.out)
    problems = []
    for name in wanted:
        if name == "fig2":
            rows = figures.fig2_rows(args.p, args.c)
            problems += figures.check_fig2(rows)
            columns = figures.FIG2_COLUMNS
        elif name == "fig3":
            rows = figures.fig3_rows(c_values=args.c_values)
            problems += figures.check_fig3(rows)
            columns = figures.FIG3_COLUMNS
        else:
            rows = figures.fig4_rows(c_values=args.c_values)
            problems += figures.check_fig4(rows)
            columns = figures.FIG4_COLUMNS
        _write_csv(out / f"{name}.csv", columns, rows, f"figures {name}", args)
        print(f"wrote {out / f'{name}.csv'}")
    for problem in problems:
        print(f"property violated: {problem}", file=sys.stderr)
    return EXIT_FAILED if problems else EXIT_OK


def cmd_verify(args) -> int:
    if not args.p_grid or not args.c_grid:
        raise UsageError("--p-grid and --c-grid must be non-empty")
    try:
        for p in args.p_grid:
            for c in args.c_grid:
                ModelParams(p, c)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    results = checks.run_all(args.p_grid, args.c_grid, slots=args.slots, seed=args.seed, jobs=args.jobs)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"summary passed={len(results) - len(failed)} failed={len(failed)} total={len(results)}")
    for r in failed:
        print(f"failed: {r.name}", file=sys.stderr)
    if args.out:
        rows = [{"check": r.name, "passed": r.passed, "detail": r.detail} for r in results]
        _write_csv(Path(args.out), ("check", "passed", "detail"), rows, "verify", args)
    return EXIT_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memsample", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def model_flags(p, default_p=None, default_c=None):
        p.add_argument("--p", type=float, required=default_p is None, default=default_p,
                       help="write probability per slot, 0 < p <= 1")
        p.add_argument("--c", type=float, required=default_c is None, default=default_c,
                       help="cost per sample, c >= 0")

    cf = sub.add_parser("closed-form", help="optimal threshold, optimal cost and lower bound")
    model_flags(cf)
    cf.add_argument("--out", help="also write a one-row CSV here")
    cf.set_defaults(handler=cmd_closed_form)

    so = sub.add_parser("solve", help="relative value iteration on a truncated grid")
    model_flags(so)
    so.add_argument("--tol", type=float, default=1e-9, help="span stopping tolerance (default 1e-9)")
    so.add_argument("--ymax", type=int, default=None, help="grid cap for both ages (default: sized from p, c)")
    so.add_argument("--max-iters", type=int, default=1_000_000, help="sweep limit (default 1000000)")
    so.add_argument("--out", help="CSV of x,y,action,f")
    so.set_defaults(handler=cmd_solve)

    si = sub.add_parser("simulate", help="Monte Carlo average cost of a policy")
    model_flags(si)
    si.add_argument("--policy", required=True, help="threshold:<int> | always | never | periodic:<int>")
    si.add_argument("--slots", type=int, default=1_000_000, help="horizon in slots (default 1000000)")
    si.add_argument("--warmup", type=int, default=10_000, help="discarded prefix (default 10000)")
    si.add_argument("--batches", type=int, default=30, help="batch-means batches (default 30)")
    si.add_argument("--seed", type=int, default=0, help="64-bit RNG seed (default 0)")
    si.add_argument("--out", help="also write the CSV row here")
    si.set_defaults(handler=cmd_simulate)

    fi = sub.add_parser("figures", help="CSV data for the threshold and cost plots")
    fi.add_argument("--figure", default="all", help="fig2 | fig3 | fig4 | all (default all)")
    fi.add_argument("--out", default="figures", help="output directory (default ./figures)")
    fi.add_argument("--p", type=float, default=0.5, help="write probability for fig2 (default 0.5)")
    fi.add_argument("--c", type=float, default=80.0, help="sampling cost for fig2 (default 80)")
    fi.add_argument("--c-values", type=_float_list, default=list(figures.DEFAULT_C_VALUES),
                    help="comma-separated sampling costs for fig3/fig4 (default 20,40,80)")
    fi.set_defaults(handler=cmd_figures)

    ve = sub.add_parser("verify", help="run the full cross-check suite")
    ve.add_argument("--p-grid", type=_float_list, default=list(checks.DEFAULT_P_GRID),
                    help="comma-separated p values (default 0.1,0.3,0.5,0.7,0.9)")
    ve.add_argument("--c-grid", type=_float_list, default=list(checks.DEFAULT_C_GRID),
                    help="comma-separated c values (default 0,1,5,20,80)")
    ve.add_argument("--slots", type=int, default=1_000_000, help="slots per simulation check (default 1000000)")
    ve.add_argument("--seed", type=int, default=20240601, help="base seed (default 20240601)")
    ve.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    ve.add_argument("--out", help="also write the results as CSV")
    ve.set_defaults(handler=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
