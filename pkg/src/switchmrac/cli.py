"""Command-line interface: run simulations, verify properties, sweep configs.

Exit codes: 0 success, 1 configuration error, 2 finite-escape abort,
3 verification failure.
"""

import argparse
import concurrent.futures
import os
import sys

from . import metrics
from .config import load_config
from .engine import available_cores, run_scenario
from .errors import ConfigError, FiniteEscapeError, SwitchMracError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ESCAPE = 2
EXIT_VERIFY = 3


def _parser():
    ap = argparse.ArgumentParser(
        prog="switchmrac",
        description=(
            "Adaptive tracking control for switched MIMO plants: closed-loop "
            "simulation with online switch detection, filter resetting, and "
            "dead-zoned scalar-regressor adaptation."
        ),
    )
    ap.add_argument(
        "--core",
        choices=available_cores(),
        default=None,
        help="stepping core (default: compiled when available)",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    runp = sub.add_parser("run", help="simulate a scenario and export telemetry")
    runp.add_argument("--config", required=True, help="scenario YAML ('canonical' for the bundle)")
    runp.add_argument("--out", required=True, help="CSV output path")
    runp.add_argument("--svg", default=None, help="directory for SVG plots")
    runp.add_argument("--decimate", type=int, default=None, help="export every Nth row")

    verp = sub.add_parser("verify", help="run a scenario and check its properties")
    verp.add_argument("--config", required=True)
    verp.add_argument("--c2-min", type=float, default=0.1, help="required decay rate per window")
    verp.add_argument("--residual-tol", type=float, default=1e-3)
    verp.add_argument("--end-ratio", type=float, default=0.05, help="max xi_end / xi_start")
    verp.add_argument(
        "--mono-slack", type=float, default=1e-9,
        help="per-step tolerance for the parameter-error monotonicity check",
    )

    swp = sub.add_parser("sweep", help="run every config in a directory")
    swp.add_argument("--dir", required=True, help="directory of scenario YAML files")
    swp.add_argument("--out", required=True, help="output directory for CSVs")
    swp.add_argument("--jobs", type=int, default=1)
    swp.add_argument("--decimate", type=int, default=None)
    return ap


def cmd_run(args):
    scn, out_cfg = load_config(args.config)
    result = run_scenario(scn, core=args.core)
    decimate = args.decimate if args.decimate is not None else out_cfg["decimation"]
    rows = result.telemetry.write_csv(args.out, decimate=decimate)
    print(
        f"{scn.name}: {result.telemetry.rows} steps in {result.runtime:.2f}s "
        f"({result.core} core), rho={result.rho:.3e}, "
        f"{len(result.events)} detection(s); wrote {rows} rows to {args.out}"
    )
    for ev in result.events:
        print(f"  detected at t={ev.t_detect:.6f}, reset at t={ev.t_reset:.6f}")
    if args.svg:
        from .svgplot import write_run_plots

        for path in write_run_plots(result, args.svg, decimate=decimate):
            print(f"  plot: {path}")
    return EXIT_OK


def verify_result(result, c2_min=0.1, residual_tol=1e-3, end_ratio=0.05,
                  mono_slack=1e-9, out=print):
    """Evaluate per-window checks; returns (reports, list of failures)."""
    reports = metrics.build_reports(result, slack=mono_slack)
    failures = []
    n_switches = len(result.scenario.plant.segments) - 1
    if len(result.events) != n_switches:
        failures.append(
            f"expected {n_switches} detections, observed {len(result.events)}"
        )
    for rep in reports:
        out(rep.summary())
        wid = f"window {rep.index}"
        if rep.t_active is None:
            failures.append(f"{wid}: adaptation never engaged")
            continue
        if not rep.omega_sustained:
            failures.append(f"{wid}: Omega fell back below rho after engagement")
        if rep.omega_lb < 0.0:
            failures.append(f"{wid}: negative scalar regressor")
        if rep.mono_violations:
            failures.append(
                f"{wid}: {rep.mono_violations} monotonicity violations "
                f"(max step {rep.mono_max_step:.2e})"
            )
        if rep.c2 <= c2_min:
            failures.append(f"{wid}: decay rate {rep.c2:.3f} <= {c2_min}")
        if rep.xi_start > 0 and rep.xi_end > end_ratio * rep.xi_start:
            failures.append(
                f"{wid}: xi shrank only to "
                f"{rep.xi_end / rep.xi_start:.2%} of its start value"
            )
        if rep.residual_max > residual_tol:
            failures.append(
                f"{wid}: regression residual {rep.residual_max:.2e} > {residual_tol}"
            )
    return reports, failures


def cmd_verify(args):
    scn, _ = load_config(args.config)
    result = run_scenario(scn, core=args.core)
    print(
        f"{scn.name}: rho={result.rho:.3e}, {len(result.events)} detection(s), "
        f"core={result.core}, runtime={result.runtime:.2f}s"
    )
    _, failures = verify_result(
        result,
        c2_min=args.c2_min,
        residual_tol=args.residual_tol,
        end_ratio=args.end_ratio,
        mono_slack=args.mono_slack,
    )
    if failures:
        for f in failures:
            print(f"FAIL: {f}")
        return EXIT_VERIFY
    print("all checks passed")
    return EXIT_OK


def _sweep_one(core, cfg_path, out_path, decimate):
    scn, out_cfg = load_config(cfg_path)
    result = run_scenario(scn, core=core)
    dec = decimate if decimate is not None else out_cfg["decimation"]
    result.telemetry.write_csv(out_path, decimate=dec)
    return (
        f"{os.path.basename(cfg_path)}: ok, {len(result.events)} detection(s), "
        f"{result.runtime:.2f}s"
    )


def cmd_sweep(args):
    cfgs = sorted(
        os.path.join(args.dir, f)
        for f in os.listdir(args.dir)
        if f.endswith((".yaml", ".yml"))
    )
    if not cfgs:
        print(f"no configs found in {args.dir}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(args.out, exist_ok=True)
    jobs = max(1, args.jobs)
    results = []
    if jobs == 1:
        for cfg in cfgs:
            out_path = os.path.join(
                args.out, os.path.splitext(os.path.basename(cfg))[0] + ".csv"
            )
            results.append(_sweep_one(args.core, cfg, out_path, args.decimate))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {}
            for cfg in cfgs:
                out_path = os.path.join(
                    args.out, os.path.splitext(os.path.basename(cfg))[0] + ".csv"
                )
                futs[pool.submit(_sweep_one, args.core, cfg, out_path, args.decimate)] = cfg
            done = {}
            for fut in concurrent.futures.as_completed(futs):
                done[futs[fut]] = fut.result()
            results = [done[cfg] for cfg in cfgs]
    for line in results:
        print(line)
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.cmd == "run":
            return cmd_run(args)
        if args.cmd == "verify":
            return cmd_verify(args)
        return cmd_sweep(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FiniteEscapeError as exc:
        print(f"finite-escape abort: {exc}", file=sys.stderr)
        return EXIT_ESCAPE
    except SwitchMracError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
