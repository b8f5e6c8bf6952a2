"""Command-line front end.

Commands evaluate the analytic model, solve the equal-airtime allocation,
run the Monte Carlo simulator or the closed control loop, and sweep packet
sizes; each emits delimited rows (CSV or JSON lines) and can render the
matching figure next to them.

Exit codes: 0 success, 2 validation error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

import numpy as np

from . import controller, model, optimizer, phy, scenario, simulator
from .errors import ConvergenceError, ValidationError

MODEL_COLUMNS = ("station", "rate_mbps", "scheme", "throughput_mbps",
                 "airtime_frac", "utility_total")
OPTIMIZE_COLUMNS = ("station", "rate_mbps", "tau", "w_exact", "ecw", "cw",
                    "airtime_exact", "airtime_rounded", "residual",
                    "utility_pf", "utility_dcf", "utility_gain_vs_dcf",
                    "utility_rounding_gap")
SIMULATE_COLUMNS = ("station", "scheme", "mode", "attempts", "successes",
                    "noise_failures", "collisions", "busy_success_us",
                    "busy_failure_us", "throughput_mbps", "airtime_frac",
                    "tau_empirical", "slots_empty", "slots_success",
                    "slots_failure", "n_slots", "elapsed_us")
SWEEP_COLUMNS = ("payload_bytes", "scheme", "station", "rate_mbps",
                 "throughput_mbps", "airtime_frac", "utility_total",
                 "utility_gap")


def _write_rows(rows, columns, out_path, fmt):
    fh = sys.stdout if out_path in (None, "-") else open(out_path, "w", newline="")
    try:
        if fmt == "jsonl":
            for row in rows:
                fh.write(json.dumps({k: row[k] for k in columns}) + "\n")
        else:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row[k]) for k in columns])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _solver_cfg(args):
    seed = getattr(args, "seed", None)
    return optimizer.SolverConfig() if seed is None else optimizer.SolverConfig(seed=seed)


def _dcf_metrics(scn: scenario.Scenario):
    tau = optimizer.dcf_attempt_prob(scn.baseline.cw_min, scn.baseline.m,
                                     scn.stations, scn.profile)
    return tau, model.evaluate(scn.stations, scn.profile, tau)


def _model_rows(scn: scenario.Scenario, cfg=None):
    _, dcf = _dcf_metrics(scn)
    alloc = optimizer.solve_equal_airtime(scn.stations, scn.profile, cfg)
    pf = model.evaluate(scn.stations, scn.profile, alloc.tau)
    rows = []
    for scheme, metrics in (("dcf", dcf), ("pf", pf)):
        for i, spec in enumerate(scn.stations):
            rows.append({
                "station": spec.label,
                "rate_mbps": spec.rate,
                "scheme": scheme,
                "throughput_mbps": float(metrics.stations.throughput[i]),
                "airtime_frac": float(metrics.stations.airtime[i]),
                "utility_total": metrics.utility,
            })
    return rows


def cmd_model(scn: scenario.Scenario, args):
    rows = _model_rows(scn, _solver_cfg(args))
    _write_rows(rows, MODEL_COLUMNS, args.out, args.format)
    if args.plot_dir:
        from . import plots

        plots.plot_model(rows, plots.figure_path(args.plot_dir, "model", scn.name))
    return 0


def cmd_optimize(scn: scenario.Scenario, args):
    alloc = optimizer.solve_equal_airtime(scn.stations, scn.profile,
                                          _solver_cfg(args))
    evaluation = optimizer.evaluate_allocation(alloc, scn.stations, scn.profile)
    _, dcf = _dcf_metrics(scn)
    rows = []
    for i, spec in enumerate(scn.stations):
        rows.append({
            "station": spec.label,
            "rate_mbps": spec.rate,
            "tau": float(alloc.tau.tau[i]),
            "w_exact": float(alloc.w_exact[i]),
            "ecw": int(alloc.ecw[i]),
            "cw": int(alloc.cw[i]),
            "airtime_exact": float(evaluation.exact.stations.airtime[i]),
            "airtime_rounded": float(evaluation.rounded.stations.airtime[i]),
            "residual": alloc.residual,
            "utility_pf": alloc.utility_at_solution,
            "utility_dcf": dcf.utility,
            "utility_gain_vs_dcf": alloc.utility_at_solution - dcf.utility,
            "utility_rounding_gap": evaluation.utility_gap,
        })
    _write_rows(rows, OPTIMIZE_COLUMNS, args.out, args.format)
    return 0


def cmd_simulate(scn: scenario.Scenario, args):
    if scn.sim is None:
        raise ValidationError("sim: scenario has no sim section")
    cfg = scn.sim
    if args.slots is not None:
        cfg = dataclasses.replace(cfg, n_slots=args.slots)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.mode is not None:
        cfg = dataclasses.replace(cfg, mode=args.mode)

    scheme = args.scheme
    if cfg.mode == "p_persistent":
        if scheme == "pf":
            tau = optimizer.solve_equal_airtime(scn.stations, scn.profile).tau.tau
        else:
            tau = optimizer.dcf_attempt_prob(scn.baseline.cw_min, scn.baseline.m,
                                             scn.stations, scn.profile).tau
        result = simulator.run_p_persistent(tau, scn.stations, scn.profile, cfg)
    else:
        if scheme == "pf":
            alloc = optimizer.solve_equal_airtime(scn.stations, scn.profile)
            cw, m = alloc.cw, np.zeros(len(scn.stations), dtype=int)
        else:
            n = len(scn.stations)
            cw = np.full(n, scn.baseline.cw_min)
            m = np.full(n, scn.baseline.m)
        result = simulator.run_backoff(cw, m, scn.stations, scn.profile, cfg)

    rows = []
    for i, spec in enumerate(scn.stations):
        rows.append({
            "station": spec.label,
            "scheme": scheme,
            "mode": cfg.mode,
            "attempts": int(result.attempts[i]),
            "successes": int(result.successes[i]),
            "noise_failures": int(result.noise_failures[i]),
            "collisions": int(result.collisions[i]),
            "busy_success_us": float(result.busy_success_us[i]),
            "busy_failure_us": float(result.busy_failure_us[i]),
            "throughput_mbps": float(result.throughput_mbps[i]),
            "airtime_frac": float(result.airtime_frac[i]),
            "tau_empirical": float(result.tau_empirical[i]),
            "slots_empty": result.slots_empty,
            "slots_success": result.slots_success,
            "slots_failure": result.slots_failure,
            "n_slots": result.n_slots,
            "elapsed_us": result.elapsed_us,
        })
    _write_rows(rows, SIMULATE_COLUMNS, args.out, args.format)
    if args.plot_dir:
        from . import plots

        plots.plot_simulate(rows, plots.figure_path(args.plot_dir, "simulate", scn.name))
    return 0


def cmd_closed_loop(scn: scenario.Scenario, args):
    if scn.closed_loop is None:
        raise ValidationError("closed_loop: scenario has no closed_loop section")
    script = scn.closed_loop
    if args.scheme is not None:
        script = dataclasses.replace(script, scheme=args.scheme)
    if args.seed is not None:
        script = dataclasses.replace(script, seed=args.seed)
    cfg = controller.ControllerConfig(beacon_interval_us=scn.beacon_interval_us)
    trace = controller.run_closed_loop(script, scn.profile, cfg)
    _write_rows(trace.rows, controller.ClosedLoopTrace.COLUMNS, args.out, args.format)
    if args.plot_dir:
        from . import plots

        plots.plot_closed_loop(trace.rows,
                               plots.figure_path(args.plot_dir, "closed_loop", scn.name))
    return 0


def cmd_sweep_payload(scn: scenario.Scenario, args):
    if scn.sweep is None:
        raise ValidationError("sweep: scenario has no sweep section")
    rows = []
    for payload_bytes in scn.sweep.payloads():
        stations = [dataclasses.replace(s, payload=payload_bytes * 8.0)
                    for s in scn.stations]
        swept = dataclasses.replace(scn, stations=stations)
        point = _model_rows(swept, _solver_cfg(args))
        utilities = {r["scheme"]: r["utility_total"] for r in point}
        gap = utilities["pf"] - utilities["dcf"]
        for r in point:
            rows.append({
                "payload_bytes": payload_bytes,
                "scheme": r["scheme"],
                "station": r["station"],
                "rate_mbps": r["rate_mbps"],
                "throughput_mbps": r["throughput_mbps"],
                "airtime_frac": r["airtime_frac"],
                "utility_total": r["utility_total"],
                "utility_gap": gap,
            })
    _write_rows(rows, SWEEP_COLUMNS, args.out, args.format)
    if args.plot_dir:
        from . import plots

        plots.plot_sweep(rows, plots.figure_path(args.plot_dir, "sweep_payload", scn.name))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wifair",
        description="Multi-rate WLAN airtime-fair contention window tooling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, slots=False, scheme=None):
        p.add_argument("--scenario", required=True, help="scenario YAML path")
        p.add_argument("--out", default="-", help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
        p.add_argument("--plot-dir", default=None,
                       help="directory for rendered figures (PNG)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        if slots:
            p.add_argument("--slots", type=int, default=None)
        if scheme:
            p.add_argument("--scheme", choices=("pf", "dcf"), default=scheme[0],
                           help="which allocation drives the run")

    common(sub.add_parser("model", help="analytic throughput/airtime per scheme"))
    common(sub.add_parser("optimize", help="equal-airtime allocation report"))
    sim_p = sub.add_parser("simulate", help="Monte Carlo slot simulation")
    common(sim_p, slots=True, scheme=("pf",))
    sim_p.add_argument("--mode", choices=("p_persistent", "backoff"), default=None)
    loop_p = sub.add_parser("closed-loop", help="closed control loop time series")
    common(loop_p, scheme=(None,))
    common(sub.add_parser("sweep-payload", help="payload sweep of model utilities"))
    return parser


_COMMANDS = {
    "model": cmd_model,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "closed-loop": cmd_closed_loop,
    "sweep-payload": cmd_sweep_payload,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scn = scenario.load_scenario(args.scenario)
        code = _COMMANDS[args.command](scn, args)
    except ValidationError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return 2
    except ConvergenceError as err:
        print(f"solver did not converge: {err}", file=sys.stderr)
        return 3
    except FileNotFoundError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
