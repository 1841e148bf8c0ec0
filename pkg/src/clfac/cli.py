"""Command-line front end.

Exit code contract: 0 on success (warnings included), 1 when the
validate subcommand finds an invariant violation or a run fails at
runtime, 2 on usage or configuration errors.
"""
import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import ClfacError, ConfigError, InvalidRadii
from .simulator import (contour_rows_to_csv, contour_sweep,
                        margin_violations, read_trajectory_csv,
                        run_closed_loop, saturation_fraction)
from .suite import build_suite

_CSV_NAME = {"nominal": "trajectory_nominal.csv",
             "ac": "trajectory_actor_critic.csv"}
_VALIDATE_HORIZON_CAP = 1000


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clfac",
        description="Certified sample-and-hold control experiments: bounds "
                    "pipeline, closed-loop runs, and cost-ratio sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("bounds", "compute certified constants and report them as JSON"),
        ("simulate", "run closed-loop trajectories and write CSV logs"),
        ("contour", "sweep start states and write cost-ratio rows"),
        ("validate", "run invariant checks on a short trajectory"),
    ]
    for name, help_text in specs:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", metavar="PATH",
                        help="JSON experiment configuration file")
        sp.add_argument("--out", metavar="DIR",
                        help="output directory (overrides config)")
        sp.add_argument("--controller", choices=("nominal", "ac", "both"),
                        help="controller selection (overrides config)")
        sp.add_argument("--seed", type=int, help="seed (overrides config)")
        sp.add_argument("--workers", type=int,
                        help="contour worker count (overrides config)")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.controller is not None:
        overrides["controller"] = args.controller
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _run_config(cfg: ExperimentConfig, controller: str, **overrides):
    rc = cfg.run_config(controller=controller, **overrides)
    try:
        rc.validate()
    except ValueError as exc:
        raise ConfigError(str(exc))
    return rc


def _controllers(cfg: ExperimentConfig):
    return ("nominal", "ac") if cfg.controller == "both" else (cfg.controller,)


def cmd_bounds(cfg: ExperimentConfig, out_dir: str) -> int:
    suite = build_suite(cfg)
    doc = suite.bounds_document()
    text = json.dumps(doc, indent=2)
    print(text)
    with open(os.path.join(out_dir, "bounds.json"), "w") as fh:
        fh.write(text + "\n")
    for w in suite.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_simulate(cfg: ExperimentConfig, out_dir: str) -> int:
    for controller in _controllers(cfg):
        _run_config(cfg, controller)      # x0 precondition before the build
    suite = build_suite(cfg)
    summary = {}
    for controller in _controllers(cfg):
        rc = _run_config(cfg, controller)
        log = run_closed_loop(rc, suite)
        path = os.path.join(out_dir, _CSV_NAME[controller])
        log.to_csv(path)
        entry = {
            "csv": path,
            "steps": log.n_steps,
            "reaching_time": log.reaching_time,
            "cost": log.total_cost,
            "cost_undefined": log.total_cost is None,
            "saturation_fraction": saturation_fraction(log),
            "fallback_count": log.fallback_count,
            "soft_decay_count": log.soft_decay_count,
            "margin_violations": margin_violations(log),
            "boundedness_violations": log.boundedness_violations,
        }
        summary[controller] = entry
        cost_text = ("undefined (target ball not reached)"
                     if log.total_cost is None else f"{log.total_cost:.6g}")
        reach_text = ("-" if log.reaching_time is None
                      else f"{log.reaching_time:.6g}")
        print(f"{controller}: steps={log.n_steps} reaching_time={reach_text} "
              f"cost={cost_text} "
              f"saturation={entry['saturation_fraction']:.4f} "
              f"fallbacks={log.fallback_count} "
              f"margin_violations={entry['margin_violations']} "
              f"boundedness_violations={log.boundedness_violations}")
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return 0


def cmd_contour(cfg: ExperimentConfig, out_dir: str) -> int:
    suite = build_suite(cfg)
    base = _run_config(cfg, "nominal")
    rows = contour_sweep(suite, base, cfg.contour.x1_range,
                         cfg.contour.x2_range, cfg.contour.density,
                         cfg.contour.x3_0, cfg.seed, cfg.workers)
    path = os.path.join(out_dir, "contour.csv")
    contour_rows_to_csv(rows, path)
    ratios = [row[4] for row in rows if row[4] is not None]
    summary = {
        "csv": path,
        "points": len(rows),
        "defined": len(ratios),
        "median_ratio_pct": float(np.median(ratios)) if ratios else None,
        "fraction_below_100": (float(np.mean([r < 100.0 for r in ratios]))
                               if ratios else None),
    }
    with open(os.path.join(out_dir, "contour_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if ratios:
        print(f"contour: {summary['points']} points, {summary['defined']} "
              f"defined, median ratio {summary['median_ratio_pct']:.2f}%, "
              f"{100.0 * summary['fraction_below_100']:.1f}% below 100%")
    else:
        print(f"contour: {summary['points']} points, none defined")
    return 0


def _check_log(suite, cfg: ExperimentConfig, controller: str, log,
               out_dir: str):
    """Invariant checks on one short run; returns (name, ok, detail) rows."""
    checks = []
    n = log.n_steps
    checks.append(("finite_states", bool(np.isfinite(log.states).all()), ""))
    t = log.times
    checks.append(("timestamps", bool(n == 0 or (np.diff(t) > 0).all()), ""))
    box = suite.model.input_box
    u_ok = ((log.controls[:n] >= box[:, 0] - 1e-12).all()
            and (log.controls[:n] <= box[:, 1] + 1e-12).all()) if n else True
    checks.append(("controls_in_box", bool(u_ok), ""))
    th_ok = all(suite.weight_set.contains(log.thetas[k]) for k in range(n + 1))
    checks.append(("weights_in_set", bool(th_ok), ""))
    checks.append(("boundedness", log.boundedness_violations == 0,
                   f"{log.boundedness_violations} states left the outer ball"))
    if controller == "ac" and n:
        solved = log.fallback[:n] == 0
        worst = log.margins[:n].min(axis=1)
        bad = int(((worst < -1e-9) & solved).sum())
        checks.append(("solver_feasibility", bad == 0,
                       f"{bad} accepted steps with negative margin"))
    if log.reach_index is not None:
        tail = log.states[log.reach_index:]
        nrm = np.sqrt(np.einsum("ij,ij->i", tail, tail))
        checks.append(("reaching_streak", bool((nrm <= cfg.r).all()), ""))
    path = os.path.join(out_dir, f"validate_{controller}.csv")
    log.to_csv(path)
    cols = read_trajectory_csv(path)
    rt_ok = (np.array_equal(cols["x1"], log.states[:, 0])
             and np.array_equal(cols["u1"], log.controls[:, 0])
             and np.array_equal(cols["theta4"], log.thetas[:, 3])
             and np.array_equal(cols["m3"], log.margins[:, 2])
             and np.array_equal(cols["Jhat"], log.jhat))
    checks.append(("csv_round_trip", bool(rt_ok), ""))
    return checks


def cmd_validate(cfg: ExperimentConfig, out_dir: str) -> int:
    suite = build_suite(cfg)
    horizon = min(cfg.horizon_steps, _VALIDATE_HORIZON_CAP)
    failed = 0
    for controller in _controllers(cfg):
        rc = _run_config(cfg, controller, horizon_steps=horizon)
        log = run_closed_loop(rc, suite)
        for name, ok, detail in _check_log(suite, cfg, controller, log,
                                           out_dir):
            status = "PASS" if ok else "FAIL"
            suffix = f" ({detail})" if detail and not ok else ""
            print(f"validate {controller} {name}: {status}{suffix}")
            failed += 0 if ok else 1
    print(f"validate: {'ok' if failed == 0 else f'{failed} violation(s)'}")
    return 0 if failed == 0 else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        out_dir = cfg.out_dir
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "bounds":
            return cmd_bounds(cfg, out_dir)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir)
        if args.command == "contour":
            return cmd_contour(cfg, out_dir)
        return cmd_validate(cfg, out_dir)
    except (ConfigError, InvalidRadii) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ClfacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
