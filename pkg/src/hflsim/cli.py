"""Command-line runner: config ingestion, scenario presets, metrics export.

A run writes three artifacts into its output directory: ``rounds.csv`` (one
row per global round), ``positions.csv`` (end-of-round entity positions)
and ``summary.json``.  All numeric formatting uses the shortest
round-tripping decimal form, and the JSON is canonicalized (sorted keys),
so identical config + seed reproduces identical bytes.

Exit codes: 0 success, 2 configuration error, 3 runtime fault.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from .config import (
    ConfigError,
    SELECTION_STRATEGIES,
    SimConfig,
    build,
    config_hash,
    parse_file,
)
from .orchestrator import RunSummary, run

__all__ = [
    "SCENARIOS",
    "scenario_arms",
    "run_single",
    "run_scenario",
    "export_metrics",
    "main",
]

ROUNDS_HEADER = [
    "g",
    "K_g",
    "phi",
    "aggregator",
    "accuracy",
    "loss",
    "T_g_s",
    "E_g_J",
    "n_selected",
    "dropouts",
]
POSITIONS_HEADER = ["g", "entity", "id", "x", "y"]

# Desk-scale preset layered under every scenario: small fleet, fast learner,
# tight solver caps.  A user config can override any of these.
_DESK_PRESET: dict[str, object] = {
    "fleet.n_uavs": 3,
    "fleet.n_devices": 30,
    "fleet.field_size": 12_000.0,
    "device.samples": 48,
    "learner.eta": 0.05,
    "learner.test_samples": 600,
    "learner.probe_samples": 128,
    "p1.inner_cap": 300,
    "p1.outer_cap": 6,
    "p1.sweeps": 2,
    "p2.warmup": 60,
    "strategy.max_rounds": 15,
}

SCENARIOS = ("baseline-compare", "threshold-sweep", "dropout", "mobility-sweep")


def scenario_arms(name: str) -> tuple[dict[str, object], list[tuple[str, dict[str, object]]]]:
    """(scenario preset, [(arm name, arm overrides), ...]) for a scenario."""
    if name == "baseline-compare":
        return dict(_DESK_PRESET), [
            ("adaptive", {"strategy.selection": "adaptive-TD3"}),
            ("random", {"strategy.selection": "random"}),
            ("distance-only", {"strategy.selection": "distance-only"}),
            ("similarity-only", {"strategy.selection": "similarity-only"}),
        ]
    if name == "threshold-sweep":
        arms: list[tuple[str, dict[str, object]]] = [
            ("adaptive", {"strategy.selection": "adaptive-TD3"})
        ]
        for beta in (0.40, 0.55, 0.70, 0.85):
            arms.append(
                (
                    f"fixed-{beta:.2f}",
                    {
                        "strategy.selection": "fixed-threshold",
                        "strategy.fixed_beta": beta,
                    },
                )
            )
        return dict(_DESK_PRESET), arms
    if name == "dropout":
        preset = dict(_DESK_PRESET)
        preset.update(
            {
                "fleet.n_uavs": 4,
                "fleet.n_devices": 40,
                "fleet.low_battery_uavs": 1,
                "fleet.low_battery": 30.0,
                "strategy.selection": "fixed-threshold",
                "strategy.fixed_beta": 0.3,
                "strategy.max_rounds": 8,
            }
        )
        return preset, [
            ("two-stage-greedy", {"strategy.redeploy": "two-stage-greedy"}),
            ("direct-drop", {"strategy.redeploy": "direct-drop"}),
        ]
    if name == "mobility-sweep":
        return dict(_DESK_PRESET), [
            (f"xi-{xi}", {"fleet.xi": xi}) for xi in (0.1, 0.3, 0.5)
        ]
    raise ConfigError("scenario", f"unknown scenario {name!r}")


def _fmt(value: object) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _round_record(lg) -> dict[str, object]:
    return {
        "g": lg.g,
        "K_g": lg.k_g,
        "phi": int(lg.phi),
        "aggregator": lg.aggregator,
        "accuracy": lg.accuracy,
        "loss": lg.loss,
        "T_g_s": lg.t_g,
        "E_g_J": lg.e_g,
        "n_selected": lg.n_selected,
        "dropouts": len(lg.dropouts),
    }


def export_metrics(summary: RunSummary, out_dir) -> list[str]:
    """Write rounds.csv, positions.csv and summary.json; return the paths."""
    os.makedirs(out_dir, exist_ok=True)
    rounds_path = os.path.join(out_dir, "rounds.csv")
    positions_path = os.path.join(out_dir, "positions.csv")
    summary_path = os.path.join(out_dir, "summary.json")

    with open(rounds_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROUNDS_HEADER)
        for lg in summary.rounds:
            rec = _round_record(lg)
            w.writerow([_fmt(rec[col]) for col in ROUNDS_HEADER])

    with open(positions_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POSITIONS_HEADER)
        for lg in summary.rounds:
            for m, x, y in lg.uav_positions:
                w.writerow([_fmt(lg.g), "uav", _fmt(m), _fmt(x), _fmt(y)])
            for n, x, y in lg.device_positions:
                w.writerow([_fmt(lg.g), "device", _fmt(n), _fmt(x), _fmt(y)])

    doc = {
        "run_id": summary.run_id,
        "config_hash": summary.config_hash,
        "seed": summary.seed,
        "strategy": summary.strategy,
        "redeploy": summary.redeploy,
        "scenario": summary.scenario,
        "status": summary.status,
        "rounds_used": len(summary.rounds),
        "final_accuracy": summary.final_accuracy,
        "final_loss": summary.final_loss,
        "total_time_s": summary.total_time,
        "total_energy_j": summary.total_energy,
        "dropout_timeline": [[g, m] for g, m in summary.dropout_timeline],
        "rounds": [_round_record(lg) for lg in summary.rounds],
    }
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [rounds_path, positions_path, summary_path]


def run_single(
    overrides: dict[str, object],
    out_dir,
    run_id: str = "",
    scenario: str = "",
    quiet: bool = False,
) -> RunSummary:
    """Build a config, execute one run, export artifacts."""
    cfg = build(overrides)
    ch = config_hash(cfg)
    rid = run_id or f"single-{cfg.strategy.selection}-{cfg.seed}"
    t0 = time.perf_counter()
    summary = run(cfg, run_id=rid, config_hash=ch, scenario=scenario)
    summary = dataclasses.replace(summary, wall_clock=time.perf_counter() - t0)
    export_metrics(summary, out_dir)
    if not quiet:
        print(
            f"[hflsim] {rid}: status={summary.status} rounds={len(summary.rounds)} "
            f"acc={summary.final_accuracy:.4f} wall={summary.wall_clock:.2f}s",
            file=sys.stderr,
        )
    return summary


def _run_arm(payload: tuple) -> str:
    name, arm, overrides, arm_dir, quiet = payload
    cfg_seed = overrides.get("seed", 0)
    summary = run_single(
        overrides,
        arm_dir,
        run_id=f"{name}-{arm}-{cfg_seed}",
        scenario=name,
        quiet=quiet,
    )
    return f"{arm}: {summary.status} acc={summary.final_accuracy:.4f}"


def run_scenario(
    name: str,
    overrides: dict[str, object],
    out_dir,
    quiet: bool = False,
) -> int:
    """Execute every arm of a scenario; arm outputs land in out/<name>/<arm>."""
    preset, arms = scenario_arms(name)
    jobs = []
    for arm, arm_over in arms:
        merged: dict[str, object] = {}
        merged.update(preset)
        merged.update(overrides)
        merged.update(arm_over)
        build(merged)  # fail fast on config errors before spawning workers
        arm_dir = os.path.join(out_dir, name, arm)
        jobs.append((name, arm, merged, arm_dir, quiet))

    threads = int(os.environ.get("HFLSIM_THREADS", "1") or "1")
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            results = list(pool.map(_run_arm, jobs))
    else:
        results = [_run_arm(job) for job in jobs]
    if not quiet:
        for line in results:
            print(f"[hflsim] {name} {line}", file=sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="hflsim",
        description="Deterministic desk-scale simulator for UAV-assisted "
        "hierarchical federated learning.",
    )
    parser.add_argument("--config", metavar="PATH", help="config file (key = value lines)")
    parser.add_argument("--scenario", metavar="NAME", help=f"one of {', '.join(SCENARIOS)}")
    parser.add_argument("--seed", type=int, metavar="U64", help="run seed override")
    parser.add_argument("--out", metavar="DIR", default="out", help="output directory")
    parser.add_argument("--strategy", metavar="NAME", help=f"one of {', '.join(SELECTION_STRATEGIES)}")
    parser.add_argument("--max-rounds", type=int, dest="max_rounds", metavar="N")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    args = parser.parse_args(argv)

    try:
        overrides: dict[str, object] = {}
        if args.config is not None:
            try:
                overrides.update(parse_file(args.config))
            except OSError as exc:
                raise ConfigError("config", f"cannot read {args.config!r}: {exc}") from None
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed", "seed must be non-negative")
            overrides["seed"] = args.seed
        if args.strategy is not None:
            if args.strategy not in SELECTION_STRATEGIES:
                raise ConfigError("strategy.selection", f"unknown strategy {args.strategy!r}")
            overrides["strategy.selection"] = args.strategy
        if args.max_rounds is not None:
            overrides["strategy.max_rounds"] = args.max_rounds

        if args.scenario is not None:
            scenario_arms(args.scenario)  # unknown scenario -> exit 2
        else:
            build(overrides)  # surface config errors as exit 2 before running
    except ConfigError as exc:
        print(f"[hflsim] config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.scenario is not None:
            return run_scenario(args.scenario, overrides, args.out, quiet=args.quiet)
        run_single(overrides, args.out, quiet=args.quiet)
        return 0
    except ConfigError as exc:
        print(f"[hflsim] config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime fault
        print(f"[hflsim] runtime fault: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
