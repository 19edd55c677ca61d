"""Command-line front end: reproducible runs, recomputation, and sweeps.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .core import (
    ConfigError,
    ExperimentConfig,
    LogFormatError,
    RecordBatch,
    load_config,
    write_buckets_csv,
    write_effects_csv,
    write_metrics_csv,
)
from .harness import PhasePlan, derive_outputs, run_experiment

log = logging.getLogger("banditlab")

SWEEPABLE = {
    "gamma", "prior_strength", "imputation_epsilon", "availability_fraction",
    "shrinkage_lambda", "novelty_lift", "hot_topics_mean", "activity_median",
    "activity_sigma", "slots_per_active_day", "phase1_days", "phase2_days",
    "mc_samples", "retrain_every_days", "k_topics",
}

_INT_FIELDS = {"slots_per_active_day", "phase1_days", "phase2_days",
               "mc_samples", "retrain_every_days", "k_topics"}


def _write_manifest(out_dir: Path, cfg: ExperimentConfig, seed: int,
                    outputs: list[str], duration: float) -> None:
    manifest = {
        "config": cfg.to_dict(),
        "seed": seed,
        "versions": {
            "banditlab": __version__,
            "backend": kernels.BACKEND,
            "numpy": np.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
        "outputs": outputs,
        "duration_seconds": duration,
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _run_and_write(cfg: ExperimentConfig, out_dir: Path, workers: int,
                   write_log: bool = True) -> None:
    t0 = time.monotonic()
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_experiment(cfg, workers=workers)
    outputs = []
    if write_log:
        result.records.write_jsonl(out_dir / "impressions.jsonl")
        outputs.append("impressions.jsonl")
    write_metrics_csv(out_dir / "metrics.csv", result.group_rows)
    write_effects_csv(out_dir / "effects.csv", result.effect_rows)
    write_buckets_csv(out_dir / "buckets.csv", result.bucket_rows)
    outputs += ["metrics.csv", "effects.csv", "buckets.csv", "run_manifest.json"]
    _write_manifest(out_dir, cfg, result.seed, outputs, time.monotonic() - t0)
    log.info("run complete: %d impressions, backend=%s, wrote %s",
             len(result.records), result.backend, out_dir)


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    _run_and_write(cfg, Path(args.out), args.workers)
    return 0


def cmd_metrics(args) -> int:
    cfg = _load_cfg(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    batch = RecordBatch.read_jsonl(args.log, k_topics=cfg.k_topics)
    _user_rows, group_rows, _effects, effect_rows, _buckets, bucket_rows = \
        derive_outputs(batch, cfg, workers=args.workers)
    write_metrics_csv(out_dir / "metrics.csv", group_rows)
    write_effects_csv(out_dir / "effects.csv", effect_rows)
    write_buckets_csv(out_dir / "buckets.csv", bucket_rows)
    log.info("recomputed metrics for %d impressions into %s", len(batch), out_dir)
    return 0


def cmd_sweep(args) -> int:
    if args.param not in SWEEPABLE:
        raise ConfigError(
            f"parameter {args.param!r} is not sweepable; choose from "
            f"{sorted(SWEEPABLE)}")
    base = _load_cfg(args)
    values = []
    for raw in args.values.split(","):
        raw = raw.strip()
        values.append(int(raw) if args.param in _INT_FIELDS else float(raw))
    seeds = [int(s) for s in args.seeds.split(",")]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan_rows = []
    for value in values:
        for seed in seeds:
            cfg = base.replace(**{args.param: value}, seed=seed)
            run_dir = out_dir / f"run_{args.param}={value}_seed={seed}"
            log.info("sweep run: %s=%s seed=%d", args.param, value, seed)
            _run_and_write(cfg, run_dir, args.workers, write_log=False)
            plan = PhasePlan(cfg.phase1_days, cfg.phase2_days)
            result_effects = _read_effects(run_dir / "effects.csv")
            for metric, per_phase in _phase_means(result_effects, plan).items():
                for phase, mean in per_phase.items():
                    plan_rows.append((args.param, value, seed, metric, phase, mean))
    with open(out_dir / "sweep.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("param,value,seed,metric,phase,value\n")
        for param, value, seed, metric, phase, mean in plan_rows:
            fh.write(f"{param},{value},{seed},{metric},{phase},{mean:.9g}\n")
    log.info("sweep complete: %d runs", len(values) * len(seeds))
    return 0


def _read_effects(path: Path) -> list[tuple[int, int, str, float]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            day, phase, metric, value = line.rstrip("\n").split(",")
            rows.append((int(day), int(phase), metric, float(value)))
    return rows


def _phase_means(effect_rows, plan: PhasePlan) -> dict[str, dict[int, float]]:
    sums: dict[str, dict[int, list[float]]] = {}
    for _day, phase, metric, value in effect_rows:
        sums.setdefault(metric, {}).setdefault(phase, []).append(value)
    return {
        metric: {phase: sum(vals) / len(vals) for phase, vals in phases.items()}
        for metric, phases in sums.items()
    }


def cmd_report(args) -> int:
    """Pivot metrics.csv into one wide time-series table for plotting."""
    run_dir = Path(args.out)
    metrics_path = run_dir / "metrics.csv"
    if not metrics_path.exists():
        raise ConfigError(f"no metrics.csv in {run_dir}")
    table: dict[tuple[int, int, str], dict[str, float]] = {}
    with open(metrics_path, "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            day, group, phase, metric, value = line.rstrip("\n").split(",")
            table.setdefault((int(day), int(phase), metric), {})[group] = float(value)
    effects = {}
    effects_path = run_dir / "effects.csv"
    if effects_path.exists():
        for day, phase, metric, value in _read_effects(effects_path):
            effects[(day, phase, metric)] = value
    out_path = run_dir / "report.csv"
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("day,phase,metric,production,control,test,effect\n")
        for (day, phase, metric), groups in sorted(table.items()):
            cells = [
                f"{groups[g]:.9g}" if g in groups else ""
                for g in ("production", "control", "test")
            ]
            eff = effects.get((day, phase, metric))
            eff_cell = f"{eff:.9g}" if eff is not None else ""
            fh.write(f"{day},{phase},{metric},{cells[0]},{cells[1]},{cells[2]},{eff_cell}\n")
    log.info("wrote %s", out_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banditlab",
        description="Deterministic two-phase bandit A/B experiment simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", type=str, default=None,
                       help="TOML config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        if needs_out:
            p.add_argument("--out", type=str, required=True, help="output directory")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        p.add_argument("--workers", type=int, default=1,
                       help="worker threads (any value gives identical output)")

    p_sim = sub.add_parser("simulate", help="run an experiment and write all artifacts")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_met = sub.add_parser("metrics", help="recompute metric tables from an existing log")
    common(p_met)
    p_met.add_argument("--log", type=str, required=True, help="impressions.jsonl path")
    p_met.set_defaults(func=cmd_metrics)

    p_swp = sub.add_parser("sweep", help="grid of runs over one config parameter")
    common(p_swp)
    p_swp.add_argument("--param", type=str, required=True, help="config field to sweep")
    p_swp.add_argument("--values", type=str, required=True, help="comma-separated values")
    p_swp.add_argument("--seeds", type=str, required=True, help="comma-separated seeds")
    p_swp.set_defaults(func=cmd_sweep)

    p_rep = sub.add_parser("report", help="pivot a run's group time series into report.csv")
    common(p_rep)
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, LogFormatError) as exc:
        log.error("error: %s", exc)
        return 2
    except FileNotFoundError as exc:
        log.error("error: %s", exc)
        return 2
    except Exception as exc:  # runtime failure
        log.error("run failed: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
