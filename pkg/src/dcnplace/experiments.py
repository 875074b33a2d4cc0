"""Multi-seed evaluation runs: metrics CSV, summary table, policy checkpoints."""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

from .config import ExperimentConfig, dump_config
from .diffusion import save_policy
from .trainer import POLICIES, TrainingReport, train

log = logging.getLogger(__name__)

CSV_COLUMNS = ("episode", "policy", "reward", "mean_read_ms", "mean_write_ms", "critic_loss", "mean_q", "seed")


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def report_rows(report: TrainingReport):
    for ep in range(report.episodes):
        for name in POLICIES:
            r = report.reward[name][ep]
            if math.isnan(r):
                continue  # diffusion is only scored every eval_interval episodes
            learner = name.startswith("diffusion")
            yield (ep, name, _fmt(r), _fmt(report.mean_read_ms[name][ep]), _fmt(report.mean_write_ms[name][ep]),
                   _fmt(report.critic_loss[ep]) if learner else "", _fmt(report.mean_q[ep]) if learner else "",
                   report.seed)


def write_metrics_csv(path, reports) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rep in reports:
            w.writerows(report_rows(rep))


def summarize(reports, window: int = 100) -> dict:
    out = {"window": window, "seeds": {}}
    for rep in reports:
        stats = rep.final_stats(window)
        out["seeds"][str(rep.seed)] = {
            name: {"mean": None if math.isnan(m) else m, "std": None if math.isnan(s) else s}
            for name, (m, s) in stats.items()
        }
        out["seeds"][str(rep.seed)]["wall_clock_s"] = rep.wall_clock_s
    return out


def summary_table(summary: dict) -> str:
    header = f"{'seed':>6}  " + "  ".join(f"{p:>24}" for p in POLICIES)
    lines = [f"final-{summary['window']}-episode reward (mean ± std)", header]
    for seed, row in summary["seeds"].items():
        cells = []
        for p in POLICIES:
            m, s = row[p]["mean"], row[p]["std"]
            cells.append(f"{'n/a':>24}" if m is None else f"{m:>13.6f} ± {s:<8.6f}")
        lines.append(f"{seed:>6}  " + "  ".join(cells))
    return "\n".join(lines)


def run_eval(cfg: ExperimentConfig, out_dir=None, seeds=None, quiet: bool = False) -> int:
    """Train + baselines for every seed, then write metrics.csv, summary.json/.txt and checkpoints.

    Returns 0 when every seed succeeded, 2 otherwise.
    """
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(cfg.run.seeds if seeds is None else seeds)
    reports, failed = [], []
    for seed in seeds:
        try:
            rep = train(cfg, seed=seed)
        except Exception as e:  # keep going; one bad seed must not lose the others
            log.error("seed %s failed: %s", seed, e)
            failed.append(seed)
            continue
        if not quiet:
            log.info("seed %s done in %.1fs", seed, rep.wall_clock_s)
        reports.append(rep)

    write_metrics_csv(out / "metrics.csv", reports)
    summary = summarize(reports, cfg.run.window)
    summary["failed_seeds"] = failed
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    table = summary_table(summary)
    (out / "summary.txt").write_text(table + "\n", encoding="utf-8")
    (out / "config.toml").write_text(dump_config(cfg), encoding="utf-8")
    for rep in reports:
        if rep.policy is not None:
            save_policy(out / f"policy_seed{rep.seed}.bin", rep.policy, rep.schedule)
    if not quiet:
        print(table)
    return 2 if failed else 0
