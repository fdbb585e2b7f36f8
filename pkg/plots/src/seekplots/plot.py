"""Render experiment figures from gridseek metrics CSVs.

Reads the harness schema (gridseek-metrics-v1):
    trial, algo, measurement_index, recovery_fraction, exact_recovery_flag,
    cumulative_cost_s, decision_wallclock_s, agent_id
and draws, per algorithm, the mean curve with a shaded standard-error band
across trials.  Kinds: recovery_vs_T (rate vs measurement count),
recovery_vs_cost (rate vs cumulative seconds), timing (mean seconds per
decision as bars).
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass

import numpy as np

EXPECTED_COLUMNS = ("trial", "algo", "measurement_index", "recovery_fraction",
                    "exact_recovery_flag", "cumulative_cost_s",
                    "decision_wallclock_s", "agent_id")

KINDS = ("recovery_vs_T", "recovery_vs_cost", "timing")


class SchemaError(Exception):
    pass


@dataclass
class Row:
    trial: int
    algo: str
    measurement_index: int
    recovery_fraction: float
    exact_recovery_flag: bool
    cumulative_cost_s: float
    decision_wallclock_s: float
    agent_id: int


def read_rows(paths) -> list[Row]:
    rows: list[Row] = []
    for path in paths:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or tuple(header) != EXPECTED_COLUMNS:
                raise SchemaError(f"{path}: expected columns "
                                  f"{','.join(EXPECTED_COLUMNS)}")
            for line in reader:
                if len(line) != len(EXPECTED_COLUMNS):
                    raise SchemaError(f"{path}: malformed row {line!r}")
                rows.append(Row(int(line[0]), line[1], int(line[2]),
                                float(line[3]), line[4] == "1",
                                float(line[5]), float(line[6]),
                                int(line[7])))
    if not rows:
        raise SchemaError("no data rows found")
    return rows


def _mean_se(per_trial: np.ndarray):
    """Mean and standard error across axis 0 (one row per trial)."""
    mean = per_trial.mean(axis=0)
    n = per_trial.shape[0]
    if n > 1:
        se = per_trial.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        se = np.zeros_like(mean)
    return mean, se


def recovery_vs_measurements(rows: list[Row]) -> dict[str, dict]:
    """Per algo: x = measurement index, mean recovery rate and SE band.

    Trials that stop early (after exact recovery) hold their final rate for
    the remaining indices.
    """
    out: dict[str, dict] = {}
    for algo in sorted({r.algo for r in rows}):
        sub = [r for r in rows if r.algo == algo]
        trials = sorted({r.trial for r in sub})
        t_max = max(r.measurement_index for r in sub)
        grid = np.arange(1, t_max + 1)
        mat = np.zeros((len(trials), t_max))
        for i, t in enumerate(trials):
            series = {r.measurement_index: r.recovery_fraction
                      for r in sub if r.trial == t}
            last = 0.0
            for j, m in enumerate(grid):
                last = series.get(int(m), last)
                mat[i, j] = last
        mean, se = _mean_se(mat)
        out[algo] = {"x": grid.astype(float), "mean": mean, "se": se}
    return out


def recovery_vs_cost(rows: list[Row], grid_points: int = 200) -> dict[str, dict]:
    """Per algo: recovery rate as a step function of cumulative cost,
    averaged across trials on a shared cost grid."""
    out: dict[str, dict] = {}
    for algo in sorted({r.algo for r in rows}):
        sub = [r for r in rows if r.algo == algo]
        trials = sorted({r.trial for r in sub})
        cost_max = max(r.cumulative_cost_s for r in sub)
        grid = np.linspace(0.0, cost_max, grid_points)
        mat = np.zeros((len(trials), grid_points))
        for i, t in enumerate(trials):
            pts = sorted((r.cumulative_cost_s, r.recovery_fraction)
                         for r in sub if r.trial == t)
            costs = np.array([p[0] for p in pts])
            fracs = np.array([p[1] for p in pts])
            idx = np.searchsorted(costs, grid, side="right") - 1
            mat[i] = np.where(idx >= 0, fracs[np.clip(idx, 0, None)], 0.0)
        mean, se = _mean_se(mat)
        out[algo] = {"x": grid, "mean": mean, "se": se}
    return out


def timing_summary(rows: list[Row]) -> dict[str, dict]:
    """Per algo: mean wall-clock seconds per decision and SE."""
    out: dict[str, dict] = {}
    for algo in sorted({r.algo for r in rows}):
        times = np.array([r.decision_wallclock_s for r in rows
                          if r.algo == algo])
        se = (times.std(ddof=1) / math.sqrt(len(times))
              if len(times) > 1 else 0.0)
        out[algo] = {"mean": float(times.mean()), "se": float(se),
                     "count": len(times)}
    return out


def render(rows: list[Row], kind: str, out_path: str) -> dict[str, dict]:
    """Draw the requested figure to ``out_path``; returns the statistics."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if kind not in KINDS:
        raise SchemaError(f"unknown kind {kind!r}; choose from {KINDS}")
    fig, ax = plt.subplots(figsize=(6, 4))
    if kind == "timing":
        stats = timing_summary(rows)
        algos = list(stats)
        means = [stats[a]["mean"] for a in algos]
        errs = [stats[a]["se"] for a in algos]
        ax.bar(algos, means, yerr=errs, capsize=4)
        ax.set_xlabel("algorithm")
        ax.set_ylabel("seconds per decision")
        ax.set_title("mean decision wall-clock time")
    else:
        if kind == "recovery_vs_T":
            stats = recovery_vs_measurements(rows)
            ax.set_xlabel("measurements")
        else:
            stats = recovery_vs_cost(rows)
            ax.set_xlabel("total cost (seconds)")
        for algo, s in stats.items():
            line, = ax.plot(s["x"], s["mean"], label=algo)
            ax.fill_between(s["x"], s["mean"] - s["se"], s["mean"] + s["se"],
                            alpha=0.25, color=line.get_color())
        ax.set_ylabel("full recovery rate")
        ax.set_ylim(-0.05, 1.05)
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return stats


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="seekplot", description=__doc__)
    parser.add_argument("csvs", nargs="+", help="metrics CSV files")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        rows = read_rows(args.csvs)
        stats = render(rows, args.kind, args.out)
    except (SchemaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({len(stats)} algorithms)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
