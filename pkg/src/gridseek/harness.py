"""Experiment harness: trial orchestration and the versioned metrics CSV.

Schema (one row per team measurement):
    trial, algo, measurement_index, recovery_fraction, exact_recovery_flag,
    cumulative_cost_s, decision_wallclock_s, agent_id
recovery_fraction and the exact flag are the team metrics from the union
belief; cumulative_cost_s sums every agent's travel+sensing seconds so far.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

from .env import CostModel, Environment
from .belief import RecoveryConfig
from .multiagent import ChannelConfig, RunLog, run_multiagent
from .rng import derive_seed

CSV_SCHEMA_VERSION = "gridseek-metrics-v1"
CSV_COLUMNS = ("trial", "algo", "measurement_index", "recovery_fraction",
               "exact_recovery_flag", "cumulative_cost_s",
               "decision_wallclock_s", "agent_id")

_KEY_TRIAL_ENV, _KEY_TRIAL_RUN = 11, 12


@dataclass
class TrialResult:
    trial: int
    algo: str
    log: RunLog


def run_trial(trial: int, algo: str, env: Environment, planners: list,
              cost_model: CostModel, channel: ChannelConfig,
              t_max: int, run_seed: int,
              recovery_cfg: RecoveryConfig = RecoveryConfig()) -> TrialResult:
    log = run_multiagent(env, planners, cost_model, channel, t_max, run_seed,
                         recovery_cfg)
    return TrialResult(trial, algo, log)


def trial_env_seed(master_seed: int, trial: int) -> int:
    return derive_seed(master_seed, trial, _KEY_TRIAL_ENV)


def trial_run_seed(master_seed: int, trial: int) -> int:
    return derive_seed(master_seed, trial, _KEY_TRIAL_RUN)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)


def result_rows(result: TrialResult) -> list[list[str]]:
    rows = []
    for rec in result.log.records:
        rows.append([_fmt(result.trial), result.algo,
                     _fmt(rec.measurement_index), _fmt(rec.team_fraction),
                     _fmt(rec.team_exact), _fmt(rec.team_cost_s),
                     _fmt(rec.decision_wallclock_s), _fmt(rec.agent_id)])
    return rows


def write_metrics_csv(path, results: list[TrialResult],
                      manifest: dict | None = None) -> None:
    """Write rows sorted by (trial, measurement index) plus a JSON sidecar
    carrying the schema version and the run configuration."""
    results = sorted(results, key=lambda r: r.trial)
    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for res in results:
            w.writerows(result_rows(res))
    os.replace(tmp, path)
    sidecar = {"schema": CSV_SCHEMA_VERSION, "columns": list(CSV_COLUMNS)}
    if manifest:
        sidecar.update(manifest)
    with open(str(path) + ".manifest.json", "w") as f:
        json.dump(sidecar, f, indent=1, default=str)


def read_metrics_csv(path) -> list[dict]:
    """Parse a metrics CSV, validating the column layout."""
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ValueError(f"{path}: not a {CSV_SCHEMA_VERSION} file")
        rows = []
        for line in r:
            if len(line) != len(CSV_COLUMNS):
                raise ValueError(f"{path}: malformed row {line!r}")
            rows.append({
                "trial": int(line[0]),
                "algo": line[1],
                "measurement_index": int(line[2]),
                "recovery_fraction": float(line[3]),
                "exact_recovery_flag": line[4] == "1",
                "cumulative_cost_s": float(line[5]),
                "decision_wallclock_s": float(line[6]),
                "agent_id": int(line[7]),
            })
    return rows


def measurements_to_exact(rows: list[dict], algo: str) -> dict[int, int | None]:
    """Per trial: first measurement index with the team exact flag set."""
    out: dict[int, int | None] = {}
    for row in rows:
        if row["algo"] != algo:
            continue
        t = row["trial"]
        out.setdefault(t, None)
        if out[t] is None and row["exact_recovery_flag"]:
            out[t] = row["measurement_index"]
    return out


def cost_at_exact(rows: list[dict], algo: str) -> dict[int, float | None]:
    """Per trial: cumulative team cost at first exact recovery."""
    out: dict[int, float | None] = {}
    for row in rows:
        if row["algo"] != algo:
            continue
        t = row["trial"]
        out.setdefault(t, None)
        if out[t] is None and row["exact_recovery_flag"]:
            out[t] = row["cumulative_cost_s"]
    return out
