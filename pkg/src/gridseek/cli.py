"""Command-line harness: dataset generation, training, evaluation runs,
decision-timing benchmarks, and CSV merging for plotting."""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from .belief import RecoveryConfig
from .datagen import (Dataset, DatasetConfig, chunk_episodes, generate_dataset,
                      label_stats, load_dataset, save_dataset)
from .diffusion import (ModelBundle, NetConfig, SamplerConfig, cosine_schedule,
                        load_models, save_models, train_distance_model,
                        train_return_model, train_trajectory_model)
from .env import CostModel, enumerate_actions, new_environment
from .harness import (CSV_COLUMNS, read_metrics_csv, run_trial,
                      trial_env_seed, trial_run_seed, write_metrics_csv)
from .mcts import MctsConfig
from .multiagent import ChannelConfig
from .planners import DiffusionPlanner, EigPlanner, MctsPlanner, TsPlanner
from .rng import derive_rng

DEFAULT_CONFIG = {
    "env": {"n_len": 1, "n_wid": 16, "k": 1, "sigma": 1.0 / 16.0,
            "fov": "line3"},
    "cost": {"speed_v": 1.0, "sense_cost_cs": 0.0},
    "belief": {"c_thr": 0.5, "n_beta": 10, "n_y": 5},
    "data": {"m_episodes": 500, "t_steps": 16, "horizon_h": 8, "gamma": 0.95,
             "start_cell": 0, "seed": 0},
    "train": {"t_diff": 64, "hidden": [256, 256], "emb_width": 16,
              "lr": 1e-3, "batch_size": 64, "epochs_trajectory": 300,
              "epochs_return": 200, "epochs_distance": 150,
              "noising_return": False, "seed": 0},
    "sampler": {"n_diff": 1000, "alpha_guide": 10.0, "lambda_cost": 0.1,
                "reverse_mean_mode": "network_direct"},
    "mcts": {"depth": 2, "budget": 5000, "ucb_c": math.sqrt(2.0),
             "epsilon_pareto": 0.05},
    "run": {"t_max": 64, "trials": 20, "agents": 1, "drop_prob": 0.0,
            "delay_s": 0.0, "seed": 0},
    "bench": {"decisions": 5, "seed": 0},
}

ALGOS = ("eig", "ts", "mcts", "das", "cdas")


class CliError(Exception):
    pass


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in out:
            raise CliError(f"unknown config key: {key}")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise CliError(f"config section {key} must be a mapping")
            for sub, sval in val.items():
                if sub not in out[key]:
                    raise CliError(f"unknown config key: {key}.{sub}")
                out[key][sub] = sval
        else:
            out[key] = val
    return out


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        if not os.path.exists(path):
            raise CliError(f"config file not found: {path}")
        with open(path) as f:
            try:
                data = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise CliError(f"malformed config {path}: {e}") from e
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise CliError(f"config root must be a mapping: {path}")
        cfg = _deep_merge(cfg, data)
    for item in overrides:
        if "=" not in item:
            raise CliError(f"override must be key=value: {item!r}")
        key, _, value = item.partition("=")
        parts = key.split(".")
        if len(parts) != 2 or parts[0] not in cfg or parts[1] not in cfg[parts[0]]:
            raise CliError(f"unknown override key: {key}")
        cfg[parts[0]][parts[1]] = yaml.safe_load(value)
    return cfg


def _dataset_config(cfg: dict, seed: int | None) -> DatasetConfig:
    d, e, b = cfg["data"], cfg["env"], cfg["belief"]
    return DatasetConfig(
        m_episodes=d["m_episodes"], t_steps=d["t_steps"],
        horizon_h=d["horizon_h"], gamma=d["gamma"], n_len=e["n_len"],
        n_wid=e["n_wid"], k=e["k"], sigma=e["sigma"], fov=e["fov"],
        n_beta=b["n_beta"], n_y=b["n_y"], c_thr=b["c_thr"],
        rng_seed=d["seed"] if seed is None else seed,
        start_cell=d["start_cell"])


def _cost_model(cfg: dict) -> CostModel:
    return CostModel(cfg["cost"]["speed_v"], cfg["cost"]["sense_cost_cs"])


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, args.set)
    dc = _dataset_config(cfg, args.seed)
    dataset = generate_dataset(dc)
    save_dataset(dataset, args.out)
    print(f"wrote {dc.m_episodes} episodes x {dc.t_steps} steps to {args.out}")
    return 0


def cmd_stats(args) -> int:
    dataset = load_dataset(args.data)
    print(label_stats(dataset), end="")
    return 0


def train_bundle(cfg: dict, dataset: Dataset, seed: int | None = None):
    """Train the three planner networks; returns (bundle, curve rows)."""
    t = cfg["train"]
    train_seed = t["seed"] if seed is None else seed
    chunks = chunk_episodes(dataset, cfg["data"]["horizon_h"],
                            cfg["data"]["gamma"])
    schedule = cosine_schedule(t["t_diff"])
    net_cfg = NetConfig(hidden=tuple(t["hidden"]), emb_width=t["emb_width"],
                        lr=t["lr"], batch_size=t["batch_size"])
    rho = train_trajectory_model(chunks, schedule, net_cfg,
                                 t["epochs_trajectory"],
                                 derive_rng(train_seed, 0))
    nu = train_return_model(chunks, schedule, t["noising_return"], net_cfg,
                            t["epochs_return"], derive_rng(train_seed, 1))
    dist = train_distance_model(chunks, net_cfg, t["epochs_distance"],
                                derive_rng(train_seed, 2))
    bundle = ModelBundle(rho.net, nu.net, dist.net, schedule,
                         h=chunks.h, n_len=chunks.n_len, n_wid=chunks.n_wid,
                         emb_width=net_cfg.emb_width,
                         state_var_scale=chunks.sigma ** 2)
    curve = []
    for name, res in (("trajectory", rho), ("return", nu), ("distance", dist)):
        for epoch, loss in enumerate(res.epoch_losses):
            curve.append((name, epoch, loss))
    return bundle, curve


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    dataset = load_dataset(args.data)
    bundle, curve = train_bundle(cfg, dataset, args.seed)
    save_models(bundle, args.out)
    with open(os.path.join(args.out, "training_curve.csv"), "w",
              newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "epoch", "loss"])
        for name, epoch, loss in curve:
            w.writerow([name, epoch, format(loss, ".10g")])
    finals = {}
    for name, _, loss in curve:
        finals[name] = loss
    msg = ", ".join(f"{k} loss {v:.4g}" for k, v in finals.items())
    print(f"saved models to {args.out} ({msg})")
    return 0


def build_planner(algo: str, cfg: dict, env, bundle: ModelBundle | None):
    actions = enumerate_actions(env)
    sigma = cfg["env"]["sigma"]
    rc = RecoveryConfig(cfg["belief"]["c_thr"])
    cm = _cost_model(cfg)
    if algo == "eig":
        return EigPlanner(actions, sigma)
    if algo == "ts":
        return TsPlanner(actions, sigma, cfg["belief"]["n_y"], rc)
    if algo == "mcts":
        m = cfg["mcts"]
        mc = MctsConfig(depth=m["depth"], budget=m["budget"],
                        ucb_c=m["ucb_c"], cost_model=cm,
                        epsilon_pareto=m["epsilon_pareto"])
        return MctsPlanner(actions, mc, sigma, rc)
    if algo in ("das", "cdas"):
        if bundle is None:
            raise CliError(f"algo {algo} requires --models")
        s = cfg["sampler"]
        lam = 0.0 if algo == "das" else s["lambda_cost"]
        sc = SamplerConfig(n_diff=s["n_diff"], alpha_guide=s["alpha_guide"],
                           lambda_cost=lam,
                           reverse_mean_mode=s["reverse_mean_mode"])
        return DiffusionPlanner(bundle, actions, cm, sc, name=algo)
    raise CliError(f"unknown algo {algo!r}; choose from {ALGOS}")


def _run_one_trial(cfg: dict, algo: str, models_dir: str | None,
                   trial: int, master_seed: int):
    bundle = load_models(models_dir) if models_dir else None
    e = cfg["env"]
    env = new_environment(e["n_len"], e["n_wid"], e["k"], e["sigma"],
                          e["fov"], trial_env_seed(master_seed, trial))
    r = cfg["run"]
    planners = [build_planner(algo, cfg, env, bundle)
                for _ in range(r["agents"])]
    channel = ChannelConfig(r["drop_prob"], r["delay_s"])
    return run_trial(trial, algo, env, planners, _cost_model(cfg), channel,
                     r["t_max"], trial_run_seed(master_seed, trial),
                     RecoveryConfig(cfg["belief"]["c_thr"]))


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.algo not in ALGOS:
        raise CliError(f"unknown algo {args.algo!r}; choose from {ALGOS}")
    if args.algo in ("das", "cdas") and not args.models:
        raise CliError(f"algo {args.algo} requires --models")
    trials = args.trials if args.trials is not None else cfg["run"]["trials"]
    seed = args.seed if args.seed is not None else cfg["run"]["seed"]
    jobs = [(cfg, args.algo, args.models, t, seed) for t in range(trials)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_one_trial_star, jobs))
    else:
        results = [_run_one_trial(*job) for job in jobs]
    write_metrics_csv(args.out, results,
                      {"config": cfg, "algo": args.algo, "seed": seed,
                       "trials": trials})
    n_exact = sum(1 for r in results if r.log.team_exact)
    print(f"{args.algo}: {trials} trials, exact recovery in {n_exact}, "
          f"wrote {args.out}")
    return 0


def _run_one_trial_star(job):
    return _run_one_trial(*job)


def cmd_bench(args) -> int:
    cfg = load_config(args.config, args.set)
    algos = args.algos.split(",")
    decisions = args.decisions if args.decisions is not None \
        else cfg["bench"]["decisions"]
    seed = args.seed if args.seed is not None else cfg["bench"]["seed"]
    bundle = load_models(args.models) if args.models else None
    rows = []
    for algo in algos:
        e = cfg["env"]
        env = new_environment(e["n_len"], e["n_wid"], e["k"], e["sigma"],
                              e["fov"], trial_env_seed(seed, 0))
        planners = [build_planner(algo, cfg, env, bundle)]
        res = run_trial(0, algo, env, planners, _cost_model(cfg),
                        ChannelConfig(), decisions, trial_run_seed(seed, 0),
                        RecoveryConfig(cfg["belief"]["c_thr"]))
        times = [r.decision_wallclock_s for r in res.log.records]
        rows.append((algo, len(times), statistics.mean(times),
                     statistics.pstdev(times)))
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["algo", "n_decisions", "mean_wallclock_s",
                    "std_wallclock_s"])
        for algo, n, mean, std in rows:
            w.writerow([algo, n, format(mean, ".10g"), format(std, ".10g")])
    print(f"{'algo':>8} {'n':>4} {'mean_s':>12} {'std_s':>12}")
    for algo, n, mean, std in rows:
        print(f"{algo:>8} {n:>4} {mean:>12.4f} {std:>12.4f}")
    return 0


def cmd_compare(args) -> int:
    all_rows = []
    for path in args.csvs:
        rows = read_metrics_csv(path)
        all_rows.extend(rows)
    tmp = args.out + ".tmp"
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for row in all_rows:
            w.writerow([row["trial"], row["algo"], row["measurement_index"],
                        format(row["recovery_fraction"], ".10g"),
                        "1" if row["exact_recovery_flag"] else "0",
                        format(row["cumulative_cost_s"], ".10g"),
                        format(row["decision_wallclock_s"], ".10g"),
                        row["agent_id"]])
    os.replace(tmp, args.out)
    algos = sorted({r["algo"] for r in all_rows})
    print(f"merged {len(args.csvs)} files, {len(all_rows)} rows, "
          f"algos: {', '.join(algos)} -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridseek",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", default=None, help="YAML config file")
            sp.add_argument("--set", action="append", default=[],
                            metavar="KEY=VALUE",
                            help="override a config key (section.key=value)")
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("gen-data", help="generate an offline dataset")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("stats", help="print dataset label histograms")
    sp.add_argument("--data", required=True)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("train", help="train the three planner networks")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="output model directory")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("run", help="evaluate a planner over trials")
    common(sp)
    sp.add_argument("--algo", required=True, help=f"one of {ALGOS}")
    sp.add_argument("--models", default=None, help="model directory")
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("bench", help="mean decision wall-clock per algo")
    common(sp)
    sp.add_argument("--algos", required=True,
                    help="comma-separated algo list")
    sp.add_argument("--models", default=None)
    sp.add_argument("--decisions", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("compare", help="merge metrics CSVs for plotting")
    sp.add_argument("csvs", nargs="+")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
