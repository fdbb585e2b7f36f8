"""Offline dataset generation with the information-greedy behavior policy.

Episodes are rolled with the expected-information-gain selector, labeled per
step with the Monte Carlo one-step recovery reward, then chunked into
fixed-horizon training samples carrying discounted returns and ground-truth
travel distances.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, asdict
from typing import Iterator

import numpy as np

from .belief import (RecoveryConfig, expected_onestep_reward, init_belief,
                     state_image, update_belief)
from .env import DIRECTIONS, cell_distance, enumerate_actions, new_environment, observe
from .myopic import eig_select
from .rng import derive_rng, derive_seed

DATASET_FORMAT = "gridseek-dataset-v1"

# Sub-stream keys: episode seeds split as derive(seed, episode, key).
_KEY_ENV, _KEY_OBS, _KEY_REWARD = 0, 1, 2


@dataclass(frozen=True)
class DatasetConfig:
    m_episodes: int
    t_steps: int
    horizon_h: int
    gamma: float = 0.95
    n_len: int = 1
    n_wid: int = 16
    k: int = 1
    sigma: float = 1.0 / 16.0
    fov: str = "line3"
    n_beta: int = 10
    n_y: int = 5
    c_thr: float = 0.5
    rng_seed: int = 0
    start_cell: int = 0

    def __post_init__(self):
        if self.m_episodes < 1 or self.t_steps < 1:
            raise ValueError("episode and step counts must be positive")
        if not 1 <= self.horizon_h <= self.t_steps:
            raise ValueError("horizon must be in [1, t_steps]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")


@dataclass
class EpisodeRecord:
    env_seed: int
    beta: np.ndarray          # (n,) uint8
    states: np.ndarray        # (T, 2, n_len, n_wid) float64, pre-action belief
    masks: np.ndarray         # (T, n) uint8 executed action masks
    rewards: np.ndarray       # (T,) float64 one-step reward labels
    origins: np.ndarray       # (T,) int64 executed action origins
    dirs: np.ndarray          # (T,) uint8 indices into DIRECTIONS
    locs_before: np.ndarray   # (T,) int64 agent cell when deciding step t


@dataclass
class Dataset:
    config: DatasetConfig
    episodes: list[EpisodeRecord]


@dataclass
class TrainingSet:
    """Chunked samples: conditioning state, H-frame trajectory, labels."""

    states: np.ndarray       # (S, 2, n_len, n_wid)
    tau: np.ndarray          # (S, H, n) uint8
    returns: np.ndarray      # (S,)
    distances: np.ndarray    # (S,) cumulative travel of the origin sequence
    start_cells: np.ndarray  # (S,) agent cell before the chunk's first action
    h: int
    n_len: int
    n_wid: int
    sigma: float
    gamma: float


def generate_dataset(config: DatasetConfig) -> Dataset:
    """Roll ``m_episodes`` greedy episodes; deterministic given the seed.

    Per-episode streams derive from the master seed and the episode index, so
    episodes are independent and may be generated in any order.
    """
    episodes = []
    cfg_rec = RecoveryConfig(config.c_thr)
    for e in range(config.m_episodes):
        env_seed = derive_seed(config.rng_seed, e, _KEY_ENV)
        obs_rng = derive_rng(config.rng_seed, e, _KEY_OBS)
        reward_rng = derive_rng(config.rng_seed, e, _KEY_REWARD)
        env = new_environment(config.n_len, config.n_wid, config.k,
                              config.sigma, config.fov, env_seed)
        actions = enumerate_actions(env)
        belief = init_belief(config.n_len, config.n_wid, config.sigma)
        loc = config.start_cell
        T = config.t_steps
        states = np.empty((T, 2, config.n_len, config.n_wid))
        masks = np.empty((T, env.n), dtype=np.uint8)
        rewards = np.empty(T)
        origins = np.empty(T, dtype=np.int64)
        dirs = np.empty(T, dtype=np.uint8)
        locs = np.empty(T, dtype=np.int64)
        for t in range(T):
            states[t] = state_image(belief)
            locs[t] = loc
            a = eig_select(belief, actions, config.sigma)
            rewards[t] = expected_onestep_reward(
                belief, a, config.sigma, cfg_rec, config.n_beta, config.n_y,
                reward_rng)
            obs = observe(env, a, obs_rng, t=t)
            belief = update_belief(belief, a, obs, config.sigma)
            masks[t] = a.mask_flat()
            origins[t] = a.origin
            dirs[t] = DIRECTIONS.index(a.direction)
            loc = a.origin
        episodes.append(EpisodeRecord(env_seed, env.beta_true.copy(), states,
                                      masks, rewards, origins, dirs, locs))
    return Dataset(config, episodes)


def chunk_episodes(dataset: Dataset, horizon_h: int,
                   gamma: float) -> TrainingSet:
    """Slice every episode into the T-H+1 overlapping length-H windows.

    Each chunk keeps the belief state at its first step, the executed action
    frames, the discounted sum of its own H rewards, the agent cell just
    before the window, and the window's cumulative travel distance starting
    from that cell.
    """
    cfg = dataset.config
    T = cfg.t_steps
    if horizon_h > T:
        raise ValueError("horizon exceeds episode length")
    disc = gamma ** np.arange(horizon_h)
    states, taus, returns, dists, starts = [], [], [], [], []
    for ep in dataset.episodes:
        for t in range(T - horizon_h + 1):
            states.append(ep.states[t])
            taus.append(ep.masks[t:t + horizon_h])
            returns.append(float(disc @ ep.rewards[t:t + horizon_h]))
            start = int(ep.locs_before[t])
            starts.append(start)
            d = 0.0
            prev = start
            for o in ep.origins[t:t + horizon_h]:
                d += cell_distance(prev, int(o), cfg.n_wid)
                prev = int(o)
            dists.append(d)
    return TrainingSet(np.stack(states), np.stack(taus).astype(np.uint8),
                       np.asarray(returns), np.asarray(dists),
                       np.asarray(starts, dtype=np.int64),
                       horizon_h, cfg.n_len, cfg.n_wid, cfg.sigma, gamma)


def _episode_block_spec(config: DatasetConfig) -> list[tuple[str, str, tuple]]:
    n = config.n_len * config.n_wid
    T = config.t_steps
    return [
        ("beta", "<u1", (n,)),
        ("states", "<f8", (T, 2, config.n_len, config.n_wid)),
        ("masks", "<u1", (T, n)),
        ("rewards", "<f8", (T,)),
        ("origins", "<i8", (T,)),
        ("dirs", "<u1", (T,)),
        ("locs_before", "<i8", (T,)),
    ]


def save_dataset(dataset: Dataset, path) -> None:
    """Manifest line plus per-episode flat arrays; streaming-readable."""
    cfg = dataset.config
    spec = _episode_block_spec(cfg)
    manifest = {
        "format": DATASET_FORMAT,
        "config": asdict(cfg),
        "episodes": len(dataset.episodes),
        "blocks": [{"name": nm, "dtype": dt, "shape": list(shape)}
                   for nm, dt, shape in spec],
    }
    with open(path, "wb") as f:
        f.write(json.dumps(manifest).encode("utf-8") + b"\n")
        for ep in dataset.episodes:
            f.write(json.dumps({"env_seed": ep.env_seed}).encode("utf-8")
                    + b"\n")
            for nm, dt, shape in spec:
                arr = np.ascontiguousarray(getattr(ep, nm), dtype=dt)
                if arr.shape != shape:
                    raise ValueError(f"episode block {nm} has shape "
                                     f"{arr.shape}, expected {shape}")
                f.write(arr.tobytes())


def iter_episodes(path) -> Iterator[EpisodeRecord]:
    """Stream episodes one at a time without loading the whole file."""
    with open(path, "rb") as f:
        manifest = json.loads(f.readline().decode("utf-8"))
        if manifest.get("format") != DATASET_FORMAT:
            raise ValueError("not a gridseek dataset file")
        cfg = DatasetConfig(**manifest["config"])
        spec = _episode_block_spec(cfg)
        for _ in range(manifest["episodes"]):
            head = json.loads(f.readline().decode("utf-8"))
            fields = {"env_seed": head["env_seed"]}
            for nm, dt, shape in spec:
                count = int(np.prod(shape))
                buf = f.read(count * np.dtype(dt).itemsize)
                fields[nm] = np.frombuffer(buf, dtype=dt).reshape(shape).copy()
            yield EpisodeRecord(**fields)


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        manifest = json.loads(f.readline().decode("utf-8"))
    if manifest.get("format") != DATASET_FORMAT:
        raise ValueError("not a gridseek dataset file")
    cfg = DatasetConfig(**manifest["config"])
    return Dataset(cfg, list(iter_episodes(path)))


def label_stats(dataset: Dataset, horizon_h: int | None = None,
                gamma: float | None = None) -> str:
    """Histogram summary of reward and return labels for the CLI."""
    cfg = dataset.config
    horizon_h = cfg.horizon_h if horizon_h is None else horizon_h
    gamma = cfg.gamma if gamma is None else gamma
    rewards = np.concatenate([ep.rewards for ep in dataset.episodes])
    chunks = chunk_episodes(dataset, horizon_h, gamma)
    out = io.StringIO()
    out.write(f"episodes: {len(dataset.episodes)}  steps/episode: "
              f"{cfg.t_steps}  chunks: {len(chunks.returns)}\n")
    for name, values in (("reward", rewards), ("return", chunks.returns),
                         ("distance", chunks.distances)):
        hist, edges = np.histogram(values, bins=10)
        out.write(f"{name}: min={values.min():.4f} mean={values.mean():.4f} "
                  f"max={values.max():.4f}\n")
        for c, lo, hi in zip(hist, edges[:-1], edges[1:]):
            out.write(f"  [{lo:9.4f}, {hi:9.4f}) {c}\n")
    return out.getvalue()
