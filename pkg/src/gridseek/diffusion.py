"""Denoising-diffusion lookahead planning over action sequences.

A trajectory is H consecutive sensing-action frames over the grid, coded
{0,1} -> {-1,+1} for diffusion.  Three networks are trained from offline
episodes: a trajectory model that predicts the clean sequence from a noised
one conditioned on the belief state, a scalar return model, and a scalar
travel-distance model over the action sequence alone.  At decision time a
batch of reverse chains is sampled with the return/distance input gradients
steering each step, the results are projected to the nearest action
templates, and the best-scoring sequence's first action is executed.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .env import SensingAction, CostModel
from .nn import (Network, forward, forward_cached, backward, init_network,
                 init_adam, adam_step, input_gradients, save_network,
                 load_network)

MODEL_MANIFEST_VERSION = "gridseek-models-v1"


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal fractions and reverse-step variances.

    ``alpha_bar[0] == 1`` and the sequence strictly decreases;
    ``step_variance[1] == 0`` so the last reverse step is deterministic.
    """

    t_diff: int
    alpha_bar: np.ndarray
    step_variance: np.ndarray

    def __post_init__(self):
        if self.t_diff < 1:
            raise ValueError("t_diff must be >= 1")
        ab = self.alpha_bar
        if len(ab) != self.t_diff + 1 or len(self.step_variance) != self.t_diff + 1:
            raise ValueError("schedule arrays must have length t_diff + 1")
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must be 1")
        if np.any(np.diff(ab) >= 0) or ab[-1] < 0:
            raise ValueError("alpha_bar must strictly decrease to >= 0")
        if np.any(self.step_variance < 0):
            raise ValueError("step variances must be nonnegative")


def cosine_schedule(t_diff: int, offset: float = 0.008) -> NoiseSchedule:
    """Squared-cosine cumulative schedule with the usual small offset."""
    steps = np.arange(t_diff + 1, dtype=np.float64)
    f = np.cos((steps / t_diff + offset) / (1.0 + offset) * math.pi / 2.0) ** 2
    alpha_bar = f / f[0]
    sv = np.zeros(t_diff + 1)
    if t_diff >= 2:
        prev = alpha_bar[1:-1]
        cur = alpha_bar[2:]
        sv[2:] = (1.0 - prev) / (1.0 - cur) * (1.0 - cur / prev)
    sv = np.maximum(sv, 0.0)
    sv[1] = 0.0
    return NoiseSchedule(t_diff, alpha_bar, sv)


def forward_noise(tau0: np.ndarray, t_tilde: int, noise: np.ndarray,
                  schedule: NoiseSchedule) -> np.ndarray:
    """Noised trajectory sqrt(a)*tau0 + sqrt(1-a)*noise at step ``t_tilde``."""
    if not 0 <= t_tilde <= schedule.t_diff:
        raise ValueError(f"t_tilde {t_tilde} outside [0, {schedule.t_diff}]")
    if np.shape(noise) != np.shape(tau0):
        raise ValueError("noise must match trajectory shape")
    ab = schedule.alpha_bar[t_tilde]
    return math.sqrt(ab) * tau0 + math.sqrt(1.0 - ab) * noise


def time_embedding(t, width: int) -> np.ndarray:
    """Sinusoidal embedding of diffusion step(s); scalar -> (width,),
    array (B,) -> (B, width)."""
    if width % 2:
        raise ValueError("embedding width must be even")
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = width // 2
    freqs = 1.0 / (10000.0 ** (np.arange(half) / half))
    angles = t_arr[:, None] * freqs[None, :]
    emb = np.empty((len(t_arr), width))
    emb[:, 0::2] = np.sin(angles)
    emb[:, 1::2] = np.cos(angles)
    return emb[0] if np.isscalar(t) or np.ndim(t) == 0 else emb


@dataclass(frozen=True)
class NetConfig:
    hidden: tuple[int, ...] = (256, 256)
    emb_width: int = 16
    lr: float = 1e-3
    batch_size: int = 64


@dataclass
class TrainResult:
    net: Network
    epoch_losses: list[float]


def code_frames(frames01: np.ndarray) -> np.ndarray:
    """{0,1} action frames to the {-1,+1} coding used by the networks."""
    return 2.0 * np.asarray(frames01, dtype=np.float64) - 1.0


def featurize_state(state_img: np.ndarray, var_scale: float) -> np.ndarray:
    """Flatten the 2-channel belief image; the variance channel is divided by
    the prior variance so both channels live on a unit scale."""
    mean = np.asarray(state_img[0], dtype=np.float64).ravel()
    var = np.asarray(state_img[1], dtype=np.float64).ravel() / var_scale
    return np.concatenate([mean, var])


def _train_features(train_set):
    s = train_set
    n = s.n_len * s.n_wid
    tau0 = code_frames(s.tau.reshape(len(s.tau), -1))
    var_scale = s.sigma * s.sigma
    states = np.concatenate([
        s.states[:, 0].reshape(len(s.tau), n),
        s.states[:, 1].reshape(len(s.tau), n) / var_scale,
    ], axis=1)
    return tau0, states


def _epoch_batches(n_samples: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n_samples)
    for lo in range(0, n_samples, batch_size):
        yield perm[lo:lo + batch_size]


def train_trajectory_model(train_set, schedule: NoiseSchedule,
                           net_cfg: NetConfig, epochs: int,
                           rng: np.random.Generator) -> TrainResult:
    """Fit the clean-trajectory predictor by MSE regression from noised
    trajectories at uniformly drawn diffusion steps."""
    if len(train_set.tau) == 0:
        raise ValueError("training set is empty")
    tau0, states = _train_features(train_set)
    d_tau = tau0.shape[1]
    dims = [d_tau + states.shape[1] + net_cfg.emb_width,
            *net_cfg.hidden, d_tau]
    net = init_network(dims, rng=rng)
    opt = init_adam(net, lr=net_cfg.lr)
    losses = []
    for _ in range(epochs):
        batch_losses = []
        for idx in _epoch_batches(len(tau0), net_cfg.batch_size, rng):
            t = rng.integers(1, schedule.t_diff + 1, size=len(idx))
            eps = rng.standard_normal((len(idx), d_tau))
            ab = schedule.alpha_bar[t][:, None]
            tau_t = np.sqrt(ab) * tau0[idx] + np.sqrt(1.0 - ab) * eps
            x = np.concatenate([tau_t, states[idx],
                                time_embedding(t, net_cfg.emb_width)], axis=1)
            out, cache = forward_cached(net, x)
            diff = out - tau0[idx]
            batch_losses.append(float(np.mean(diff * diff)))
            grads, _ = backward(net, cache, 2.0 * diff / diff.size)
            adam_step(net, opt, grads)
        losses.append(float(np.mean(batch_losses)))
    return TrainResult(net, losses)


def train_return_model(train_set, schedule: NoiseSchedule,
                       noising_enabled: bool, net_cfg: NetConfig, epochs: int,
                       rng: np.random.Generator) -> TrainResult:
    """Fit the scalar discounted-return regressor.

    With noising disabled (the default, which trains more stably) every input
    is the clean trajectory at diffusion step 0.
    """
    if getattr(train_set, "returns", None) is None or not len(train_set.returns):
        raise ValueError("training set lacks return labels")
    tau0, states = _train_features(train_set)
    targets = np.asarray(train_set.returns, dtype=np.float64)[:, None]
    d_tau = tau0.shape[1]
    dims = [d_tau + states.shape[1] + net_cfg.emb_width, *net_cfg.hidden, 1]
    net = init_network(dims, rng=rng)
    opt = init_adam(net, lr=net_cfg.lr)
    emb0 = time_embedding(0, net_cfg.emb_width)
    losses = []
    for _ in range(epochs):
        batch_losses = []
        for idx in _epoch_batches(len(tau0), net_cfg.batch_size, rng):
            if noising_enabled:
                t = rng.integers(1, schedule.t_diff + 1, size=len(idx))
                eps = rng.standard_normal((len(idx), d_tau))
                ab = schedule.alpha_bar[t][:, None]
                tau_in = np.sqrt(ab) * tau0[idx] + np.sqrt(1.0 - ab) * eps
                emb = time_embedding(t, net_cfg.emb_width)
            else:
                tau_in = tau0[idx]
                emb = np.tile(emb0, (len(idx), 1))
            x = np.concatenate([tau_in, states[idx], emb], axis=1)
            out, cache = forward_cached(net, x)
            diff = out - targets[idx]
            batch_losses.append(float(np.mean(diff * diff)))
            grads, _ = backward(net, cache, 2.0 * diff / diff.size)
            adam_step(net, opt, grads)
        losses.append(float(np.mean(batch_losses)))
    return TrainResult(net, losses)


def train_distance_model(train_set, net_cfg: NetConfig, epochs: int,
                         rng: np.random.Generator) -> TrainResult:
    """Fit cumulative travel distance from the action sequence alone."""
    if getattr(train_set, "distances", None) is None or not len(train_set.distances):
        raise ValueError("training set lacks distance labels")
    tau0, _ = _train_features(train_set)
    targets = np.asarray(train_set.distances, dtype=np.float64)[:, None]
    dims = [tau0.shape[1], *net_cfg.hidden, 1]
    net = init_network(dims, rng=rng)
    opt = init_adam(net, lr=net_cfg.lr)
    losses = []
    for _ in range(epochs):
        batch_losses = []
        for idx in _epoch_batches(len(tau0), net_cfg.batch_size, rng):
            out, cache = forward_cached(net, tau0[idx])
            diff = out - targets[idx]
            batch_losses.append(float(np.mean(diff * diff)))
            grads, _ = backward(net, cache, 2.0 * diff / diff.size)
            adam_step(net, opt, grads)
        losses.append(float(np.mean(batch_losses)))
    return TrainResult(net, losses)


def template_coded_matrix(templates: Sequence[SensingAction]) -> np.ndarray:
    """(A, n) matrix of {-1,+1}-coded template masks."""
    return code_frames(np.stack([t.mask_flat() for t in templates]))


def binarize_trajectory(tau0: np.ndarray,
                        templates: Sequence[SensingAction]) -> list[SensingAction]:
    """Project each continuous frame to the template whose coded mask has the
    largest inner product with it; ties go to the lowest template index.

    This nearest-template projection is this artifact's choice of mapping
    from continuous samples to executable actions.
    """
    if not templates:
        raise ValueError("template list must be nonempty")
    frames = np.atleast_2d(np.asarray(tau0, dtype=np.float64))
    coded = template_coded_matrix(templates)
    idx = np.argmax(frames @ coded.T, axis=1)
    return [templates[i] for i in idx]


@dataclass(frozen=True)
class SamplerConfig:
    n_diff: int = 1000
    alpha_guide: float = 10.0
    lambda_cost: float = 0.0
    schedule: NoiseSchedule | None = None  # None: use the trained schedule
    reverse_mean_mode: str = "network_direct"
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_diff < 1:
            raise ValueError("n_diff must be >= 1")
        if self.alpha_guide < 0 or self.lambda_cost < 0:
            raise ValueError("guidance coefficients must be nonnegative")
        if self.reverse_mean_mode not in ("network_direct", "ddpm_posterior"):
            raise ValueError("unknown reverse_mean_mode")


@dataclass
class ModelBundle:
    """Trained planner networks plus everything needed to query them."""

    trajectory_net: Network
    return_net: Network
    distance_net: Network
    schedule: NoiseSchedule
    h: int
    n_len: int
    n_wid: int
    emb_width: int
    state_var_scale: float
    coding: str = "pm1"

    @property
    def n(self) -> int:
        return self.n_len * self.n_wid


@dataclass
class CdasResult:
    action: SensingAction
    plan: list[SensingAction]
    sample_index: int
    scores: np.ndarray
    nu_values: np.ndarray
    distances: np.ndarray
    template_indices: np.ndarray


def cdas_sample(bundle: ModelBundle, state_img: np.ndarray, current_cell: int,
                templates: Sequence[SensingAction], cost_model: CostModel,
                cfg: SamplerConfig, rng: np.random.Generator) -> CdasResult:
    """Sample a batch of guided reverse chains and pick the best plan.

    Each chain is steered by ``alpha_guide * step_variance`` times the input
    gradient of the return model minus ``lambda_cost`` times the distance
    model's gradient.  Finished chains are projected to templates, scored as
    predicted return minus ``lambda_cost`` times the true travel distance of
    the projected origin sequence from ``current_cell``, and the argmax
    sample's first action is returned (ties to the lowest sample index).
    """
    if not templates:
        raise ValueError("template list must be nonempty")
    sched = cfg.schedule if cfg.schedule is not None else bundle.schedule
    h, n = bundle.h, bundle.n
    d_tau = h * n
    if bundle.trajectory_net.out_dim != d_tau:
        raise ValueError("trajectory net does not match bundle dims")
    batch = cfg.n_diff
    s_feat = featurize_state(state_img, bundle.state_var_scale)
    if len(s_feat) + d_tau + bundle.emb_width != bundle.trajectory_net.in_dim:
        raise ValueError("state image does not match trained input layout")
    s_tile = np.tile(s_feat, (batch, 1))

    tau = rng.standard_normal((batch, d_tau))
    direct = cfg.reverse_mean_mode == "network_direct"
    ab = sched.alpha_bar
    for t in range(sched.t_diff, 0, -1):
        emb = np.tile(time_embedding(t, bundle.emb_width), (batch, 1))
        x = np.concatenate([tau, s_tile, emb], axis=1)
        x0_hat = forward(bundle.trajectory_net, x)
        if direct:
            mean = x0_hat
        else:
            alpha_t = ab[t] / ab[t - 1]
            c0 = math.sqrt(ab[t - 1]) * (1.0 - alpha_t) / (1.0 - ab[t])
            c1 = math.sqrt(alpha_t) * (1.0 - ab[t - 1]) / (1.0 - ab[t])
            mean = c0 * x0_hat + c1 * tau
        sv = sched.step_variance[t]
        if cfg.alpha_guide > 0.0 and sv > 0.0:
            guide = input_gradients(bundle.return_net, x)[:, :d_tau]
            if cfg.lambda_cost > 0.0:
                guide = guide - cfg.lambda_cost * input_gradients(
                    bundle.distance_net, tau)
            mean = mean + cfg.alpha_guide * sv * guide
        if sv > 0.0:
            tau = mean + math.sqrt(sv) * rng.standard_normal((batch, d_tau))
        else:
            tau = mean
        if not np.isfinite(tau).all():
            raise FloatingPointError(f"non-finite iterate at step {t}")

    coded = template_coded_matrix(templates)
    frames = tau.reshape(batch * h, n)
    tpl_idx = np.argmax(frames @ coded.T, axis=1).reshape(batch, h)
    bin_flat = coded[tpl_idx].reshape(batch, d_tau)

    origins = np.array([tpl.origin for tpl in templates])
    n_wid = bundle.n_wid
    rows = origins[tpl_idx] // n_wid
    cols = origins[tpl_idx] % n_wid
    r0, c0_ = divmod(current_cell, n_wid)
    rows = np.concatenate([np.full((batch, 1), r0), rows], axis=1)
    cols = np.concatenate([np.full((batch, 1), c0_), cols], axis=1)
    dists = np.hypot(np.diff(rows, axis=1), np.diff(cols, axis=1)).sum(axis=1)

    emb0 = np.tile(time_embedding(0, bundle.emb_width), (batch, 1))
    nu_vals = forward(bundle.return_net,
                      np.concatenate([bin_flat, s_tile, emb0], axis=1))[:, 0]
    scores = nu_vals - cfg.lambda_cost * dists
    best = int(np.argmax(scores))
    plan = [templates[i] for i in tpl_idx[best]]
    return CdasResult(plan[0], plan, best, scores, nu_vals, dists, tpl_idx)


def das_plan_step(bundle: ModelBundle, state_img: np.ndarray,
                  current_cell: int, templates: Sequence[SensingAction],
                  cost_model: CostModel, cfg: SamplerConfig,
                  rng: np.random.Generator) -> CdasResult:
    """Cost-blind variant: identical sampler with the cost coefficient zeroed."""
    return cdas_sample(bundle, state_img, current_cell, templates, cost_model,
                       replace(cfg, lambda_cost=0.0), rng)


def save_models(bundle: ModelBundle, dirpath) -> None:
    os.makedirs(dirpath, exist_ok=True)
    save_network(bundle.trajectory_net, os.path.join(dirpath, "trajectory.net"))
    save_network(bundle.return_net, os.path.join(dirpath, "return.net"))
    save_network(bundle.distance_net, os.path.join(dirpath, "distance.net"))
    manifest = {
        "format": MODEL_MANIFEST_VERSION,
        "h": bundle.h,
        "n_len": bundle.n_len,
        "n_wid": bundle.n_wid,
        "emb_width": bundle.emb_width,
        "state_var_scale": bundle.state_var_scale,
        "coding": bundle.coding,
        "t_diff": bundle.schedule.t_diff,
        "alpha_bar": bundle.schedule.alpha_bar.tolist(),
        "step_variance": bundle.schedule.step_variance.tolist(),
    }
    with open(os.path.join(dirpath, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1)


def load_models(dirpath) -> ModelBundle:
    with open(os.path.join(dirpath, "manifest.json")) as f:
        m = json.load(f)
    if m.get("format") != MODEL_MANIFEST_VERSION:
        raise ValueError("not a gridseek model directory")
    schedule = NoiseSchedule(m["t_diff"], np.asarray(m["alpha_bar"]),
                             np.asarray(m["step_variance"]))
    return ModelBundle(
        trajectory_net=load_network(os.path.join(dirpath, "trajectory.net")),
        return_net=load_network(os.path.join(dirpath, "return.net")),
        distance_net=load_network(os.path.join(dirpath, "distance.net")),
        schedule=schedule,
        h=m["h"], n_len=m["n_len"], n_wid=m["n_wid"],
        emb_width=m["emb_width"], state_var_scale=m["state_var_scale"],
        coding=m["coding"],
    )
