"""Gaussian posterior over the hidden target vector under one-hot sensing.

Because every observation row touches exactly one cell and the noise is
i.i.d., the posterior stays diagonal and each reading reduces to a scalar
precision-weighted update of the sensed cell.  The prediction step is the
identity (the target vector is static), so updates only ever shrink variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import Environment, Observation, SensingAction

_LOG_2PIE = math.log(2.0 * math.pi * math.e)


@dataclass(frozen=True)
class BeliefState:
    """Per-cell posterior mean and variance; a value type, never mutated."""

    mean: np.ndarray
    var: np.ndarray
    n_len: int
    n_wid: int

    @property
    def n(self) -> int:
        return self.n_len * self.n_wid


@dataclass(frozen=True)
class RecoveryConfig:
    """Threshold used to quantize continuous posterior vectors to {0,1}."""

    c_thr: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.c_thr < 1.0:
            raise ValueError("c_thr must be in (0, 1)")


@dataclass(frozen=True)
class RecoveryResult:
    fraction: float
    exact: bool


def init_belief(n_len: int, n_wid: int, sigma: float) -> BeliefState:
    """Uniform sparse prior: mean 1/n per cell, variance sigma^2 per cell."""
    if n_len < 1 or n_wid < 1:
        raise ValueError("grid dimensions must be positive")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    n = n_len * n_wid
    mean = np.full(n, 1.0 / n)
    var = np.full(n, sigma * sigma)
    return BeliefState(mean, var, n_len, n_wid)


def update_belief(belief: BeliefState, action: SensingAction,
                  observation: Observation, sigma: float) -> BeliefState:
    """Posterior after one action's readings; unsensed cells are untouched.

    Each reading applies the scalar conjugate update to its cell.  Repeated
    readings of the same cell within one action apply sequentially, which is
    equivalent to a joint update for this model.
    """
    if len(observation.values) != len(action.cells):
        raise ValueError("observation length must match sensed cell count")
    mean = belief.mean.copy()
    var = belief.var.copy()
    noise_prec = 1.0 / (sigma * sigma)
    for c, y in zip(action.cells, observation.values):
        post_var = 1.0 / (1.0 / var[c] + noise_prec)
        mean[c] = post_var * (mean[c] / var[c] + y * noise_prec)
        var[c] = post_var
    return BeliefState(mean, var, belief.n_len, belief.n_wid)


def entropy(belief: BeliefState) -> float:
    """Differential entropy (nats) of the diagonal Gaussian posterior."""
    return 0.5 * float(np.sum(_LOG_2PIE + np.log(belief.var)))


def expected_information_gain(belief: BeliefState, action: SensingAction,
                              sigma: float) -> float:
    """Expected entropy reduction from executing ``action``.

    For a linear-Gaussian model the posterior variance does not depend on the
    realized readings, so the expectation has the closed form
    sum over sensed cells of 0.5*ln(1 + var/sigma^2).
    """
    cells = np.asarray(action.cells)
    return 0.5 * float(np.sum(np.log1p(belief.var[cells] / (sigma * sigma))))


def thompson_sample(belief: BeliefState, rng: np.random.Generator) -> np.ndarray:
    """One draw from the posterior: independent per-cell normals."""
    return rng.normal(belief.mean, np.sqrt(belief.var))


def quantize(vec: np.ndarray, cfg: RecoveryConfig) -> np.ndarray:
    """Threshold a continuous vector to a binary one."""
    return (vec >= cfg.c_thr).astype(np.uint8)


def state_image(belief: BeliefState) -> np.ndarray:
    """2-channel grid (mean, variance) used as planner conditioning input."""
    return np.stack([
        belief.mean.reshape(belief.n_len, belief.n_wid),
        belief.var.reshape(belief.n_len, belief.n_wid),
    ])


def expected_onestep_reward(belief: BeliefState, action: SensingAction,
                            sigma: float, recovery_cfg: RecoveryConfig,
                            n_beta: int, n_y: int,
                            rng: np.random.Generator) -> float:
    """Monte Carlo estimate in [-1, 1] of the one-step recovery reward.

    Draw ``n_beta`` posterior samples; treat each quantized sample as ground
    truth and simulate ``n_y`` observations of ``action``.  Score +1 when the
    quantized one-step posterior mean equals the quantized sample everywhere,
    else -1; return the average.
    """
    if n_beta < 1 or n_y < 1:
        raise ValueError("n_beta and n_y must be >= 1")
    cells = np.asarray(action.cells)
    n = belief.n
    unsensed = np.ones(n, dtype=bool)
    unsensed[cells] = False

    samples = rng.normal(belief.mean, np.sqrt(belief.var), size=(n_beta, n))
    sample_bits = samples >= recovery_cfg.c_thr

    noise_prec = 1.0 / (sigma * sigma)
    post_var = 1.0 / (1.0 / belief.var[cells] + noise_prec)
    prior_term = belief.mean[cells] / belief.var[cells]

    # Simulated readings use the quantized sample as ground truth.
    y = (sample_bits[:, cells].astype(np.float64)[:, None, :]
         + rng.normal(0.0, sigma, size=(n_beta, n_y, len(cells))))
    post_mean = post_var * (prior_term + y * noise_prec)
    post_bits = post_mean >= recovery_cfg.c_thr

    prior_bits = belief.mean >= recovery_cfg.c_thr
    match_unsensed = np.all(sample_bits[:, unsensed] == prior_bits[unsensed],
                            axis=1)
    match_sensed = np.all(post_bits == sample_bits[:, None, cells], axis=2)
    match = match_unsensed[:, None] & match_sensed
    return float(np.mean(np.where(match, 1.0, -1.0)))


def recovery_check(belief: BeliefState, env: Environment,
                   recovery_cfg: RecoveryConfig) -> RecoveryResult:
    """Fraction of true targets recovered by the quantized posterior mean.

    Exact recovery (fraction 1.0) requires the quantized mean to equal the
    hidden target vector everywhere.  Any false positive caps the fraction
    below 1.0 by growing the denominator to the declared-target count.
    """
    bits = belief.mean >= recovery_cfg.c_thr
    truth = env.beta_true.astype(bool)
    exact = bool(np.array_equal(bits, truth))
    found = int(np.sum(bits & truth))
    false_pos = int(np.sum(bits & ~truth))
    fraction = found / max(env.k, found + false_pos)
    return RecoveryResult(float(fraction), exact)
