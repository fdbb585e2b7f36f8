"""One-step baselines: information-greedy and Thompson-sampling selection."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .belief import (BeliefState, RecoveryConfig, expected_information_gain,
                     thompson_sample)
from .env import SensingAction


def eig_select(belief: BeliefState, actions: Sequence[SensingAction],
               sigma: float) -> SensingAction:
    """Action with maximal expected information gain; ties go to the lowest
    enumeration index."""
    if not actions:
        raise ValueError("action list must be nonempty")
    gains = np.array([expected_information_gain(belief, a, sigma)
                      for a in actions])
    return actions[int(np.argmax(gains))]


def ts_select(belief: BeliefState, actions: Sequence[SensingAction],
              sigma: float, n_y: int, rng: np.random.Generator,
              recovery_cfg: RecoveryConfig = RecoveryConfig()) -> SensingAction:
    """Thompson-sampling selection.

    Draw one posterior sample, quantize it to simulate observations, and pick
    the action maximizing the expected negative squared distance between the
    sample and the one-step updated posterior mean (Monte Carlo over ``n_y``
    observation draws).  Ties go to the lowest index.
    """
    if not actions:
        raise ValueError("action list must be nonempty")
    if n_y < 1:
        raise ValueError("n_y must be >= 1")
    sample = thompson_sample(belief, rng)
    sample_bits = (sample >= recovery_cfg.c_thr).astype(np.float64)

    noise_prec = 1.0 / (sigma * sigma)
    base = float(np.sum((sample - belief.mean) ** 2))
    objectives = np.empty(len(actions))
    for i, a in enumerate(actions):
        cells = np.asarray(a.cells)
        post_var = 1.0 / (1.0 / belief.var[cells] + noise_prec)
        prior_term = belief.mean[cells] / belief.var[cells]
        y = sample_bits[cells][None, :] + rng.normal(
            0.0, sigma, size=(n_y, len(cells)))
        post_mean = post_var * (prior_term + y * noise_prec)
        old = np.sum((sample[cells] - belief.mean[cells]) ** 2)
        new = np.mean(np.sum((sample[None, :][:, cells] - post_mean) ** 2,
                             axis=1))
        objectives[i] = -(base - old + new)
    return actions[int(np.argmax(objectives))]
