"""Uniform planner interface binding every decision rule in the package.

A planner exposes ``name`` and ``select(belief, current_cell, rng)``; the
simulator and harness treat all planners identically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .belief import BeliefState, RecoveryConfig, state_image
from .diffusion import ModelBundle, SamplerConfig, cdas_sample
from .env import CostModel, SensingAction
from .mcts import MctsConfig, mcts_plan
from .myopic import eig_select, ts_select


@dataclass
class EigPlanner:
    actions: Sequence[SensingAction]
    sigma: float
    name: str = "eig"

    def select(self, belief: BeliefState, current_cell: int,
               rng: np.random.Generator) -> SensingAction:
        return eig_select(belief, self.actions, self.sigma)


@dataclass
class TsPlanner:
    actions: Sequence[SensingAction]
    sigma: float
    n_y: int = 5
    recovery_cfg: RecoveryConfig = field(default_factory=RecoveryConfig)
    name: str = "ts"

    def select(self, belief: BeliefState, current_cell: int,
               rng: np.random.Generator) -> SensingAction:
        return ts_select(belief, self.actions, self.sigma, self.n_y, rng,
                         self.recovery_cfg)


@dataclass
class MctsPlanner:
    actions: Sequence[SensingAction]
    config: MctsConfig
    sigma: float
    recovery_cfg: RecoveryConfig = field(default_factory=RecoveryConfig)
    name: str = "mcts"

    def select(self, belief: BeliefState, current_cell: int,
               rng: np.random.Generator) -> SensingAction:
        return mcts_plan(belief, self.actions, current_cell, self.config,
                         self.sigma, rng, self.recovery_cfg)


@dataclass
class DiffusionPlanner:
    """Guided-diffusion lookahead; ``name`` distinguishes the cost-aware and
    cost-blind configurations."""

    bundle: ModelBundle
    templates: Sequence[SensingAction]
    cost_model: CostModel
    sampler_cfg: SamplerConfig
    name: str = "cdas"

    def select(self, belief: BeliefState, current_cell: int,
               rng: np.random.Generator) -> SensingAction:
        result = cdas_sample(self.bundle, state_image(belief), current_cell,
                             self.templates, self.cost_model,
                             self.sampler_cfg, rng)
        return result.action
