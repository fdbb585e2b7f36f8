"""Depth-limited tree-search baseline with sampled ground truth and a
cost-aware action choice at the root.

Each simulation draws one posterior sample, quantizes it, and treats it as
the world while rolling a UCB1 tree to a fixed depth; the leaf scores +1/-1
on exact recovery of the sample.  The root decision is epsilon-pareto: among
root actions whose mean reward is within ``epsilon_pareto`` of the best,
take the one with the lowest mean ground-truth cost.  The pareto rule here is
a stand-in for the cited tree-search planner's unpublished selection step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .belief import (BeliefState, RecoveryConfig, quantize, thompson_sample,
                     update_belief)
from .env import CostModel, Observation, SensingAction, travel_cost


@dataclass(frozen=True)
class MctsConfig:
    depth: int = 2
    budget: int = 5000
    ucb_c: float = math.sqrt(2.0)
    cost_model: CostModel = field(default_factory=CostModel)
    epsilon_pareto: float = 0.05

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.ucb_c <= 0:
            raise ValueError("ucb_c must be positive")
        if self.epsilon_pareto < 0:
            raise ValueError("epsilon_pareto must be nonnegative")


class _Node:
    __slots__ = ("visits", "value", "children")

    def __init__(self, n_actions: int):
        self.visits = np.zeros(n_actions)
        self.value = np.zeros(n_actions)
        self.children: dict[int, _Node] = {}

    def select(self, ucb_c: float) -> int:
        unvisited = np.flatnonzero(self.visits == 0)
        if unvisited.size:
            return int(unvisited[0])
        total = self.visits.sum()
        ucb = (self.value / self.visits
               + ucb_c * np.sqrt(np.log(total) / self.visits))
        return int(np.argmax(ucb))


def mcts_plan(belief: BeliefState, actions: Sequence[SensingAction],
              start_cell: int, config: MctsConfig, sigma: float,
              rng: np.random.Generator,
              recovery_cfg: RecoveryConfig = RecoveryConfig(),
              stats_out: dict | None = None) -> SensingAction:
    """Pick the next action by budgeted tree search from the current belief."""
    if not actions:
        raise ValueError("action list must be nonempty")
    if config.budget < len(actions):
        raise ValueError("budget must cover one visit per root action")
    n_actions = len(actions)
    n_wid = actions[0].n_wid
    cm = config.cost_model
    root = _Node(n_actions)
    root_cost_sum = np.zeros(n_actions)

    for _ in range(config.budget):
        truth = quantize(thompson_sample(belief, rng), recovery_cfg)
        node = root
        bel = belief
        prev_cell = start_cell
        path = []
        path_cost = 0.0
        first = -1
        for _depth in range(config.depth):
            i = node.select(config.ucb_c)
            if first < 0:
                first = i
            a = actions[i]
            path_cost += travel_cost(cm, prev_cell, a.origin, n_wid)
            path_cost += cm.sense_cost_cs
            prev_cell = a.origin
            cells = np.asarray(a.cells)
            y = truth[cells].astype(np.float64) + rng.normal(
                0.0, sigma, size=len(cells))
            bel = update_belief(bel, a, Observation(y, a), sigma)
            path.append((node, i))
            child = node.children.get(i)
            if child is None:
                child = _Node(n_actions)
                node.children[i] = child
            node = child
        recovered = np.array_equal(bel.mean >= recovery_cfg.c_thr,
                                   truth.astype(bool))
        reward = 1.0 if recovered else -1.0
        for parent, i in path:
            parent.visits[i] += 1
            parent.value[i] += reward
        root_cost_sum[first] += path_cost

    mean_reward = root.value / np.maximum(root.visits, 1.0)
    mean_cost = root_cost_sum / np.maximum(root.visits, 1.0)
    admissible = mean_reward >= mean_reward.max() - config.epsilon_pareto
    cost_masked = np.where(admissible, mean_cost, np.inf)
    choice = int(np.argmin(cost_masked))
    if stats_out is not None:
        stats_out["visits"] = root.visits.copy()
        stats_out["mean_reward"] = mean_reward
        stats_out["mean_cost"] = mean_cost
        stats_out["choice"] = choice
    return actions[choice]
