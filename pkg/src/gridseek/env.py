"""Gridded search world: hidden binary targets, region-sensing actions, noisy
observations, and travel/sensing costs.

The world is an ``n_len x n_wid`` grid with a hidden 0/1 target vector over
its cells.  An action senses a small set of cells in front of an origin cell
(a field-of-view pattern) and returns one noisy reading per sensed cell.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DIRECTIONS = ("E", "W", "N", "S")

# (row, col) unit step for each facing direction.
_DIR_STEP = {"E": (0, 1), "W": (0, -1), "N": (-1, 0), "S": (1, 0)}

# FOV patterns as (forward, lateral) offsets relative to the facing direction:
# the origin cell itself plus cells ahead of it.
LINE3_PATTERN = ((0, 0), (1, 0), (2, 0))
WEDGE2_PATTERN = ((0, 0), (1, 0), (2, 0), (2, -1), (2, 1))


@dataclass(frozen=True)
class CustomFov:
    """User-defined FOV: (forward, lateral) offsets plus allowed directions."""

    pattern: tuple[tuple[int, int], ...]
    directions: tuple[str, ...] = DIRECTIONS


def _fov_spec(fov) -> tuple[tuple[tuple[int, int], ...], tuple[str, ...]]:
    if isinstance(fov, CustomFov):
        return fov.pattern, fov.directions
    if fov == "line3":
        return LINE3_PATTERN, ("E", "W")
    if fov == "wedge2":
        return WEDGE2_PATTERN, DIRECTIONS
    raise ValueError(f"unknown fov preset: {fov!r}")


@dataclass(frozen=True)
class SensingAction:
    """A region-sensing action: distinct in-bounds cells viewed from an origin.

    ``cells`` is ordered; reading q of an observation corresponds to
    ``cells[q]``.  Two actions may sense the same cell set (e.g. opposite
    facings near a boundary) and are still distinct actions.
    """

    origin: int
    direction: str
    cells: tuple[int, ...]
    n_len: int
    n_wid: int

    def __post_init__(self):
        n = self.n_len * self.n_wid
        if not self.cells:
            raise ValueError("action must sense at least one cell")
        if len(set(self.cells)) != len(self.cells):
            raise ValueError("sensed cells must be distinct")
        for c in self.cells:
            if not 0 <= c < n:
                raise ValueError(f"cell {c} outside grid of {n} cells")
        if not 0 <= self.origin < n:
            raise ValueError(f"origin {self.origin} outside grid")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")

    def mask(self) -> np.ndarray:
        """Binary grid of shape (n_len, n_wid) with ones at the sensed cells."""
        m = np.zeros(self.n_len * self.n_wid, dtype=np.uint8)
        m[list(self.cells)] = 1
        return m.reshape(self.n_len, self.n_wid)

    def mask_flat(self) -> np.ndarray:
        return self.mask().reshape(-1)


@dataclass(frozen=True)
class Observation:
    """Noisy per-cell readings for one executed action at decision step t."""

    values: np.ndarray
    action: SensingAction
    t: int = 0

    def __post_init__(self):
        if len(self.values) != len(self.action.cells):
            raise ValueError("observation length must match sensed cell count")


@dataclass(frozen=True)
class CostModel:
    """Travel at constant speed between cell centers plus a flat per-action
    sensing time."""

    speed_v: float = 1.0
    sense_cost_cs: float = 0.0

    def __post_init__(self):
        if self.speed_v <= 0:
            raise ValueError("travel speed must be positive")
        if self.sense_cost_cs < 0:
            raise ValueError("sensing cost must be nonnegative")


@dataclass(frozen=True)
class Environment:
    """Immutable search world; the hidden target vector is fixed per episode."""

    n_len: int
    n_wid: int
    k: int
    sigma: float
    fov: object
    rng_seed: int
    beta_true: np.ndarray

    @property
    def n(self) -> int:
        return self.n_len * self.n_wid


def new_environment(n_len: int, n_wid: int, k: int, sigma: float,
                    fov="line3", rng_seed: int = 0) -> Environment:
    """Create a world with k target cells placed uniformly without replacement.

    Deterministic given ``rng_seed``.
    """
    if n_len < 1 or n_wid < 1:
        raise ValueError("grid dimensions must be positive")
    n = n_len * n_wid
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be in [1, {n}]")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    _fov_spec(fov)  # validate preset early
    rng = np.random.default_rng(rng_seed)
    beta = np.zeros(n, dtype=np.uint8)
    beta[rng.choice(n, size=k, replace=False)] = 1
    beta.setflags(write=False)
    return Environment(n_len, n_wid, k, float(sigma), fov, rng_seed, beta)


def cell_coords(cell: int, n_wid: int) -> tuple[int, int]:
    """(row, col) integer center of a flat cell index (row-major)."""
    return divmod(cell, n_wid)


def cell_distance(cell_a: int, cell_b: int, n_wid: int) -> float:
    ra, ca = divmod(cell_a, n_wid)
    rb, cb = divmod(cell_b, n_wid)
    return math.hypot(ra - rb, ca - cb)


def enumerate_actions(env: Environment) -> list[SensingAction]:
    """All sensing actions, ordered by origin index then direction E,W,N,S.

    Pattern cells that fall outside the grid are dropped, so boundary actions
    sense fewer cells.  Actions with identical surviving cell sets but
    different origin/direction are kept as distinct entries.
    """
    pattern, directions = _fov_spec(env.fov)
    actions = []
    for origin in range(env.n):
        orow, ocol = divmod(origin, env.n_wid)
        for d in directions:
            fr, fc = _DIR_STEP[d]
            lr, lc = fc, -fr  # lateral = forward rotated a quarter turn
            cells = []
            for fwd, lat in pattern:
                r = orow + fwd * fr + lat * lr
                c = ocol + fwd * fc + lat * lc
                if 0 <= r < env.n_len and 0 <= c < env.n_wid:
                    cells.append(r * env.n_wid + c)
            actions.append(SensingAction(origin, d, tuple(cells),
                                         env.n_len, env.n_wid))
    return actions


def observe(env: Environment, action: SensingAction,
            rng: np.random.Generator, t: int = 0) -> Observation:
    """Reading per sensed cell: target value plus i.i.d. Gaussian noise."""
    cells = np.asarray(action.cells)
    if cells.min() < 0 or cells.max() >= env.n:
        raise ValueError("action senses cells outside the grid")
    noise = rng.normal(0.0, env.sigma, size=len(cells))
    values = env.beta_true[cells].astype(np.float64) + noise
    return Observation(values, action, t)


def travel_cost(cost_model: CostModel, cell_a: int, cell_b: int,
                n_wid: int) -> float:
    """Seconds to travel between two cell centers at constant speed."""
    return cell_distance(cell_a, cell_b, n_wid) / cost_model.speed_v


def episode_cost(cost_model: CostModel, start_cell: int,
                 actions: Sequence[SensingAction]) -> float:
    """Total seconds for a sequence of actions starting from ``start_cell``:
    travel between successive origins plus the per-action sensing time."""
    if not actions:
        raise ValueError("action sequence must be nonempty")
    total = 0.0
    prev = start_cell
    for a in actions:
        total += travel_cost(cost_model, prev, a.origin, a.n_wid)
        total += cost_model.sense_cost_cs
        prev = a.origin
    return total


def env_to_json(env: Environment) -> str:
    """Reproducibility record: dims, target count, noise, seed, target cells."""
    return json.dumps({
        "format": "gridseek-env-v1",
        "n_len": env.n_len,
        "n_wid": env.n_wid,
        "k": env.k,
        "sigma": env.sigma,
        "fov": env.fov if isinstance(env.fov, str) else {
            "pattern": [list(p) for p in env.fov.pattern],
            "directions": list(env.fov.directions),
        },
        "rng_seed": env.rng_seed,
        "beta_true": env.beta_true.tolist(),
    })


def env_from_json(text: str) -> Environment:
    rec = json.loads(text)
    if rec.get("format") != "gridseek-env-v1":
        raise ValueError("not a gridseek environment record")
    fov = rec["fov"]
    if isinstance(fov, dict):
        fov = CustomFov(tuple(tuple(p) for p in fov["pattern"]),
                        tuple(fov["directions"]))
    beta = np.asarray(rec["beta_true"], dtype=np.uint8)
    beta.setflags(write=False)
    return Environment(rec["n_len"], rec["n_wid"], rec["k"], rec["sigma"],
                       fov, rec["rng_seed"], beta)
