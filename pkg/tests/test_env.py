import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridseek.env import (CostModel, CustomFov, SensingAction, cell_distance,
                          enumerate_actions, env_from_json, env_to_json,
                          episode_cost, new_environment, observe, travel_cost)


def env_1d(n=16, k=1, sigma=1.0 / 16.0, seed=7):
    return new_environment(1, n, k, sigma, "line3", seed)


class TestNewEnvironment:
    def test_1d_paper_shape(self):
        env = env_1d()
        assert env.n == 16
        assert env.beta_true.sum() == 1

    def test_2d_four_targets(self):
        env = new_environment(8, 8, 4, 1.0 / 16.0, "wedge2", 3)
        assert env.n == 64
        assert env.beta_true.sum() == 4

    def test_k_equals_n_forces_all_ones(self):
        env = new_environment(1, 4, 4, 0.1, "line3", 0)
        assert env.beta_true.tolist() == [1, 1, 1, 1]

    def test_deterministic_given_seed(self):
        a = new_environment(8, 8, 4, 0.1, "wedge2", 42)
        b = new_environment(8, 8, 4, 0.1, "wedge2", 42)
        assert np.array_equal(a.beta_true, b.beta_true)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            new_environment(1, 4, 5, 0.1)
        with pytest.raises(ValueError):
            new_environment(0, 4, 1, 0.1)
        with pytest.raises(ValueError):
            new_environment(1, 4, 1, 0.0)

    def test_uniform_placement(self):
        counts = np.zeros(8)
        for seed in range(4000):
            counts += new_environment(1, 8, 1, 0.1, "line3", seed).beta_true
        assert counts.min() > 400  # each cell ~500 expected

    def test_json_round_trip(self):
        env = new_environment(8, 8, 4, 0.2, "wedge2", 9)
        back = env_from_json(env_to_json(env))
        assert back.n_len == 8 and back.k == 4 and back.sigma == 0.2
        assert np.array_equal(back.beta_true, env.beta_true)


class TestEnumerateActions:
    def test_1d_count_is_origins_times_directions(self):
        # Exhaustive oracle: every (origin, direction) pair appears once.
        acts = enumerate_actions(env_1d())
        assert len(acts) == 32
        assert {(a.origin, a.direction) for a in acts} == {
            (o, d) for o in range(16) for d in ("E", "W")}

    def test_six_actions_cover_1d_grid(self):
        acts = enumerate_actions(env_1d())
        chosen = [a for a in acts
                  if a.direction == "E" and a.origin in (0, 3, 6, 9, 12, 15)]
        covered = set()
        for a in chosen:
            covered.update(a.cells)
        assert len(chosen) == 6
        assert covered == set(range(16))

    def test_single_cell_grid_clips_to_origin(self):
        acts = enumerate_actions(new_environment(1, 1, 1, 0.1, "line3", 0))
        assert len(acts) == 2
        assert all(a.cells == (0,) for a in acts)

    def test_line3_cells_follow_direction(self):
        acts = enumerate_actions(env_1d())
        east5 = next(a for a in acts if a.origin == 5 and a.direction == "E")
        west5 = next(a for a in acts if a.origin == 5 and a.direction == "W")
        assert east5.cells == (5, 6, 7)
        assert west5.cells == (5, 4, 3)

    def test_wedge2_interior_and_clipped(self):
        env = new_environment(8, 8, 1, 0.1, "wedge2", 0)
        acts = enumerate_actions(env)
        assert len(acts) == 64 * 4
        origin = 3 * 8 + 3
        east = next(a for a in acts
                    if a.origin == origin and a.direction == "E")
        # own cell, range 1 ahead, range 2 ahead plus the two laterals
        assert set(east.cells) == {origin, origin + 1, origin + 2,
                                   origin + 2 + 8, origin + 2 - 8}
        corner_w = next(a for a in acts if a.origin == 0 and a.direction == "W")
        assert corner_w.cells == (0,)

    def test_masks_match_cells(self):
        for a in enumerate_actions(new_environment(4, 5, 2, 0.1, "wedge2", 1)):
            m = a.mask()
            assert m.shape == (4, 5)
            assert m.sum() == len(a.cells)
            assert all(m.reshape(-1)[c] == 1 for c in a.cells)

    def test_enumeration_is_deterministic(self):
        env = new_environment(3, 3, 1, 0.1, "wedge2", 0)
        assert enumerate_actions(env) == enumerate_actions(env)

    def test_custom_fov(self):
        fov = CustomFov(pattern=((0, 0), (1, 0)), directions=("E",))
        env = new_environment(1, 4, 1, 0.1, fov, 0)
        acts = enumerate_actions(env)
        assert len(acts) == 4
        assert acts[0].cells == (0, 1)
        assert acts[3].cells == (3,)

    def test_action_validation(self):
        with pytest.raises(ValueError):
            SensingAction(0, "E", (), 1, 4)
        with pytest.raises(ValueError):
            SensingAction(0, "E", (0, 0), 1, 4)
        with pytest.raises(ValueError):
            SensingAction(0, "E", (4,), 1, 4)


class TestObserve:
    def test_noiseless_limit_reads_beta(self):
        env = new_environment(1, 16, 1, 1e-12, "line3",
                              rng_seed=3)
        target = int(np.argmax(env.beta_true))
        env2 = new_environment(1, 16, 1, 1e-12, "line3", rng_seed=3)
        acts = enumerate_actions(env2)
        a = next(x for x in acts
                 if target in x.cells and x.direction == "E")
        obs = observe(env2, a, np.random.default_rng(0))
        expected = [float(env.beta_true[c]) for c in a.cells]
        assert np.allclose(obs.values, expected, atol=1e-9)

    def test_monte_carlo_mean_unbiased(self):
        # MC moment oracle: empirical mean of y - beta within 3 sigma/sqrt(N).
        env = env_1d(sigma=0.25, seed=1)
        a = enumerate_actions(env)[4]
        rng = np.random.default_rng(123)
        n_draws = 10 ** 5
        resid = np.empty((n_draws, len(a.cells)))
        beta = env.beta_true[list(a.cells)].astype(float)
        for i in range(n_draws):
            resid[i] = observe(env, a, rng).values - beta
        bound = 3.0 * 0.25 / math.sqrt(n_draws)
        assert np.all(np.abs(resid.mean(axis=0)) < bound)
        assert np.all(np.abs(resid.var(axis=0) / 0.25 ** 2 - 1.0) < 0.05)

    def test_deterministic_given_rng_state(self):
        env = env_1d()
        a = enumerate_actions(env)[0]
        v1 = observe(env, a, np.random.default_rng(5)).values
        v2 = observe(env, a, np.random.default_rng(5)).values
        assert np.array_equal(v1, v2)


class TestCosts:
    def test_three_four_five_triangle(self):
        cm = CostModel(speed_v=1.0)
        n_wid = 5
        assert travel_cost(cm, 0, 3 * n_wid + 4, n_wid) == pytest.approx(5.0)

    def test_same_cell_is_free(self):
        assert travel_cost(CostModel(), 7, 7, 16) == 0.0

    def test_speed_divides_distance(self):
        assert travel_cost(CostModel(speed_v=2.0), 0, 7, 16) == pytest.approx(3.5)

    def test_episode_cost_examples(self):
        env = env_1d()
        acts = enumerate_actions(env)

        def at(origin):
            return next(a for a in acts
                        if a.origin == origin and a.direction == "E")

        cm0 = CostModel(1.0, 0.0)
        assert episode_cost(cm0, 0, [at(3), at(3)]) == pytest.approx(3.0)
        cm50 = CostModel(1.0, 50.0)
        assert episode_cost(cm50, 0, [at(3), at(6)]) == pytest.approx(106.0)
        assert episode_cost(cm50, 0, [at(0)] * 4) == pytest.approx(200.0)
        with pytest.raises(ValueError):
            episode_cost(cm0, 0, [])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 15), min_size=1, max_size=6),
           st.lists(st.integers(0, 15), min_size=1, max_size=6),
           st.integers(0, 15))
    def test_episode_cost_additive(self, origins_a, origins_b, start):
        env = env_1d()
        acts = enumerate_actions(env)
        seq_a = [acts[2 * o] for o in origins_a]
        seq_b = [acts[2 * o] for o in origins_b]
        cm = CostModel(1.0, 7.0)
        whole = episode_cost(cm, start, seq_a + seq_b)
        split = (episode_cost(cm, start, seq_a)
                 + episode_cost(cm, seq_a[-1].origin, seq_b))
        assert whole == pytest.approx(split)

    def test_cell_distance_symmetry(self):
        assert cell_distance(3, 11, 4) == cell_distance(11, 3, 4)
