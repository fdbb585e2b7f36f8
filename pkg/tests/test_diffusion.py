import math

import numpy as np
import pytest

from gridseek.belief import init_belief, state_image
from gridseek.datagen import (DatasetConfig, TrainingSet, chunk_episodes,
                              generate_dataset)
from gridseek.diffusion import (ModelBundle, NetConfig, NoiseSchedule,
                                SamplerConfig, binarize_trajectory,
                                cdas_sample, code_frames, cosine_schedule,
                                das_plan_step, forward_noise, load_models,
                                save_models, template_coded_matrix,
                                time_embedding, train_distance_model,
                                train_return_model, train_trajectory_model)
from gridseek.env import CostModel, enumerate_actions, new_environment

SIGMA = 1.0 / 16.0


def templates_1d(n=16):
    env = new_environment(1, n, 1, SIGMA, "line3", 0)
    return enumerate_actions(env)


def one_trajectory_set(h=4, n=16, seed=0):
    """Training set holding a single coverage trajectory."""
    tpls = templates_1d(n)
    east = [a for a in tpls if a.direction == "E"]
    rng = np.random.default_rng(seed)
    picks = [east[int(rng.integers(len(east)))] for _ in range(h)]
    tau = np.stack([a.mask_flat() for a in picks])[None]
    belief = init_belief(1, n, SIGMA)
    states = state_image(belief)[None]
    return TrainingSet(states=states, tau=tau.astype(np.uint8),
                       returns=np.array([1.0]), distances=np.array([3.0]),
                       start_cells=np.array([0]), h=h, n_len=1, n_wid=n,
                       sigma=SIGMA, gamma=0.95), picks


class TestNoiseSchedule:
    def test_cosine_properties(self):
        s = cosine_schedule(64)
        assert s.alpha_bar[0] == 1.0
        assert np.all(np.diff(s.alpha_bar) < 0)
        assert s.alpha_bar[-1] >= 0
        assert s.step_variance[1] == 0.0
        assert np.all(s.step_variance >= 0)

    def test_cosine_closed_form_at_midpoint(self):
        t_diff = 64
        s = cosine_schedule(t_diff)
        t = t_diff // 2
        f = lambda u: math.cos((u / t_diff + 0.008) / 1.008 * math.pi / 2) ** 2
        assert s.alpha_bar[t] == pytest.approx(f(t) / f(0), rel=1e-12)

    def test_rejects_nonmonotone(self):
        with pytest.raises(ValueError):
            NoiseSchedule(2, np.array([1.0, 0.9, 0.95]), np.zeros(3))


class TestForwardNoise:
    def test_identity_at_zero(self):
        s = cosine_schedule(8)
        tau = np.random.default_rng(0).normal(size=(3, 4))
        noise = np.random.default_rng(1).normal(size=(3, 4))
        assert np.array_equal(forward_noise(tau, 0, noise, s), tau)

    def test_pure_noise_at_dead_schedule(self):
        ab = np.linspace(1.0, 0.0, 5)
        s = NoiseSchedule(4, ab, np.zeros(5))
        tau = np.ones((2, 3))
        noise = np.random.default_rng(2).normal(size=(2, 3))
        assert np.allclose(forward_noise(tau, 4, noise, s), noise)

    def test_midpoint_coefficients(self):
        s = cosine_schedule(32)
        tau = np.ones(6)
        noise = np.full(6, 2.0)
        t = 16
        expect = (math.sqrt(s.alpha_bar[t]) * 1.0
                  + math.sqrt(1.0 - s.alpha_bar[t]) * 2.0)
        assert np.allclose(forward_noise(tau, t, noise, s), expect)

    def test_rejects_out_of_range(self):
        s = cosine_schedule(8)
        with pytest.raises(ValueError):
            forward_noise(np.ones(3), 9, np.ones(3), s)
        with pytest.raises(ValueError):
            forward_noise(np.ones(3), 1, np.ones(4), s)


class TestTimeEmbedding:
    def test_shapes(self):
        assert time_embedding(3, 16).shape == (16,)
        assert time_embedding(np.arange(5), 8).shape == (5, 8)

    def test_zero_step(self):
        e = time_embedding(0, 8)
        assert np.allclose(e[0::2], 0.0)
        assert np.allclose(e[1::2], 1.0)


class TestBinarize:
    def test_exact_template_recovered(self):
        tpls = templates_1d()
        coded = template_coded_matrix(tpls)
        for i in (0, 5, 31):
            out = binarize_trajectory(coded[i][None], tpls)
            assert np.array_equal(out[0].mask_flat(), tpls[i].mask_flat())

    def test_small_noise_margin_all_templates(self):
        tpls = templates_1d()
        coded = template_coded_matrix(tpls)
        rng = np.random.default_rng(3)
        for i in range(len(tpls)):
            noise = rng.uniform(-0.099, 0.099, size=coded.shape[1])
            out = binarize_trajectory((coded[i] + noise)[None], tpls)
            assert np.array_equal(out[0].mask_flat(), tpls[i].mask_flat())

    def test_zero_frame_ties_to_index_zero(self):
        tpls = templates_1d()
        out = binarize_trajectory(np.zeros((1, 16)), tpls)
        assert out[0] is tpls[0]

    def test_multi_frame(self):
        tpls = templates_1d()
        coded = template_coded_matrix(tpls)
        out = binarize_trajectory(coded[[2, 7, 2]], tpls)
        assert [o is t for o, t in zip(out, (tpls[2], tpls[7], tpls[2]))]

    def test_rejects_empty_templates(self):
        with pytest.raises(ValueError):
            binarize_trajectory(np.zeros((1, 16)), [])


class TestTrainers:
    def test_untrained_loss_near_unit_power(self):
        # per-dim squared error of a fresh net against {-1,+1} targets is
        # close to 1
        ts, _ = one_trajectory_set()
        big = TrainingSet(states=np.repeat(ts.states, 32, 0),
                          tau=np.repeat(ts.tau, 32, 0),
                          returns=np.repeat(ts.returns, 32),
                          distances=np.repeat(ts.distances, 32),
                          start_cells=np.repeat(ts.start_cells, 32),
                          h=ts.h, n_len=1, n_wid=16, sigma=SIGMA, gamma=0.95)
        cfg = NetConfig(hidden=(64, 64), batch_size=32, lr=1e-3)
        res = train_trajectory_model(big, cosine_schedule(16), cfg, 1,
                                     np.random.default_rng(0))
        assert 0.5 < res.epoch_losses[0] < 1.5

    def test_loss_nonnegative_and_decreasing_overall(self):
        ts, _ = one_trajectory_set()
        cfg = NetConfig(hidden=(64, 64), batch_size=4, lr=3e-3)
        res = train_trajectory_model(ts, cosine_schedule(16), cfg, 50,
                                     np.random.default_rng(1))
        assert all(l >= 0 for l in res.epoch_losses)
        assert res.epoch_losses[-1] < res.epoch_losses[0]

    def test_constant_label_return_regression(self):
        ds = generate_dataset(DatasetConfig(
            m_episodes=4, t_steps=6, horizon_h=3, n_wid=8, sigma=SIGMA,
            n_beta=2, n_y=2, rng_seed=3))
        chunks = chunk_episodes(ds, 3, 0.95)
        chunks.returns[:] = 0.7
        cfg = NetConfig(hidden=(64, 64), batch_size=8, lr=3e-3)
        res = train_return_model(chunks, cosine_schedule(16), False, cfg, 300,
                                 np.random.default_rng(2))
        tau0 = code_frames(chunks.tau.reshape(len(chunks.tau), -1))
        states = np.concatenate([
            chunks.states[:, 0].reshape(len(tau0), -1),
            chunks.states[:, 1].reshape(len(tau0), -1) / SIGMA ** 2], axis=1)
        from gridseek.nn import forward
        x = np.concatenate([tau0, states,
                            np.tile(time_embedding(0, 16), (len(tau0), 1))],
                           axis=1)
        preds = forward(res.net, x)[:, 0]
        assert np.max(np.abs(preds - 0.7)) < 1e-2

    def test_return_model_beats_mean_predictor_held_out(self):
        ds = generate_dataset(DatasetConfig(
            m_episodes=500, t_steps=8, horizon_h=4, n_wid=16, sigma=SIGMA,
            n_beta=10, n_y=5, rng_seed=4))
        chunks = chunk_episodes(ds, 4, 0.95)
        s = len(chunks.tau)
        split = int(0.8 * s)
        train = TrainingSet(chunks.states[:split], chunks.tau[:split],
                            chunks.returns[:split], chunks.distances[:split],
                            chunks.start_cells[:split], chunks.h, 1, 16,
                            SIGMA, 0.95)
        cfg = NetConfig(hidden=(128, 128), batch_size=32, lr=1e-3)
        res = train_return_model(train, cosine_schedule(16), False, cfg, 120,
                                 np.random.default_rng(5))
        from gridseek.nn import forward
        tau0 = code_frames(chunks.tau.reshape(s, -1))[split:]
        states = np.concatenate([
            chunks.states[split:, 0].reshape(s - split, -1),
            chunks.states[split:, 1].reshape(s - split, -1) / SIGMA ** 2],
            axis=1)
        x = np.concatenate([tau0, states,
                            np.tile(time_embedding(0, 16), (s - split, 1))],
                           axis=1)
        preds = forward(res.net, x)[:, 0]
        held = chunks.returns[split:]
        rmse = math.sqrt(np.mean((preds - held) ** 2))
        base = math.sqrt(np.mean((held - chunks.returns[:split].mean()) ** 2))
        assert rmse < base

    def test_distance_degenerate_dataset(self):
        tpls = templates_1d()
        stay = next(a for a in tpls if a.origin == 3 and a.direction == "E")
        tau = np.tile(stay.mask_flat(), (24, 4, 1)).astype(np.uint8)
        belief = init_belief(1, 16, SIGMA)
        ts = TrainingSet(states=np.tile(state_image(belief), (24, 1, 1, 1)),
                         tau=tau, returns=np.zeros(24),
                         distances=np.zeros(24),
                         start_cells=np.full(24, 3), h=4, n_len=1, n_wid=16,
                         sigma=SIGMA, gamma=0.95)
        cfg = NetConfig(hidden=(64, 64), batch_size=8, lr=3e-3)
        res = train_distance_model(ts, cfg, 150, np.random.default_rng(6))
        from gridseek.nn import forward
        pred = forward(res.net, code_frames(tau.reshape(24, -1)))[:, 0]
        assert np.max(np.abs(pred)) < 0.1

    def test_distance_training_curve_decreases_smoothed(self):
        ds = generate_dataset(DatasetConfig(
            m_episodes=30, t_steps=8, horizon_h=4, n_wid=16, sigma=SIGMA,
            n_beta=2, n_y=2, rng_seed=7))
        chunks = chunk_episodes(ds, 4, 0.95)
        cfg = NetConfig(hidden=(64, 64), batch_size=16, lr=1e-3)
        res = train_distance_model(chunks, cfg, 12, np.random.default_rng(8))
        sm = np.convolve(res.epoch_losses, np.ones(3) / 3, mode="valid")
        assert all(sm[i + 1] <= sm[i] + 1e-9 for i in range(8))
        from gridseek.nn import forward
        pred = forward(res.net, np.random.default_rng(9).normal(size=(5, 64)))
        assert np.all(np.isfinite(pred))

    def test_missing_labels_rejected(self):
        ts, _ = one_trajectory_set()
        empty = TrainingSet(ts.states, ts.tau, np.array([]), np.array([]),
                            ts.start_cells, ts.h, 1, 16, SIGMA, 0.95)
        with pytest.raises(ValueError):
            train_return_model(empty, cosine_schedule(8), False, NetConfig(),
                               10, np.random.default_rng(0))
        with pytest.raises(ValueError):
            train_distance_model(empty, NetConfig(), 10,
                                 np.random.default_rng(0))


@pytest.fixture(scope="module")
def overfit_bundle():
    ts, picks = one_trajectory_set(h=4)
    schedule = cosine_schedule(16)
    cfg = NetConfig(hidden=(128, 128), batch_size=4, lr=3e-3)
    rho = train_trajectory_model(ts, schedule, cfg, 600,
                                 np.random.default_rng(10))
    nu = train_return_model(ts, schedule, False, cfg, 100,
                            np.random.default_rng(11))
    dist = train_distance_model(ts, cfg, 100, np.random.default_rng(12))
    bundle = ModelBundle(rho.net, nu.net, dist.net, schedule, h=4, n_len=1,
                         n_wid=16, emb_width=16,
                         state_var_scale=SIGMA ** 2)
    return bundle, ts, picks, rho.epoch_losses


class TestSampler:
    def test_overfit_reproduces_trajectory(self, overfit_bundle):
        bundle, ts, picks, losses = overfit_bundle
        assert losses[-1] < 1e-2
        tpls = templates_1d()
        belief = init_belief(1, 16, SIGMA)
        cfg = SamplerConfig(n_diff=20, alpha_guide=0.0, lambda_cost=0.0)
        res = das_plan_step(bundle, state_image(belief), 0, tpls, CostModel(),
                            cfg, np.random.default_rng(13))
        target = [a.mask_flat().tolist() for a in picks]
        got = [tpls[i].mask_flat().tolist() for i in res.template_indices[0]]
        assert got == target

    def test_fixed_seed_single_sample_deterministic(self, overfit_bundle):
        bundle, *_ = overfit_bundle
        tpls = templates_1d()
        belief = init_belief(1, 16, SIGMA)
        cfg = SamplerConfig(n_diff=1, alpha_guide=10.0, lambda_cost=0.1)
        r1 = cdas_sample(bundle, state_image(belief), 0, tpls, CostModel(),
                         cfg, np.random.default_rng(14))
        r2 = cdas_sample(bundle, state_image(belief), 0, tpls, CostModel(),
                         cfg, np.random.default_rng(14))
        assert np.array_equal(r1.template_indices, r2.template_indices)
        assert np.array_equal(r1.scores, r2.scores)
        assert r1.action is r2.action

    def test_das_equals_cdas_lambda_zero(self, overfit_bundle):
        bundle, *_ = overfit_bundle
        tpls = templates_1d()
        belief = init_belief(1, 16, SIGMA)
        cfg = SamplerConfig(n_diff=3, alpha_guide=5.0, lambda_cost=0.0)
        r1 = cdas_sample(bundle, state_image(belief), 2, tpls, CostModel(),
                         cfg, np.random.default_rng(15))
        r2 = das_plan_step(bundle, state_image(belief), 2, tpls, CostModel(),
                           cfg, np.random.default_rng(15))
        assert np.array_equal(r1.scores, r2.scores)
        assert np.array_equal(r1.template_indices, r2.template_indices)

    def test_das_scores_equal_return_predictions(self, overfit_bundle):
        bundle, *_ = overfit_bundle
        tpls = templates_1d()
        belief = init_belief(1, 16, SIGMA)
        cfg = SamplerConfig(n_diff=4, alpha_guide=0.0)
        res = das_plan_step(bundle, state_image(belief), 0, tpls, CostModel(),
                            cfg, np.random.default_rng(16))
        assert np.array_equal(res.scores, res.nu_values)

    def test_ddpm_posterior_mode_runs(self, overfit_bundle):
        bundle, *_ = overfit_bundle
        tpls = templates_1d()
        belief = init_belief(1, 16, SIGMA)
        cfg = SamplerConfig(n_diff=2, alpha_guide=0.0,
                            reverse_mean_mode="ddpm_posterior")
        res = cdas_sample(bundle, state_image(belief), 0, tpls, CostModel(),
                          cfg, np.random.default_rng(17))
        assert len(res.plan) == 4

    def test_distance_scoring_uses_current_cell(self, overfit_bundle):
        bundle, *_ = overfit_bundle
        tpls = templates_1d()
        belief = init_belief(1, 16, SIGMA)
        cfg = SamplerConfig(n_diff=5, alpha_guide=0.0, lambda_cost=0.5)
        res = cdas_sample(bundle, state_image(belief), 15, tpls, CostModel(),
                          cfg, np.random.default_rng(18))
        # recompute one sample's distance by hand
        i = res.sample_index
        origins = [tpls[j].origin for j in res.template_indices[i]]
        d = abs(15 - origins[0]) + sum(abs(a - b) for a, b in
                                       zip(origins, origins[1:]))
        assert res.distances[i] == pytest.approx(d)
        assert res.scores[i] == pytest.approx(res.nu_values[i] - 0.5 * d)

    def test_rejects_empty_templates(self, overfit_bundle):
        bundle, *_ = overfit_bundle
        belief = init_belief(1, 16, SIGMA)
        with pytest.raises(ValueError):
            cdas_sample(bundle, state_image(belief), 0, [], CostModel(),
                        SamplerConfig(n_diff=1), np.random.default_rng(0))

    def test_rejects_mismatched_state(self, overfit_bundle):
        bundle, *_ = overfit_bundle
        tpls = templates_1d()
        wrong = init_belief(1, 8, SIGMA)
        with pytest.raises(ValueError):
            cdas_sample(bundle, state_image(wrong), 0, tpls, CostModel(),
                        SamplerConfig(n_diff=1), np.random.default_rng(0))


class TestModelIO:
    def test_bundle_round_trip(self, overfit_bundle, tmp_path):
        bundle, *_ = overfit_bundle
        save_models(bundle, tmp_path / "models")
        back = load_models(tmp_path / "models")
        assert back.h == bundle.h and back.n == bundle.n
        assert back.schedule.t_diff == bundle.schedule.t_diff
        assert np.array_equal(back.schedule.alpha_bar,
                              bundle.schedule.alpha_bar)
        for a, b in zip(bundle.trajectory_net.parameters(),
                        back.trajectory_net.parameters()):
            assert a.tobytes() == b.tobytes()
        # identical samples from the reloaded bundle
        tpls = templates_1d()
        belief = init_belief(1, 16, SIGMA)
        cfg = SamplerConfig(n_diff=2, alpha_guide=3.0, lambda_cost=0.1)
        r1 = cdas_sample(bundle, state_image(belief), 0, tpls, CostModel(),
                         cfg, np.random.default_rng(19))
        r2 = cdas_sample(back, state_image(belief), 0, tpls, CostModel(),
                         cfg, np.random.default_rng(19))
        assert np.array_equal(r1.scores, r2.scores)
