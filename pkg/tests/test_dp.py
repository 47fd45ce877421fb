"""Clipping, privatization, optimizer steps, and training dynamics."""

import numpy as np
import pytest

from dprobust import (
    ClipMode,
    DPConfig,
    LinearModel,
    NumericError,
    OptimizerConfig,
    ParameterError,
    UsageError,
    clip,
    init_state,
    optimal_intercepts,
    privatize,
    sample,
    step,
    train,
)
from dprobust.data import Dataset

from oracles import ClippedGradientOracle, logistic_stationary_intercept


class TestClip:
    def test_examples(self):
        g = np.array([3.0, 4.0])
        assert np.array_equal(clip(g, ClipMode.standard(1.0)), np.array([0.6, 0.8]))
        assert np.array_equal(clip(g, ClipMode.standard(10.0)), g)
        assert np.array_equal(clip(g, ClipMode.automatic()), np.array([0.6, 0.8]))

    def test_zero_gradient_passthrough(self):
        z = np.zeros(3)
        assert np.array_equal(clip(z, ClipMode.standard(1.0)), z)
        assert np.array_equal(clip(z, ClipMode.automatic()), z)

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericError):
            clip(np.array([1.0, np.nan]), ClipMode.automatic())
        with pytest.raises(NumericError):
            clip(np.array([np.inf, 0.0]), ClipMode.standard(1.0))

    def test_norm_bound_property(self, rng):
        for _ in range(200):
            g = rng.normal(size=rng.integers(1, 8)) * 10 ** rng.uniform(-3, 3)
            R = float(10 ** rng.uniform(-3, 1))
            assert np.linalg.norm(clip(g, ClipMode.standard(R))) <= R + 1e-12
            auto_norm = np.linalg.norm(clip(g, ClipMode.automatic()))
            assert auto_norm == 0.0 or abs(auto_norm - 1.0) <= 1e-12

    def test_saturated_equals_scaled_automatic_bitwise(self, rng):
        for R in (1.0, 0.01, 1.0 / 3.0, 0.1):
            for _ in range(50):
                g = rng.normal(size=5)
                if np.linalg.norm(g) <= R:
                    g = g * (2.0 * R / np.linalg.norm(g))
                std = clip(g, ClipMode.standard(R))
                auto = clip(g, ClipMode.automatic())
                assert std.tobytes() == (R * auto).tobytes()

    def test_mode_validation(self):
        with pytest.raises(ParameterError):
            ClipMode.standard(0.0)
        with pytest.raises(ParameterError):
            ClipMode(kind="automatic", R=1.0)
        with pytest.raises(ParameterError):
            ClipMode(kind="global", R=1.0)


class TestPrivatize:
    def test_noiseless_is_clipped_sum(self, rng):
        G = rng.normal(size=(6, 4))
        cfg = DPConfig(clip=ClipMode.standard(0.5), noise_multiplier=0.0)
        got = privatize(G, cfg, rng)
        want = np.zeros(4)
        for row in G:
            want = want + clip(row, cfg.clip)
        assert np.array_equal(got, want)

    def test_single_saturated_sample_norm_is_r(self, rng):
        g = rng.normal(size=3) * 10
        cfg = DPConfig(clip=ClipMode.standard(0.25), noise_multiplier=0.0)
        out = privatize(g[None, :], cfg, rng)
        assert np.linalg.norm(out) == pytest.approx(0.25, rel=1e-15)

    def test_noise_variance_monte_carlo(self):
        G = np.array([[0.3, -0.2], [0.05, 0.11], [-0.4, 0.4]])
        cfg = DPConfig(clip=ClipMode.standard(0.1), noise_multiplier=1.0)
        base = privatize(G, DPConfig(clip=cfg.clip, noise_multiplier=0.0),
                         np.random.default_rng(0))
        rng = np.random.default_rng(42)
        draws = np.array([privatize(G, cfg, rng) - base for _ in range(10_000)])
        var = draws.var(axis=0)
        # noise std is sigma * R = 0.1, so variance R^2 = 0.01 per coordinate
        assert np.abs(var - 0.01).max() < 0.05 * 0.01

    def test_automatic_noise_scale_is_unit(self):
        G = np.array([[5.0, 0.0]])
        cfg = DPConfig(clip=ClipMode.automatic(), noise_multiplier=1.0)
        rng = np.random.default_rng(7)
        draws = np.array([privatize(G, cfg, np.random.default_rng(i))[0]
                          for i in range(8_000)])
        assert draws.var() == pytest.approx(1.0, rel=0.06)

    def test_permutation_invariance(self, rng):
        G = rng.normal(size=(40, 3))
        cfg = DPConfig(clip=ClipMode.automatic(), noise_multiplier=0.0)
        a = privatize(G, cfg, rng)
        b = privatize(G[rng.permutation(40)], cfg, rng)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14)

    def test_linear_in_clipped_gradients(self, rng):
        # noise-free output of a concatenated batch is the sum of the parts
        G1, G2 = rng.normal(size=(5, 3)), rng.normal(size=(8, 3))
        cfg = DPConfig(clip=ClipMode.standard(0.3), noise_multiplier=0.0)
        whole = privatize(np.vstack([G1, G2]), cfg, rng)
        parts = privatize(G1, cfg, rng) + privatize(G2, cfg, rng)
        assert np.allclose(whole, parts, rtol=1e-12, atol=1e-14)

    def test_empty_rejected(self, rng):
        cfg = DPConfig(clip=ClipMode.automatic(), noise_multiplier=0.0)
        with pytest.raises(ParameterError):
            privatize(np.empty((0, 3)), cfg, rng)


class TestStep:
    def test_vanilla_sgd(self):
        params = np.array([1.0, -2.0])
        gsum = np.array([4.0, 8.0])
        new, state = step(init_state(2), params, gsum, OptimizerConfig.sgd(1.0), 4)
        assert np.array_equal(new, params - gsum / 4)
        assert state.t == 1

    def test_uninitialized_state_rejected(self):
        with pytest.raises(UsageError):
            step(None, np.zeros(2), np.zeros(2), OptimizerConfig.sgd(1.0), 1)
        with pytest.raises(UsageError):
            step(init_state(3), np.zeros(2), np.zeros(2), OptimizerConfig.sgd(1.0), 1)

    def test_momentum_heavy_ball_reference(self, rng):
        opt = OptimizerConfig.sgd(0.5, momentum=0.9)
        params = rng.normal(size=3)
        state = init_state(3)
        vel = np.zeros(3)
        ref = params.copy()
        for t in range(5):
            gsum = rng.normal(size=3)
            params, state = step(state, params, gsum, opt, 2)
            vel = 0.9 * vel + gsum / 2
            ref = ref - 0.5 * vel
            assert np.allclose(params, ref, rtol=1e-15, atol=0)

    def test_adam_reference(self, rng):
        opt = OptimizerConfig.adam(0.1, beta1=0.9, beta2=0.99, eps=1e-8)
        params = rng.normal(size=4)
        state = init_state(4)
        m = np.zeros(4)
        v = np.zeros(4)
        ref = params.copy()
        for t in range(1, 6):
            gsum = rng.normal(size=4)
            params, state = step(state, params, gsum, opt, 1)
            g = gsum / 1
            m = 0.9 * m + 0.1 * g
            v = 0.99 * v + 0.01 * g * g
            ref = ref - 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.99**t)) + 1e-8)
            assert np.allclose(params, ref, rtol=1e-14, atol=0)

    def test_rmsprop_constant_gradient_recursion(self):
        # with eps=0 and constant gradient g: v_t = (1 - alpha^t) g^2, so the
        # step is eta / sqrt(1 - alpha^t) regardless of |g|
        opt = OptimizerConfig.rmsprop(0.05, alpha=0.9, eps=0.0)
        for gval in (0.01, 1.0, 250.0):
            params = np.array([0.0])
            state = init_state(1)
            for t in range(1, 8):
                prev = params.copy()
                params, state = step(state, params, np.array([gval]), opt, 1)
                expected = 0.05 / np.sqrt(1.0 - 0.9**t)
                assert abs(prev[0] - params[0]) == pytest.approx(expected, rel=1e-12)

    def test_rmsprop_step_magnitude_independent_of_scale(self):
        opt = OptimizerConfig.rmsprop(0.05, alpha=0.9, eps=0.0)
        traces = []
        for scale in (1.0, 100.0):
            params = np.array([0.0])
            state = init_state(1)
            deltas = []
            for _ in range(6):
                prev = params[0]
                params, state = step(state, params, np.array([0.3 * scale]), opt, 1)
                deltas.append(params[0] - prev)
            traces.append(deltas)
        assert np.allclose(traces[0], traces[1], rtol=1e-12)


def _rmsprop_run(data, R, seed, eta=0.002, epochs=3, batch=32, sigma=0.0):
    # zero weights keep margins (hence the logistic factor) moderate for the
    # few steps we take, so per-sample gradient norms stay above 1 throughout
    model = LinearModel(w=np.zeros(data.dim), b=0.0,
                        trainable_mask=np.ones(data.dim + 1, bool))
    dp = DPConfig(clip=ClipMode.standard(R), noise_multiplier=sigma)
    opt = OptimizerConfig.rmsprop(eta, alpha=0.99, eps=0.0)
    return train(data, model, "logistic_binary", dp, opt, epochs, batch, seed)


def _min_per_sample_norm(data, trace):
    """Smallest per-sample gradient norm seen along a trajectory."""
    from dprobust import per_sample_gradients

    lo = np.inf
    for row in trace:
        model = LinearModel(w=row[:-1], b=row[-1], trainable_mask=np.ones(data.dim + 1, bool))
        G, _ = per_sample_gradients(model, data.X, data.y)
        lo = min(lo, float(np.linalg.norm(G, axis=1).min()))
    return lo


class TestRInvariance:
    @pytest.mark.parametrize("sigma", [0.0, 1.0])
    def test_rmsprop_trajectories_match_across_r(self, sigma):
        # scaled-up features keep every per-sample norm above 1, so both
        # clipping norms saturate on every sample and cancel in the update
        rng = np.random.default_rng(0)
        X = rng.normal(size=(64, 4)) * 10.0
        y = rng.choice([-1, 1], size=64)
        data = Dataset(X=X, y=y)
        res_big = _rmsprop_run(data, 1.0, seed=7, sigma=sigma)
        res_small = _rmsprop_run(data, 0.01, seed=7, sigma=sigma)
        assert _min_per_sample_norm(data, res_big.params_trace) >= 1.0
        assert _min_per_sample_norm(data, res_small.params_trace) >= 1.0
        a, b = res_big.params_trace, res_small.params_trace
        rel = np.abs(a - b) / np.maximum(np.abs(a), 1e-30)
        assert rel.max() <= 1e-10


class TestTrain:
    def test_zero_epochs_unchanged(self, spec, rng):
        data = sample(spec, 100, rng)
        model = LinearModel.ones(2, b=0.3)
        res = train(data, model, "logistic_binary", None, OptimizerConfig.sgd(1.0), 0, 50, 1)
        assert res.model.b == 0.3
        assert np.array_equal(res.model.w, model.w)
        assert res.params_trace.shape == (1, 3)

    def test_usage_errors(self, spec, rng):
        data = sample(spec, 10, rng)
        model = LinearModel.ones(2)
        opt = OptimizerConfig.sgd(1.0)
        with pytest.raises(UsageError):
            train(data, model, "logistic_binary", None, opt, 1, 11, 0)
        with pytest.raises(UsageError):
            train(Dataset(X=np.empty((0, 2)), y=np.empty(0, dtype=np.int64)),
                  model, "logistic_binary", None, opt, 1, 1, 0)

    def test_nonfinite_data_rejected(self, rng):
        X = rng.normal(size=(8, 2))
        X[3, 1] = np.nan
        data = Dataset(X=X, y=rng.choice([-1, 1], size=8))
        with pytest.raises(NumericError):
            train(data, LinearModel.ones(2), "logistic_binary", None,
                  OptimizerConfig.sgd(1.0), 1, 4, 0)

    def test_bit_reproducible(self, spec):
        data = sample(spec, 400, np.random.default_rng(5))
        dp = DPConfig(clip=ClipMode.standard(0.1), noise_multiplier=1.0)
        opt = OptimizerConfig.sgd(4.0)
        runs = [train(data, LinearModel.ones(2), "logistic_binary", dp, opt, 4, 100, 9)
                for _ in range(2)]
        assert runs[0].params_trace.tobytes() == runs[1].params_trace.tobytes()

    def test_mlp_route_runs_and_records(self, spec, rng):
        from dprobust import Mlp, MlpSpec

        data = sample(spec, 120, rng)
        mlp = Mlp.init(MlpSpec(widths=(2, 6, 1), activation="tanh"), rng)
        dp = DPConfig(clip=ClipMode.automatic(), noise_multiplier=0.5)
        res = train(data, mlp, "logistic_binary", dp, OptimizerConfig.adam(0.05), 3, 40, 2)
        assert res.params_trace.shape == (4, mlp.n_params)
        assert len(res.epoch_losses) == 3
        assert np.isfinite(res.params_trace).all()

    def test_train_matches_manual_loop(self, spec):
        # rebuild the training loop from the public pieces (per-sample
        # gradients, privatize, step) with the same rng discipline; the fused
        # kernel path inside train() must reproduce it up to float noise
        from dprobust import per_sample_gradients

        data = sample(spec, 200, np.random.default_rng(3))
        dp = DPConfig(clip=ClipMode.standard(0.1), noise_multiplier=1.0)
        opt = OptimizerConfig.sgd(2.0)
        model = LinearModel.ones(2)
        res = train(data, model, "logistic_binary", dp, opt, 3, 50, 11)

        rng = np.random.default_rng(11)
        b = model.b
        state = init_state(1)
        manual = [b]
        for _ in range(3):
            perm = rng.permutation(len(data))
            for k in range(len(data) // 50):
                idx = perm[k * 50:(k + 1) * 50]
                cur = LinearModel.ones(2, b=b)
                G, _ = per_sample_gradients(cur, data.X[idx], data.y[idx])
                gsum = privatize(G[:, 2:], dp, rng)
                sub, state = step(state, np.array([b]), gsum, opt, 50)
                b = float(sub[0])
            manual.append(b)
        assert np.allclose(res.intercept_trace, manual, rtol=1e-10, atol=1e-13)


@pytest.mark.slow
class TestStationaryPoints:
    def test_nondp_converges_to_logistic_stationary_point(self, spec):
        # NOTE: this is the verified limit of non-DP logistic training with
        # w frozen at ones.  It is far below the zero-one-optimal intercept
        # b_0 = 1.094: the surrogate loss balances expected sigmoids, not
        # boundary densities, so training cannot recover b_0 here.
        target = logistic_stationary_intercept(spec)
        assert target == pytest.approx(0.1855, abs=2e-3)
        data = sample(spec, 10_000, np.random.default_rng(77))
        res = train(data, LinearModel.ones(2), "logistic_binary", None,
                    OptimizerConfig.sgd(8.0), 50, 1000, 4)
        assert abs(res.model.b - target) < 0.05

    def test_clipped_training_converges_to_clipped_stationary_point(self, spec):
        R = 0.1
        oracle = ClippedGradientOracle(spec, R, n=1_000_000)
        target = oracle.zero()
        b0 = optimal_intercepts(spec, 0.0).b_minus
        assert target < b0 - 0.02
        data = sample(spec, 10_000, np.random.default_rng(78))
        dp = DPConfig(clip=ClipMode.standard(R), noise_multiplier=0.0)
        res = train(data, LinearModel.ones(2), "logistic_binary", dp,
                    OptimizerConfig.sgd(8.0), 50, 1000, 4)
        assert abs(res.model.b - target) < 0.05
        assert res.model.b < b0 - 0.02
