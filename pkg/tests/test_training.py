"""Training loop: schedule values, Adam behavior, mode equivalence, fits."""

import numpy as np
import pytest

from diffint import sampling
from diffint.network import ParamGrads, init
from diffint.problems import Dataset, generate_dataset, get_problem
from diffint.training import (
    AdamState,
    TrainConfig,
    TrainedModel,
    TrainingError,
    adam_step,
    lr_schedule,
    train,
    train_fresh,
)


class TestLrSchedule:
    def test_endpoints(self):
        cfg = TrainConfig()
        assert lr_schedule(0, 100, cfg) == pytest.approx(1e-2, rel=1e-15)
        assert lr_schedule(100, 100, cfg) == pytest.approx(1e-5, rel=1e-15)

    def test_midpoint_value(self):
        cfg = TrainConfig()
        assert lr_schedule(1, 2, cfg) == pytest.approx(2.5075e-3, rel=1e-12)

    def test_monotone_decay(self):
        cfg = TrainConfig()
        vals = [lr_schedule(t, 50, cfg) for t in range(51)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_validation(self):
        with pytest.raises(ValueError):
            lr_schedule(5, 4, TrainConfig())
        with pytest.raises(ValueError):
            lr_schedule(-1, 4, TrainConfig())


def _grads_like(params, fill=0.0):
    return ParamGrads(weights=[np.full_like(w, fill) for w in params.weights],
                      biases=[np.full_like(b, fill) for b in params.biases])


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        params = init((2, 4, 1), seed=1)
        before = [w.copy() for w in params.weights]
        state = AdamState.for_params(params)
        adam_step(params, _grads_like(params, 0.0), state, lr=1e-2)
        for w, b in zip(params.weights, before):
            assert np.array_equal(w, b)

    def test_first_step_magnitude_is_lr(self):
        params = init((1, 3, 1), seed=2)
        before = [w.copy() for w in params.weights]
        state = AdamState.for_params(params)
        adam_step(params, _grads_like(params, 0.37), state, lr=1e-3)
        for w, b in zip(params.weights, before):
            # bias-corrected ratio is sign(g) up to the eps regularizer
            assert np.allclose(np.abs(w - b), 1e-3, rtol=1e-6)

    def test_non_finite_gradient_aborts(self):
        params = init((1, 3, 1), seed=3)
        grads = _grads_like(params, 0.1)
        grads.weights[0][0, 0] = np.nan
        with pytest.raises(TrainingError, match="non-finite gradient"):
            adam_step(params, grads, AdamState.for_params(params), lr=1e-3)

    def test_hundred_steps_bitwise_deterministic(self):
        def run():
            params = init((2, 8, 1), seed=5)
            state = AdamState.for_params(params)
            g_rng = np.random.default_rng(0)
            for _ in range(100):
                grads = ParamGrads(
                    weights=[g_rng.normal(0, 1, w.shape) for w in params.weights],
                    biases=[g_rng.normal(0, 1, b.shape) for b in params.biases])
                adam_step(params, grads, state, lr=1e-3)
            return params

        a, b = run(), run()
        for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
            assert np.array_equal(wa, wb)


def _toy_dataset(problem, n, seed=11):
    return generate_dataset(problem, n, sampling.RngState(seed, 55))


class TestTrain:
    def test_mode_switch_omega_zero_equivalence(self):
        # ann and dml-with-omega-0 must follow identical trajectories
        p = get_problem("cos_toy")
        ds = _toy_dataset(p, 512)
        base = dict(seed=9, epochs=8, batch_size=128, hidden=(16, 16))
        ann = train(p, ds, TrainConfig(mode="ann", **base))
        dml0 = train(p, ds, TrainConfig(mode="dml", omega=0.0, **base))
        assert np.array_equal(ann.loss_trace, dml0.loss_trace)
        for a, b in zip(ann.params.weights, dml0.params.weights):
            assert np.array_equal(a, b)

    def test_deterministic_given_arguments(self):
        p = get_problem("lognormal_moment_1d")
        ds = _toy_dataset(p, 256)
        cfg = TrainConfig(mode="dml", seed=4, epochs=5, batch_size=64, hidden=(8, 8))
        m1 = train(p, ds, cfg)
        m2 = train(p, ds, cfg)
        assert np.array_equal(m1.loss_trace, m2.loss_trace)
        for a, b in zip(m1.params.weights, m2.params.weights):
            assert np.array_equal(a, b)

    def test_linear_map_sanity_fit(self):
        # noiseless labels from y = 2x + 1 (gradient 2) are fit to < 1e-6 MSE
        p = get_problem("cos_toy")
        n = 4096
        x = np.linspace(0.01, np.pi, n)[:, None]
        ds = Dataset(x, 2.0 * x + 1.0, np.full((n, 1, 1), 2.0))
        cfg = TrainConfig(mode="dml", seed=1, epochs=128, batch_size=512)
        model = train(p, ds, cfg)
        grid = np.linspace(0.05, 3.0, 200)[:, None]
        mse = float(np.mean((model.predict(grid) - (2.0 * grid + 1.0)) ** 2))
        assert mse < 1e-6

    def test_loss_trace_finite_and_sized(self):
        p = get_problem("elliptic")
        ds = _toy_dataset(p, 200)
        cfg = TrainConfig(mode="dml", seed=2, epochs=3, batch_size=64, hidden=(8,))
        model = train(p, ds, cfg)
        assert model.loss_trace.shape == (3 * 4,)  # ceil(200/64) = 4 steps/epoch
        assert np.all(np.isfinite(model.loss_trace))

    def test_batch_larger_than_dataset_rejected(self):
        p = get_problem("cos_toy")
        ds = _toy_dataset(p, 100)
        with pytest.raises(ValueError):
            train(p, ds, TrainConfig(batch_size=128))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(mode="sgd")
        with pytest.raises(ValueError):
            TrainConfig(lr_start=1e-5, lr_end=1e-2)


class TestTrainedModel:
    def test_save_load_predict_identical(self, tmp_path):
        p = get_problem("chi2_cdf_2d")
        ds = _toy_dataset(p, 300)
        cfg = TrainConfig(mode="dml", seed=6, epochs=4, batch_size=64, hidden=(8, 8))
        model = train(p, ds, cfg)
        path = str(tmp_path / "m.txt")
        model.save(path)
        loaded = TrainedModel.load(path)
        x = sampling.sample_inputs(p, sampling.RngState(1, 2), 50)
        assert np.array_equal(model.predict(x), loaded.predict(x))
        assert loaded.problem_id == "chi2_cdf_2d"
        assert loaded.config.mode == "dml"

    def test_predict_with_jacobian_shapes(self):
        p = get_problem("elliptic")
        ds = _toy_dataset(p, 200)
        cfg = TrainConfig(mode="dml", seed=3, epochs=2, batch_size=64, hidden=(8,))
        model = train(p, ds, cfg)
        x = sampling.sample_inputs(p, sampling.RngState(4, 4), 10)
        y, jac = model.predict_with_jacobian(x)
        assert y.shape == (10, 1) and jac.shape == (10, 1, 2)
        # jacobian is in raw units: finite differences of predict agree
        h = 1e-6
        up = x.copy()
        up[:, 0] += h
        dn = x.copy()
        dn[:, 0] -= h
        fd = (model.predict(up) - model.predict(dn)) / (2 * h)
        assert np.abs(fd[:, 0] - jac[:, 0, 0]).max() <= 1e-5 * max(1.0, np.abs(jac).max())

    def test_train_fresh_stream_separation(self):
        m1 = train_fresh("cos_toy", 128, TrainConfig(mode="ann", seed=0, epochs=2,
                                                     batch_size=64, hidden=(8,)), tag=(0, "a"))
        m2 = train_fresh("cos_toy", 128, TrainConfig(mode="ann", seed=0, epochs=2,
                                                     batch_size=64, hidden=(8,)), tag=(1, "a"))
        assert not np.array_equal(m1.params.weights[0], m2.params.weights[0])
