"""Adam training with a quadratically decaying learning rate.

A run standardizes the dataset, initializes the network from a seeded
stream, and iterates Adam over seeded per-epoch shuffles of mini-batches
(the last partial batch is kept).  The learning rate follows

    lr(t) = lr_end + (lr_start - lr_end) (1 - t/T)^2

on the global step count T = epochs * ceil(J / batch).  ``mode`` selects
value-only training (ann, omega = 0) or combined value + differential
training (dml, omega = 1/q), so an ann run and a dml run with omega
forced to 0 follow bit-identical trajectories given the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network, preprocessing, sampling
from .network import LossWeights, ModelParams, ParamGrads
from .preprocessing import Scaler
from .problems import Dataset, ProblemSpec, generate_dataset, get_problem


class TrainingError(RuntimeError):
    """Training aborted (non-finite gradient or invalid configuration)."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 128
    batch_size: int = 1024
    lr_start: float = 1e-2
    lr_end: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    mode: str = "dml"
    omega: float | None = None  # None: 0 for ann, 1/q for dml
    hidden: tuple = (64, 64, 64, 64)
    activation: str = "softplus"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr_end > self.lr_start:
            raise ValueError("lr_end must not exceed lr_start")
        if self.mode not in ("ann", "dml"):
            raise ValueError(f"mode must be 'ann' or 'dml', got {self.mode!r}")


def lr_schedule(step: int, total: int, config: TrainConfig) -> float:
    """Quadratic decay from lr_start at step 0 to lr_end at step = total."""
    if total < 1 or not 0 <= step <= total:
        raise ValueError("lr_schedule requires 0 <= step <= total, total >= 1")
    frac = 1.0 - step / total
    return config.lr_end + (config.lr_start - config.lr_end) * frac * frac


@dataclass
class AdamState:
    """First/second moment accumulators per parameter array and step count."""

    m_w: list
    v_w: list
    m_b: list
    v_b: list
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(
            m_w=[np.zeros_like(w) for w in params.weights],
            v_w=[np.zeros_like(w) for w in params.weights],
            m_b=[np.zeros_like(b) for b in params.biases],
            v_b=[np.zeros_like(b) for b in params.biases],
        )


def adam_step(params: ModelParams, grads: ParamGrads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, in place; returns (params, state).

    Aborts with diagnostics when any gradient entry is non-finite.
    """
    for i, g in enumerate(grads.weights + grads.biases):
        if not np.all(np.isfinite(g)):
            layer = i % len(grads.weights) + 1
            kind = "weights" if i < len(grads.weights) else "biases"
            raise TrainingError(
                f"non-finite gradient in layer {layer} {kind} at adam step {state.step + 1}")
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params.weights + params.biases,
                          grads.weights + grads.biases,
                          state.m_w + state.m_b,
                          state.v_w + state.v_b):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


@dataclass
class TrainedModel:
    """Network parameters plus everything needed to predict in raw units."""

    params: ModelParams
    scaler: Scaler
    loss_weights: LossWeights
    config: TrainConfig
    problem_id: str
    loss_trace: np.ndarray

    def predict(self, inputs) -> np.ndarray:
        """Raw-unit predictions for raw-unit inputs ((n, d) or (d,))."""
        xs = preprocessing.transform_inputs(inputs, self.scaler)
        ys = network.forward(self.params, xs)
        out, _ = preprocessing.invert_prediction(ys, None, self.scaler)
        return out

    def predict_with_jacobian(self, inputs):
        """Raw-unit predictions and input Jacobians."""
        xs = preprocessing.transform_inputs(inputs, self.scaler)
        ys, js = network.forward_with_jacobian(self.params, xs)
        return preprocessing.invert_prediction(ys, js, self.scaler)

    def save(self, path: str) -> None:
        meta = {"problem": self.problem_id, "mode": self.config.mode,
                "epochs": str(self.config.epochs), "batch": str(self.config.batch_size)}
        network.write_model_file(path, self.params, self.scaler, self.loss_weights,
                                 self.config.seed, meta)

    @classmethod
    def load(cls, path: str) -> "TrainedModel":
        params, scaler, lw, seed, meta = network.read_model_file(path)
        cfg = TrainConfig(mode=meta.get("mode", "dml"), seed=seed,
                          epochs=int(meta.get("epochs", 128)),
                          batch_size=int(meta.get("batch", 1024)),
                          hidden=tuple(params.widths[1:-1]),
                          activation=params.activation, omega=lw.omega)
        return cls(params=params, scaler=scaler, loss_weights=lw, config=cfg,
                   problem_id=meta.get("problem", ""), loss_trace=np.array([]))


def train(problem: ProblemSpec, dataset: Dataset, config: TrainConfig,
          init_stream: int | None = None, shuffle_stream: int | None = None) -> TrainedModel:
    """Train one surrogate on a labeled dataset; deterministic per arguments."""
    n = len(dataset)
    if config.batch_size > n:
        raise ValueError(f"batch_size {config.batch_size} exceeds dataset size {n}")
    lw = LossWeights.for_mode(config.mode, problem.input_dim, config.omega)
    scaler = preprocessing.fit(dataset)
    std = preprocessing.transform(dataset, scaler)

    widths = (problem.input_dim, *config.hidden, problem.output_dim)
    if init_stream is None:
        init_stream = sampling.substream("init", problem.id)
    if shuffle_stream is None:
        shuffle_stream = sampling.substream("shuffle", problem.id)
    params = network.init(widths, config.activation, seed=config.seed, stream=init_stream)
    shuffler = sampling.RngState(config.seed, shuffle_stream)

    steps_per_epoch = -(-n // config.batch_size)
    total = config.epochs * steps_per_epoch
    state = AdamState.for_params(params)
    trace = np.empty(total)
    t = 0
    for _ in range(config.epochs):
        perm = sampling.permutation(shuffler, n)
        xs, ys, gs = std.inputs[perm], std.labels[perm], std.grads[perm]
        for s in range(0, n, config.batch_size):
            sl = slice(s, s + config.batch_size)
            batch = (xs[sl], ys[sl], gs[sl])
            loss, grads = network.loss_and_gradient(params, batch, lw)
            adam_step(params, grads, state, lr_schedule(t, total, config),
                      config.beta1, config.beta2, config.eps)
            trace[t] = loss
            t += 1
    return TrainedModel(params=params, scaler=scaler, loss_weights=lw, config=config,
                        problem_id=problem.id, loss_trace=trace)


def train_fresh(problem_id: str, size: int, config: TrainConfig,
                data_seed: int | None = None, tag=()) -> TrainedModel:
    """Generate a dataset on a dedicated stream and train on it.

    ``tag`` extends the stream derivation so convergence-study cells
    (size, trial, mode) draw disjoint data.
    """
    problem = get_problem(problem_id)
    seed = config.seed if data_seed is None else data_seed
    data_state = sampling.RngState(seed, sampling.substream("train-data", problem_id, size, *tag))
    dataset = generate_dataset(problem, size, data_state)
    return train(problem, dataset, config,
                 init_stream=sampling.substream("init", problem_id, size, *tag),
                 shuffle_stream=sampling.substream("shuffle", problem_id, size, *tag))
