"""Feed-forward network with an exact input-Jacobian pass and exact weight
gradients of the combined value + differential loss.

The forward map is the usual affine/activation chain with an identity
output layer.  The Jacobian of the outputs with respect to the inputs is
accumulated by a second sweep over the same graph (the twin pass), and the
weight gradient of the combined loss is obtained by reverse-mode
differentiation of the composed graph (forward chain plus twin sweep),
hand-derived below.  Everything is plain float64 numpy; correctness is
pinned by finite-difference contracts in the tests.

Derivative bookkeeping, with a_0 = x, z_i = a_{i-1} W_i + b_i,
a_i = act(z_i) and y = a_H W_{H+1} + b_{H+1}:

* twin sweep (forward accumulation from the input side, which scales with
  the input count rather than the output count), U_i[c, j] := da_i[j] / dx_c
  stored as (batch, d, n_i) with U_0 the identity:
    V_i = U_{i-1} W_i;   U_i = V_i * act'(z_i);   Jt = U_H W_{H+1},
  so Jt[c, k] = dy_k / dx_c is the (transposed) input Jacobian.
* reverse of the twin sweep given Jtbar = dLoss/dJt:
    dW_{H+1} += U_H^T Jtbar             (contracted over batch and d)
    Ubar_H    = Jtbar W_{H+1}^T
  then walking i = H..1:
    Vbar_i  = Ubar_i * act'(z_i)
    pbar_i  = sum_c Ubar_i * V_i        (adjoint of act'(z_i))
    dW_i   += U_{i-1}^T Vbar_i          (a plain batch sum for i = 1)
    Ubar_{i-1} = Vbar_i W_i^T
  The pbar terms re-enter the forward chain as act''(z_i) * pbar_i added
  to the usual z-adjoints, which carries the curvature of the activation
  into the weight gradient exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import sampling
from .fileio import atomic_write_text, fmt
from .preprocessing import Scaler


# ---------------------------------------------------------------------------
# activations: C^2 elementwise maps.  Each entry evaluates value, slope and
# curvature in one fused pass (they share the expensive transcendental), and
# the ACTIVATIONS registry exposes the three maps separately for contracts
# and finite-difference tests.

def _softplus_fused(z):
    e = np.exp(-np.abs(z))
    a = np.maximum(z, 0.0) + np.log1p(e)
    t = 1.0 / (1.0 + e)
    # sigmoid(z), stable on both tails: t for z >= 0, 1 - t below
    p = 0.5 + np.copysign(t - 0.5, z)
    return a, p, p * (1.0 - p)


def _tanh_fused(z):
    t = np.tanh(z)
    p = 1.0 - t * t
    return t, p, -2.0 * t * p


def _identity_fused(z):
    return z, np.ones_like(z), np.zeros_like(z)


_FUSED: dict[str, Callable] = {
    "softplus": _softplus_fused,
    "tanh": _tanh_fused,
    "identity": _identity_fused,
}

ACTIVATIONS: dict[str, tuple[Callable, Callable, Callable]] = {
    name: (
        lambda z, _f=fn: _f(np.asarray(z, float))[0],
        lambda z, _f=fn: _f(np.asarray(z, float))[1],
        lambda z, _f=fn: _f(np.asarray(z, float))[2],
    )
    for name, fn in _FUSED.items()
}


@dataclass(frozen=True)
class ModelParams:
    """Layer widths, weight matrices (fan_in x fan_out), biases, activation id."""

    widths: tuple
    activation: str
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[i], self.widths[i + 1]) or b.shape != (self.widths[i + 1],):
                raise ValueError("parameter shapes do not chain with widths")

    @property
    def n_weights(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights of the combined loss: vartheta = 1 / (1 + omega q)."""

    vartheta: float
    omega: float
    q: int

    def __post_init__(self):
        if self.omega < 0 or self.q < 1:
            raise ValueError("loss weights require omega >= 0 and q >= 1")
        if abs(self.vartheta - 1.0 / (1.0 + self.omega * self.q)) > 1e-12:
            raise ValueError("vartheta must equal 1 / (1 + omega q)")

    @classmethod
    def from_omega(cls, omega: float, q: int) -> "LossWeights":
        return cls(vartheta=1.0 / (1.0 + omega * q), omega=omega, q=q)

    @classmethod
    def for_mode(cls, mode: str, q: int, omega: float | None = None) -> "LossWeights":
        """ann trains on values only (omega = 0); dml defaults to omega = 1/q,
        which weights the value and differential terms equally."""
        if mode not in ("ann", "dml"):
            raise ValueError(f"mode must be 'ann' or 'dml', got {mode!r}")
        if omega is None:
            omega = 0.0 if mode == "ann" else 1.0 / q
        return cls.from_omega(omega, q)


def init(widths, activation: str = "softplus", seed: int = 0, stream: int | None = None) -> ModelParams:
    """Fan-in scaled symmetric uniform weights (variance 1/fan_in), zero biases."""
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError("widths must list input, hidden..., output sizes >= 1")
    if stream is None:
        stream = sampling.substream("network-init")
    state = sampling.RngState(seed, stream)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        half = np.sqrt(3.0 / fan_in)
        w = sampling.uniform(state, -half, half, fan_in * fan_out).reshape(fan_in, fan_out)
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return ModelParams(widths=widths, activation=activation, weights=weights, biases=biases)


# ---------------------------------------------------------------------------
# forward / twin passes

def _forward_pass(params: ModelParams, x: np.ndarray):
    """Affine/activation chain with an identity output layer.

    Returns (y, activations per level, slopes act'(z), curvatures act''(z)).
    """
    fused = _FUSED[params.activation]
    acts = [x]
    ps, qs = [], []
    n_layers = len(params.weights)
    for i in range(n_layers - 1):
        z = acts[-1] @ params.weights[i] + params.biases[i]
        a, p, q = fused(z)
        ps.append(p)
        qs.append(q)
        acts.append(a)
    y = acts[-1] @ params.weights[-1] + params.biases[-1]
    return y, acts, ps, qs


def _as_batch(x, d):
    x = np.asarray(x, float)
    single = x.ndim == 1
    x = x.reshape(1, -1) if single else x
    if x.shape[1] != d:
        raise ValueError(f"input has {x.shape[1]} coordinates, expected {d}")
    return x, single


def forward(params: ModelParams, x):
    """Network output; accepts a single input vector or a (n, d) batch."""
    xb, single = _as_batch(x, params.widths[0])
    y, _, _, _ = _forward_pass(params, xb)
    return y[0] if single else y


def _flat_matmul(t: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(B, d, n) x (n, m) -> (B, d, m) as a single flat gemm."""
    B, D, n = t.shape
    return np.ascontiguousarray(t).reshape(B * D, n).dot(w).reshape(B, D, -1)


def _twin_forward(params: ModelParams, ps, batch: int):
    """Forward-accumulation sweep of input derivatives.

    Returns (jt, us, vs): jt (B, d, K) with jt[b, c, k] = dy_k/dx_c; the
    per-level activation derivatives us[i] = da_i/dx (us[0] is the implicit
    identity and stored as None) and pre-activation derivatives vs[i].
    """
    H = len(params.weights) - 1
    d = params.widths[0]
    us = [None] * (H + 1)
    vs = [None] * max(H, 0)
    for i in range(H):
        if i == 0:
            v = np.broadcast_to(params.weights[0], (batch, d, params.widths[1]))
        else:
            v = _flat_matmul(us[i], params.weights[i])
        vs[i] = v
        us[i + 1] = v * ps[i][:, None, :]
    if H == 0:
        jt = np.broadcast_to(params.weights[0], (batch, d, params.widths[-1]))
    else:
        jt = _flat_matmul(us[H], params.weights[H])
    return jt, us, vs


def input_jacobian(params: ModelParams, x):
    """Exact Jacobian d output / d input, shape (K, d) (or (n, K, d) batched)."""
    xb, single = _as_batch(x, params.widths[0])
    _, _, ps, _ = _forward_pass(params, xb)
    jt, _, _ = _twin_forward(params, ps, xb.shape[0])
    jac = jt.transpose(0, 2, 1)
    return jac[0] if single else jac


def forward_with_jacobian(params: ModelParams, x):
    """Output and input Jacobian in one shared pass."""
    xb, single = _as_batch(x, params.widths[0])
    y, _, ps, _ = _forward_pass(params, xb)
    jt, _, _ = _twin_forward(params, ps, xb.shape[0])
    jac = jt.transpose(0, 2, 1)
    return (y[0], jac[0]) if single else (y, jac)


# ---------------------------------------------------------------------------
# combined loss and its exact weight gradient

@dataclass
class ParamGrads:
    """Gradient container mirroring ModelParams layer lists."""

    weights: list
    biases: list


def loss_and_gradient(params: ModelParams, batch, lw: LossWeights):
    """Combined loss on a standardized batch and its exact weight gradient.

    loss = vartheta * mean_{b,k} (forward - y)^2
         + (1 - vartheta) * mean_b ||jacobian - g||_F^2 / K

    ``batch`` is (inputs (B, d), labels (B, K), grads (B, K, d)); the grads
    block is ignored when vartheta == 1, in which case the twin sweep is
    skipped entirely and the computation reduces to classical value-only
    training.
    """
    if hasattr(batch, "inputs"):
        x, yt, gt = batch.inputs, batch.labels, batch.grads
    else:
        x, yt, gt = batch
    x = np.asarray(x, float)
    yt = np.asarray(yt, float)
    B = x.shape[0]
    if B == 0:
        raise ValueError("batch must be nonempty")
    K = params.widths[-1]
    H = len(params.weights) - 1
    y, acts, ps, qs = _forward_pass(params, x)
    rv = y - yt
    norm = 1.0 / (B * K)

    gw = [np.zeros_like(w) for w in params.weights]
    gb = [np.zeros_like(b) for b in params.biases]

    if lw.vartheta == 1.0:
        loss = norm * float(np.sum(rv * rv))
        zbar_twin = None
    else:
        gt = np.asarray(gt, float)
        d = params.widths[0]
        jt, us, vs = _twin_forward(params, ps, B)
        rj = jt - gt.transpose(0, 2, 1)
        loss = lw.vartheta * norm * float(np.sum(rv * rv)) \
            + (1.0 - lw.vartheta) * norm * float(np.sum(rj * rj))

        # reverse through the twin sweep
        jtbar = (2.0 * (1.0 - lw.vartheta) * norm) * rj
        zbar_twin = [None] * H
        if H == 0:
            gw[0] += jtbar.sum(axis=0)
        else:
            gw[H] += us[H].reshape(B * d, -1).T @ jtbar.reshape(B * d, K)
            ubar = _flat_matmul(jtbar, params.weights[H].T)
            for i in range(H - 1, -1, -1):
                vbar = ubar * ps[i][:, None, :]
                pbar = np.einsum("bcj,bcj->bj", ubar, vs[i])
                zbar_twin[i] = qs[i] * pbar
                if i == 0:
                    gw[0] += vbar.sum(axis=0)
                else:
                    gw[i] += us[i].reshape(B * d, -1).T @ vbar.reshape(B * d, -1)
                    ubar = _flat_matmul(vbar, params.weights[i].T)

    # reverse through the forward chain, injecting the twin z-adjoints
    ybar = (2.0 * lw.vartheta * norm) * rv
    gw[H] += acts[H].T @ ybar
    gb[H] += ybar.sum(axis=0)
    abar = ybar @ params.weights[H].T
    for i in range(H, 0, -1):
        zbar = abar * ps[i - 1]
        if zbar_twin is not None:
            zbar = zbar + zbar_twin[i - 1]
        gw[i - 1] += acts[i - 1].T @ zbar
        gb[i - 1] += zbar.sum(axis=0)
        if i > 1:
            abar = zbar @ params.weights[i - 1].T
    return loss, ParamGrads(weights=gw, biases=gb)


# ---------------------------------------------------------------------------
# model file format (versioned, human readable, byte stable)

_MODEL_MAGIC = "diffint-model v1"


def write_model_file(path: str, params: ModelParams, scaler: Scaler, lw: LossWeights,
                     seed: int, meta: dict | None = None) -> None:
    """Serialize a trained model: widths, activation, loss weights, scaler
    statistics, seed and all weights/biases row-major at full precision."""
    lines = [_MODEL_MAGIC]
    lines.append("widths: " + " ".join(str(w) for w in params.widths))
    lines.append(f"activation: {params.activation}")
    lines.append(f"omega: {fmt(lw.omega)}")
    lines.append(f"vartheta: {fmt(lw.vartheta)}")
    lines.append(f"q: {lw.q}")
    lines.append(f"seed: {seed}")
    for key in sorted(meta or {}):
        lines.append(f"meta.{key}: {(meta or {})[key]}")
    for name, arr in (("input_mean", scaler.in_mean), ("input_std", scaler.in_std),
                      ("label_mean", scaler.out_mean), ("label_std", scaler.out_std)):
        lines.append(f"{name}: " + " ".join(fmt(v) for v in arr))
    for i, (w, b) in enumerate(zip(params.weights, params.biases), start=1):
        lines.append(f"W{i}: " + " ".join(fmt(v) for v in w.ravel()))
        lines.append(f"b{i}: " + " ".join(fmt(v) for v in b))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_model_file(path: str):
    """Parse a model file; returns (params, scaler, loss_weights, seed, meta)."""
    with open(path, "r") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _MODEL_MAGIC:
        raise ValueError(f"{path!r} is not a {_MODEL_MAGIC} file")
    kv = {}
    meta = {}
    for ln in lines[1:]:
        if not ln.strip():
            continue
        key, _, val = ln.partition(": ")
        if key.startswith("meta."):
            meta[key[5:]] = val
        else:
            kv[key] = val
    widths = tuple(int(w) for w in kv["widths"].split())

    def vec(s):
        return np.array([float(v) for v in s.split()])

    scaler = Scaler(vec(kv["input_mean"]), vec(kv["input_std"]),
                    vec(kv["label_mean"]), vec(kv["label_std"]))
    weights, biases = [], []
    for i in range(1, len(widths)):
        weights.append(vec(kv[f"W{i}"]).reshape(widths[i - 1], widths[i]))
        biases.append(vec(kv[f"b{i}"]))
    params = ModelParams(widths=widths, activation=kv["activation"],
                         weights=weights, biases=biases)
    lw = LossWeights(vartheta=float(kv["vartheta"]), omega=float(kv["omega"]), q=int(kv["q"]))
    return params, scaler, lw, int(kv["seed"]), meta
