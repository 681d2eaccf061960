"""Affine standardization of inputs, labels and differentials.

Inputs and labels are shifted and scaled to zero mean and unit standard
deviation per coordinate; the differential targets pick up the chain-rule
factor sigma_x / sigma_y so that standardized gradients remain exact
derivatives of standardized labels.  Statistics are always fitted on the
training set only, and test errors are computed in raw label units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import Dataset, LabeledSample

_STD_FLOOR = 1e-12


@dataclass(frozen=True)
class Scaler:
    """Per-coordinate means and standard deviations (floored at 1e-12)."""

    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray


def fit(dataset: Dataset) -> Scaler:
    """Sample means and population standard deviations of inputs and labels."""
    if len(dataset) < 2:
        raise ValueError("fitting a scaler requires at least 2 samples")
    return Scaler(
        in_mean=dataset.inputs.mean(axis=0),
        in_std=np.maximum(dataset.inputs.std(axis=0), _STD_FLOOR),
        out_mean=dataset.labels.mean(axis=0),
        out_std=np.maximum(dataset.labels.std(axis=0), _STD_FLOOR),
    )


def _check_dims(scaler: Scaler, d: int, k: int) -> None:
    if scaler.in_mean.shape != (d,) or scaler.out_mean.shape != (k,):
        raise ValueError("sample dimensions do not match the scaler")


def transform(data, scaler: Scaler):
    """Standardize a Dataset or a single LabeledSample.

    grads pick up sigma_x[i] / sigma_y[k] per entry (chain rule through the
    affine maps on both sides).
    """
    if isinstance(data, LabeledSample):
        ds = transform(Dataset(data.inputs[None], data.labels[None], data.grads[None]), scaler)
        return LabeledSample(ds.inputs[0], ds.labels[0], ds.grads[0])
    _check_dims(scaler, data.inputs.shape[1], data.labels.shape[1])
    return Dataset(
        inputs=(data.inputs - scaler.in_mean) / scaler.in_std,
        labels=(data.labels - scaler.out_mean) / scaler.out_std,
        grads=data.grads * (scaler.in_std[None, None, :] / scaler.out_std[None, :, None]),
    )


def transform_inputs(inputs: np.ndarray, scaler: Scaler) -> np.ndarray:
    return (np.asarray(inputs, float) - scaler.in_mean) / scaler.in_std


def invert_prediction(outputs_std: np.ndarray, jacobian_std, scaler: Scaler):
    """Map standardized predictions (and optionally Jacobians) back to raw units.

    Exact inverse of :func:`transform` on the prediction side:
    y = y' sigma_y + mu_y and J[k, i] = J'[k, i] sigma_y[k] / sigma_x[i].
    """
    outputs = outputs_std * scaler.out_std + scaler.out_mean
    if jacobian_std is None:
        return outputs, None
    jac = jacobian_std * (scaler.out_std[:, None] / scaler.in_std[None, :])
    return outputs, jac
