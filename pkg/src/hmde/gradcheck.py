"""Central finite-difference gradient checks for the autodiff engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_gradient(
    fn: Callable[..., Tensor], inputs: Sequence[Tensor], index: int, probe: np.ndarray, step: float = 1e-3
) -> np.ndarray:
    """d/d inputs[index] of sum(fn(*inputs) * probe), by central differences in float64."""
    x = inputs[index]
    original = x.data.copy()
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.data.reshape(-1)
    for k in range(flat.size):
        values = []
        for sign in (1.0, -1.0):
            bumped = original.copy().reshape(-1)
            bumped[k] = np.float32(original.reshape(-1)[k] + sign * step)
            x.data = bumped.reshape(original.shape)
            out = fn(*inputs).data.astype(np.float64)
            values.append(float((out * probe).sum()))
        actual_step = float(np.float32(original.reshape(-1)[k] + step)) - float(
            np.float32(original.reshape(-1)[k] - step)
        )
        grad.reshape(-1)[k] = (values[0] - values[1]) / actual_step
    x.data = original
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-8)
    return float(np.linalg.norm(a - n) / scale)


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    seed: int = 0,
    step: float = 1e-3,
) -> list[float]:
    """Relative error of the analytic gradient of every grad-requiring input.

    The output is reduced with a fixed random probe so every output element
    contributes to the checked scalar. Errors are measured against the norm
    of the whole gradient (all inputs together): an input whose own gradient
    is vanishingly small, such as a saturated softmax branch, would otherwise
    be judged on float32 rounding noise alone.
    """
    for x in inputs:
        x.grad = None
    out = fn(*inputs)
    probe = np.random.default_rng(seed).normal(size=out.shape)
    loss = (out * Tensor(probe)).sum()
    loss.backward()
    pairs = []
    for i, x in enumerate(inputs):
        if not x.requires_grad:
            continue
        analytic = np.zeros(x.shape) if x.grad is None else x.grad.astype(np.float64)
        pairs.append((analytic, numerical_gradient(fn, inputs, i, probe, step)))
    scale = max(
        np.sqrt(sum(np.sum(a * a) for a, _ in pairs)),
        np.sqrt(sum(np.sum(n * n) for _, n in pairs)),
        1e-8,
    )
    return [float(np.linalg.norm((a - n).ravel()) / scale) for a, n in pairs]
