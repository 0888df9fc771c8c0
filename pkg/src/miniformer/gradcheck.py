"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def numerical_grad(fn: Callable[[], Tensor], x: Tensor, step: float = 1e-5) -> np.ndarray:
    """d fn() / d x by central differences, perturbing ``x.data`` in place."""
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn().item()
            flat[i] = orig - step
            down = fn().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a| + |n|, floor), elementwise, then the max.

    The floor matters for entries whose true gradient is zero (a key bias under
    softmax, say): both sides are then rounding noise near 1e-11 and a bare
    ratio is meaningless. Below the floor the check is absolute, |a - n| < tol * floor.
    """
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(
    fn: Callable[[], Tensor], inputs: Sequence[Tensor], step: float = 1e-5
) -> dict[int, float]:
    """Compare backprop against central differences for every input.

    Returns the relative error per input position. ``fn`` must rebuild the
    graph on every call and return a scalar.
    """
    for t in inputs:
        t.grad = None
    fn().backward()
    errors = {}
    for k, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        errors[k] = relative_error(analytic, numerical_grad(fn, t, step))
    return errors
