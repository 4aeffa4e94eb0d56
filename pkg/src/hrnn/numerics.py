"""Dense float64 primitives shared by every layer.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. The helpers here
add shape checking, the activations used by the captioner, and a central
difference gradient oracle used throughout the test-suite.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimensionError

STANH_SCALE = 1.7159
STANH_SLOPE = 2.0 / 3.0

Rng = np.random.Generator


def make_rng(seed: int) -> Rng:
    # PCG64 streams are stable across platforms for a given seed.
    return np.random.Generator(np.random.PCG64(seed))


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def check_shape(x: np.ndarray, shape: tuple, name: str = "tensor") -> None:
    if tuple(x.shape) != tuple(shape):
        raise DimensionError(f"{name}: expected shape {tuple(shape)}, got {tuple(x.shape)}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix (or matrix-vector) product with an explicit shape check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_grad(x):
    return (np.asarray(x) > 0).astype(np.float64)


def stanh(x):
    """Scaled hyperbolic tangent ``1.7159 * tanh(2x/3)``."""
    return STANH_SCALE * np.tanh(STANH_SLOPE * np.asarray(x, dtype=np.float64))


def stanh_grad(x):
    t = np.tanh(STANH_SLOPE * np.asarray(x, dtype=np.float64))
    return STANH_SCALE * STANH_SLOPE * (1.0 - t * t)


ACTIVATIONS = {
    "relu": (relu, relu_grad),
    "stanh": (stanh, stanh_grad),
}


def softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise DimensionError("softmax of an empty vector")
    e = np.exp(x - np.max(x))
    return e / np.sum(e)


def log_softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x)
    return shifted - np.log(np.sum(np.exp(shifted)))


def concat(parts, axis: int = 0) -> np.ndarray:
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts], axis=axis)


def mean(x: np.ndarray, axis: int = 0) -> np.ndarray:
    return np.mean(np.asarray(x, dtype=np.float64), axis=axis)


def argmax(x: np.ndarray) -> int:
    # numpy returns the first maximal index, which gives a stable tie order.
    return int(np.argmax(x))


def gaussian(rng: Rng, shape, scale: float = 1.0) -> np.ndarray:
    return rng.standard_normal(shape) * scale


def uniform(rng: Rng, shape, low: float, high: float) -> np.ndarray:
    return rng.uniform(low, high, size=shape)


def l1_penalty(x: np.ndarray) -> float:
    return float(np.sum(np.abs(x)))


def l1_subgradient(x: np.ndarray) -> np.ndarray:
    # np.sign(0) == 0, which is the subgradient we want at the kink.
    return np.sign(x)


def l2_penalty(x: np.ndarray) -> float:
    return float(np.sum(x * x))


def l2_gradient(x: np.ndarray) -> np.ndarray:
    return 2.0 * x


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x`` is perturbed in place and restored after each coordinate, so ``f``
    may close over the very array being differentiated (useful for checking
    parameter gradients). The returned array has ``x``'s shape.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not x.flags.c_contiguous:
        raise ValueError("finite_diff_grad needs a C-contiguous array")
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Norm-wise relative error ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps tensors whose true gradient is (near) zero from reporting
    huge ratios out of finite-difference round-off.
    """
    diff = float(np.linalg.norm(np.asarray(analytic) - np.asarray(numeric)))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), floor)
    return diff / scale
