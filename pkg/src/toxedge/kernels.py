"""Deterministic dense math kernels used by every other module.

Tensors are plain ``numpy.ndarray`` values: float32, row-major. Reductions
(matmul, mean, variance) accumulate in float64 so results are stable across
platforms; probability outputs (:func:`softmax_t`) are returned in float64
because downstream contracts hold them to 1e-9 normalization.

Every kernel output is checked finite — NaN/Inf is a contract violation —
and registered with :mod:`toxedge.memtrack` for peak-RAM accounting. All
kernels are pure functions; they are safe to call concurrently.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import ContractError, InputTooShortError, ParameterError, ShapeError
from .memtrack import track


def _f32(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float32)


def _finish(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{op} produced non-finite values")
    return track(arr)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of a 2-D ``[m, k]`` with a 2-D ``[k, n]``."""
    a = _f32(a)
    b = _f32(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    a64 = track(a.astype(np.float64))
    b64 = track(b.astype(np.float64))
    c = track(a64 @ b64).astype(np.float32)
    return _finish(c, "matmul")


def softmax_t(logits, temperature: float = 1.0, axis: int = -1) -> np.ndarray:
    """Temperature softmax ``softmax(logits / T)`` along ``axis``.

    Max-subtraction keeps it overflow-free; output is float64 so rows sum
    to 1 within 1e-9. T > 1 flattens the distribution toward uniform.
    """
    if not temperature > 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / float(temperature)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / np.sum(e, axis=axis, keepdims=True)
    return _finish(out, "softmax_t")


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    """Numerically stable ``log(softmax(logits))`` in float64."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=axis, keepdims=True)
    out = z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))
    return _finish(out, "log_softmax")


def layer_norm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """Normalize the last axis to zero mean / unit variance, then scale-shift."""
    if not eps > 0:
        raise ParameterError(f"eps must be > 0, got {eps}")
    x = _f32(x)
    gamma = _f32(gamma)
    beta = _f32(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm parameters must have shape ({d},), "
            f"got gamma {gamma.shape}, beta {beta.shape}"
        )
    x64 = x.astype(np.float64)
    mean = x64.mean(axis=-1, keepdims=True)
    var = x64.var(axis=-1, keepdims=True)
    out = ((x64 - mean) / np.sqrt(var + eps) * gamma + beta).astype(np.float32)
    return _finish(out, "layer_norm")


def gelu(x) -> np.ndarray:
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF via erf."""
    x64 = np.asarray(x, dtype=np.float64)
    out = (x64 * 0.5 * (1.0 + erf(x64 / np.sqrt(2.0)))).astype(np.float32)
    return _finish(out, "gelu")


def conv_output_length(length: int, kernel: int, stride: int) -> int:
    """Valid (no padding) 1-D convolution output length."""
    return (length - kernel) // stride + 1


def conv1d(
    x: np.ndarray,
    w: np.ndarray,
    bias: np.ndarray,
    stride: int,
) -> np.ndarray:
    """Valid cross-correlation of ``x [c_in, L]`` with ``w [c_out, c_in, k]``."""
    x = _f32(x)
    w = _f32(w)
    bias = _f32(bias)
    if x.ndim != 2 or w.ndim != 3:
        raise ShapeError(f"conv1d expects x [c_in, L] and w [c_out, c_in, k], got {x.shape}, {w.shape}")
    c_in, length = x.shape
    c_out, w_cin, k = w.shape
    if w_cin != c_in:
        raise ShapeError(f"conv1d channel mismatch: x has {c_in}, w expects {w_cin}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv1d bias must have shape ({c_out},), got {bias.shape}")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    if k > length:
        raise InputTooShortError(f"conv1d input length {length} is shorter than kernel {k}")
    cols = im2col(x, k, stride)
    y = matmul(cols, w.reshape(c_out, c_in * k).T) + bias
    return _finish(np.ascontiguousarray(y.T), "conv1d")


def im2col(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Unfold ``x [c_in, L]`` into convolution columns ``[L_out, c_in * k]``."""
    c_in, length = x.shape
    l_out = conv_output_length(length, kernel, stride)
    idx = np.arange(l_out)[:, None] * stride + np.arange(kernel)[None, :]
    cols = x[:, idx]                      # [c_in, L_out, k]
    return track(np.ascontiguousarray(cols.transpose(1, 0, 2).reshape(l_out, c_in * kernel)))


def mean_pool(frames: np.ndarray) -> np.ndarray:
    """Column-wise arithmetic mean over the time axis of ``[T, d]``."""
    frames = _f32(frames)
    if frames.ndim != 2:
        raise ShapeError(f"mean_pool expects [T, d], got {frames.shape}")
    if frames.shape[0] == 0:
        raise ParameterError("mean_pool received an empty frame sequence")
    out = frames.astype(np.float64).mean(axis=0).astype(np.float32)
    return _finish(out, "mean_pool")
