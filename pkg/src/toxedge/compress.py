"""Int8 post-training quantization, magnitude pruning, layer truncation.

Weights quantize symmetrically per output channel; activations quantize
dynamically per tensor with an affine scheme at matmul time. Pruned models
keep dense storage on purpose: zeroing weights changes neither file size
nor the dense execution path, which is exactly the null result the
benchmark is meant to reproduce.
"""

from __future__ import annotations

import logging

import numpy as np

from .checkpoint import (
    AFFINE_PER_TENSOR,
    SYMMETRIC_PER_CHANNEL,
    Checkpoint,
    QuantParams,
    TensorEntry,
    derive,
)
from .config import ModelConfig, expected_tensors
from .errors import ConfigError, ParameterError, QuantSchemeError, ShapeError
from .memtrack import track

log = logging.getLogger(__name__)

SCALE_FLOOR = 1e-12


def quantize_tensor(t: np.ndarray, scheme: str = SYMMETRIC_PER_CHANNEL):
    """Symmetric per-output-channel int8: ``scale_c = max|w_c| / 127``.

    Returns ``(q, params)`` with ``q = clamp(round(w / scale), -127, 127)``.
    All-zero channels get the scale floor so dequantization stays exact.
    """
    t = np.asarray(t, dtype=np.float32)
    if scheme != SYMMETRIC_PER_CHANNEL:
        raise QuantSchemeError(f"weights quantize with {SYMMETRIC_PER_CHANNEL!r}, got {scheme!r}")
    if t.ndim != 2:
        raise QuantSchemeError(f"per-channel scheme needs a 2-D tensor, got shape {t.shape}")
    scales = np.maximum(np.abs(t).max(axis=1) / 127.0, SCALE_FLOOR).astype(np.float32)
    q = np.clip(np.round(t / scales[:, None]), -127, 127).astype(np.int8)
    return track(q), QuantParams(SYMMETRIC_PER_CHANNEL, scales)


def dequantize(q: np.ndarray, params: QuantParams) -> np.ndarray:
    """Inverse map ``(q - zero_point) * scale``."""
    qf = q.astype(np.float32)
    if params.scheme == SYMMETRIC_PER_CHANNEL:
        shape = [1] * qf.ndim
        shape[params.axis] = -1
        return track(qf * params.scales.reshape(shape))
    if params.scheme == AFFINE_PER_TENSOR:
        zp = np.asarray(params.zero_points, dtype=np.float32)
        return track((qf - zp) * params.scales)
    raise QuantSchemeError(f"unknown scheme {params.scheme!r}")


def quantize_activations(x: np.ndarray):
    """Dynamic per-tensor affine int8 for activations.

    ``scale = (max - min) / 255`` and ``zero_point = round(-128 - min/scale)``;
    the range is widened to include 0 so the zero point stays in [-128, 127].
    """
    x = np.asarray(x, dtype=np.float32)
    rmin = min(float(x.min()), 0.0)
    rmax = max(float(x.max()), 0.0)
    scale = max((rmax - rmin) / 255.0, SCALE_FLOOR)
    zp = int(round(-128.0 - rmin / scale))
    zp = max(-128, min(127, zp))
    q = np.clip(np.round(x / scale) + zp, -128, 127).astype(np.int8)
    return track(q), QuantParams(AFFINE_PER_TENSOR, np.float32(scale), zp)


def quantized_linear(
    x: np.ndarray,
    wq: np.ndarray,
    params: QuantParams,
    bias: np.ndarray,
) -> np.ndarray:
    """``x @ dequant(wq).T + bias`` executed on the int8 path.

    The input is dynamically quantized, the integer product is accumulated
    exactly (all intermediate sums fit 32 bits for every supported layer
    width), and the result is rescaled to float32.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or wq.ndim != 2:
        raise ShapeError(f"quantized_linear expects 2-D operands, got {x.shape} and {wq.shape}")
    if x.shape[1] != wq.shape[1]:
        raise ShapeError(f"quantized_linear inner dimensions differ: {x.shape} vs {wq.shape}")
    xq, xparams = quantize_activations(x)
    shifted = track(xq.astype(np.int32) - int(np.asarray(xparams.zero_points)))
    # Integer matmul via float64 is exact here: |acc| <= 255*127*k << 2^53.
    acc = track(track(shifted.astype(np.float64)) @ track(wq.astype(np.float64).T))
    y = acc * (float(xparams.scales) * params.scales.astype(np.float64)[None, :])
    return track(y.astype(np.float32) + np.asarray(bias, dtype=np.float32))


def _quantizable(name: str, entry: TensorEntry) -> bool:
    return name.endswith(".weight") and entry.data.ndim >= 2


def quantize_model(ckpt: Checkpoint) -> Checkpoint:
    """Store every 2-D-or-higher weight as int8 + per-channel scales.

    Conv kernels are reshaped per output channel; biases and layer-norm
    parameters stay float32. Quantizing an already-quantized checkpoint is
    a no-op (logged notice).
    """
    eligible = [n for n, e in ckpt.tensors.items() if _quantizable(n, e) or e.dtype == "int8"]
    if eligible and all(ckpt.tensors[n].dtype == "int8" for n in eligible):
        log.info("checkpoint is already quantized; returning it unchanged")
        return ckpt
    new_tensors: dict[str, TensorEntry] = {}
    for name, entry in ckpt.tensors.items():
        if entry.dtype == "int8" or not _quantizable(name, entry):
            continue
        w2 = entry.data.reshape(entry.data.shape[0], -1)
        q, params = quantize_tensor(w2)
        new_tensors[name] = TensorEntry("int8", q.reshape(entry.data.shape), params)
    return derive(ckpt, new_tensors, "quantize(int8)")


def prune_magnitude(ckpt: Checkpoint, sparsity: float) -> Checkpoint:
    """Zero the ``floor(sparsity * n)`` smallest-magnitude entries per weight.

    Ties break toward lower flat indices. Storage stays dense, so file size
    and the execution path are unchanged.
    """
    if not 0.0 <= sparsity < 1.0:
        raise ParameterError(f"sparsity must be in [0, 1), got {sparsity}")
    new_tensors: dict[str, TensorEntry] = {}
    for name, entry in ckpt.tensors.items():
        if not name.endswith(".weight"):
            continue
        if entry.dtype != "f32":
            raise ConfigError(f"pruning requires an f32 checkpoint; {name} is {entry.dtype}")
        flat = entry.data.reshape(-1)
        k = int(np.floor(sparsity * flat.size))
        if k == 0:
            continue
        order = np.argsort(np.abs(flat), kind="stable")
        pruned = flat.copy()
        pruned[order[:k]] = 0.0
        new_tensors[name] = TensorEntry("f32", track(pruned.reshape(entry.data.shape)))
    return derive(ckpt, new_tensors, f"prune(sparsity={sparsity})")


def make_student(teacher: Checkpoint, student_layers: int) -> Checkpoint:
    """Truncate the transformer stack: copy the conv stack, the input
    projection, the first ``student_layers`` blocks, and both heads."""
    t_layers = teacher.config.num_layers
    if not 1 <= student_layers < t_layers:
        raise ConfigError(
            f"student_layers must be in [1, {t_layers - 1}], got {student_layers}"
        )
    cfg = ModelConfig(
        conv_layers=teacher.config.conv_layers,
        hidden_dim=teacher.config.hidden_dim,
        num_layers=student_layers,
        num_heads=teacher.config.num_heads,
        ffn_dim=teacher.config.ffn_dim,
        vocab_size=teacher.config.vocab_size,
        num_classes=teacher.config.num_classes,
        preset=teacher.config.preset,
    )
    kept = {name for name, _shape in expected_tensors(cfg)}
    new_tensors = {name: teacher.tensors[name] for name in kept}
    return derive(
        teacher, new_tensors, f"student(layers={student_layers})", config=cfg
    )
