"""Shared-encoder forward path: conv frontend, transformer, two heads.

A strided 7-layer conv stack turns 16 kHz audio into ~49 frames/s of
features; an input projection plus sinusoidal positions feeds pre-norm
transformer blocks; the hidden states are shared by a mean-pool toxicity
classifier (class 1 = toxic) and a per-frame CTC projection.

Checkpoints are immutable after load, so any number of forward passes may
share one. Linear layers dispatch on tensor dtype: float32 weights run on
the BLAS path, int8 weights on the dynamic-quantization path.
"""

from __future__ import annotations

import numpy as np

from .audio import Waveform
from .checkpoint import Checkpoint, TensorEntry
from .compress import quantized_linear
from .config import ModelConfig, expected_tensors, min_input_samples
from .errors import InputTooShortError, ParameterError, ShapeError
from .kernels import gelu, im2col, layer_norm, matmul, mean_pool, softmax_t
from .memtrack import track

# Residual-free paths (conv stack, input projection) use fan-in-scaled
# init so the signal survives seven layers. Residual-path weights use
# std 0.02 at the reference width (768) and scale with 1/sqrt(d) so each
# block's contribution relative to the residual stream is width-invariant.
RESIDUAL_INIT_STD = 0.02
REFERENCE_WIDTH = 768


def _block_std(hidden_dim: int) -> float:
    return RESIDUAL_INIT_STD * float(np.sqrt(REFERENCE_WIDTH / hidden_dim))


def init_checkpoint(cfg: ModelConfig, seed: int) -> Checkpoint:
    """Seeded random checkpoint; draw order follows the tensor inventory."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, TensorEntry] = {}
    for name, shape in expected_tensors(cfg):
        if name.endswith(".bias") or name.endswith(".beta"):
            data = np.zeros(shape, dtype=np.float32)
        elif name.endswith(".gamma"):
            data = np.ones(shape, dtype=np.float32)
        elif name.startswith("conv"):
            fan_in = shape[1] * shape[2]
            data = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape).astype(np.float32)
        elif name.startswith("proj"):
            fan_in = shape[1]
            data = rng.normal(0.0, np.sqrt(1.0 / fan_in), shape).astype(np.float32)
        elif name.startswith("enc"):
            data = rng.normal(0.0, _block_std(cfg.hidden_dim), shape).astype(np.float32)
        else:
            data = rng.normal(0.0, RESIDUAL_INIT_STD, shape).astype(np.float32)
        tensors[name] = TensorEntry("f32", track(data))
    provenance = {
        "seed": int(seed),
        "parent": None,
        "history": [f"init(preset={cfg.preset},seed={seed})"],
    }
    return Checkpoint(config=cfg, tensors=tensors, provenance=provenance)


def _linear(ckpt: Checkpoint, prefix: str, x: np.ndarray) -> np.ndarray:
    """``x @ W.T + b`` for the named layer, on the dtype-appropriate path."""
    entry = ckpt.tensors[prefix + ".weight"]
    bias = ckpt.tensors[prefix + ".bias"].data
    w2 = entry.data.reshape(entry.data.shape[0], -1)
    if entry.dtype == "int8":
        return quantized_linear(x, w2, entry.quant, bias)
    return track(matmul(x, w2.T) + bias)


def feature_extract(w: Waveform, ckpt: Checkpoint) -> np.ndarray:
    """Run the conv stack with GELU after each layer; returns ``[T, c]``."""
    cfg = ckpt.config
    n = w.samples.size
    minimum = min_input_samples(cfg)
    if n < minimum:
        raise InputTooShortError(f"input of {n} samples is too short; need >= {minimum}")
    x = w.samples.reshape(1, -1)
    for i, (_c, k, s) in enumerate(cfg.conv_layers):
        cols = im2col(x, k, s)
        y = _linear(ckpt, f"conv{i}", cols)  # [L_out, c]
        x = np.ascontiguousarray(gelu(y).T)
    return track(np.ascontiguousarray(x.T))


def positional_encoding(n_frames: int, dim: int) -> np.ndarray:
    """Sinusoidal absolute positions, ``[T, d]`` float32."""
    pos = np.arange(n_frames, dtype=np.float64)[:, None]
    i = np.arange(0, dim, 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, i / dim)
    pe = np.zeros((n_frames, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : dim // 2])
    return track(pe.astype(np.float32))


def _attention(ckpt: Checkpoint, layer: int, x: np.ndarray):
    cfg = ckpt.config
    n_heads = cfg.num_heads
    d_head = cfg.hidden_dim // n_heads
    t = x.shape[0]

    def split(m: np.ndarray) -> np.ndarray:
        return m.reshape(t, n_heads, d_head).transpose(1, 0, 2).astype(np.float64)

    q = split(_linear(ckpt, f"enc{layer}.attn_q", x))
    k = split(_linear(ckpt, f"enc{layer}.attn_k", x))
    v = split(_linear(ckpt, f"enc{layer}.attn_v", x))
    scores = track(q @ k.transpose(0, 2, 1)) / np.sqrt(d_head)
    weights = softmax_t(scores, 1.0, axis=-1)  # [h, T, T]
    ctx = track(weights @ v)  # [h, T, d_head]
    merged = ctx.transpose(1, 0, 2).reshape(t, cfg.hidden_dim).astype(np.float32)
    return _linear(ckpt, f"enc{layer}.attn_out", track(merged)), weights


def _block(ckpt: Checkpoint, layer: int, x: np.ndarray):
    g1 = ckpt.tensors[f"enc{layer}.ln1.gamma"].data
    b1 = ckpt.tensors[f"enc{layer}.ln1.beta"].data
    attn_out, weights = _attention(ckpt, layer, layer_norm(x, g1, b1))
    x = track(x + attn_out)
    g2 = ckpt.tensors[f"enc{layer}.ln2.gamma"].data
    b2 = ckpt.tensors[f"enc{layer}.ln2.beta"].data
    pre = layer_norm(x, g2, b2)
    f = gelu(_linear(ckpt, f"enc{layer}.ffn1", pre))
    f = _linear(ckpt, f"enc{layer}.ffn2", f)
    return track(x + f), weights


def encode(
    features: np.ndarray,
    ckpt: Checkpoint,
    return_attn: bool = False,
    return_layers: bool = False,
):
    """Project features to hidden size, add positions, run the blocks.

    Returns the final ``[T, d]`` hidden states; with ``return_attn`` also a
    list of per-layer attention weights ``[heads, T, T]``, and with
    ``return_layers`` also the per-stage hidden states (index 0 is the
    embedding, index L the final block output).
    """
    cfg = ckpt.config
    features = np.asarray(features, dtype=np.float32)
    expect = ckpt.tensors["proj.weight"].data.shape[1]
    if features.ndim != 2 or features.shape[1] != expect:
        raise ShapeError(
            f"encoder expects features [T, {expect}], got {features.shape}"
        )
    x = track(_linear(ckpt, "proj", features) + positional_encoding(features.shape[0], cfg.hidden_dim))
    layers = [x]
    attn = []
    for l in range(cfg.num_layers):
        x, weights = _block(ckpt, l, x)
        layers.append(x)
        attn.append(weights)
    if return_attn and return_layers:
        return x, attn, layers
    if return_attn:
        return x, attn
    if return_layers:
        return x, layers
    return x


def classify(h: np.ndarray, ckpt: Checkpoint) -> np.ndarray:
    """Mean-pool over time, project to 2 toxicity logits (class 1 = toxic)."""
    pooled = mean_pool(h)
    return _linear(ckpt, "cls", pooled.reshape(1, -1))[0]


def ctc_logits(h: np.ndarray, ckpt: Checkpoint) -> np.ndarray:
    """Per-frame vocabulary logits ``[T, V]``; log-softmax is the CTC module's job."""
    return _linear(ckpt, "ctc", h)


def pooled_embedding(w: Waveform, ckpt: Checkpoint, pool_layer: int | None = None) -> np.ndarray:
    """Mean-pooled hidden vector, for embedding dumps and linear probes."""
    h = _hidden(w, ckpt, pool_layer)
    return mean_pool(h)


def _hidden(w: Waveform, ckpt: Checkpoint, pool_layer: int | None) -> np.ndarray:
    feats = feature_extract(w, ckpt)
    if pool_layer is None:
        return encode(feats, ckpt)
    _h, layers = encode(feats, ckpt, return_layers=True)
    if not -len(layers) <= pool_layer < len(layers):
        raise ParameterError(
            f"pool_layer must be in [0, {len(layers) - 1}], got {pool_layer}"
        )
    return layers[pool_layer]


def forward(
    w: Waveform,
    ckpt: Checkpoint,
    pool_layer: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One shared encoder pass feeding both heads.

    Returns ``(toxicity logits [2], ctc logits [T, V])``. ``pool_layer``
    overrides which stage the classifier pools (default: last).
    """
    feats = feature_extract(w, ckpt)
    h, layers = encode(feats, ckpt, return_layers=True)
    if pool_layer is None:
        cls_h = h
    else:
        if not -len(layers) <= pool_layer < len(layers):
            raise ParameterError(
                f"pool_layer must be in [0, {len(layers) - 1}], got {pool_layer}"
            )
        cls_h = layers[pool_layer]
    return classify(cls_h, ckpt), ctc_logits(h, ckpt)
