"""Model geometry: configuration presets, tensor inventory, parameter counts.

The tensor inventory defined here is the single source of truth for what a
checkpoint must contain; serialization validates against it, and the
closed-form parameter count below is asserted to match it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

from .errors import ConfigError, ParameterError

ConvSpec = tuple[int, int, int]  # (channels, kernel, stride)

BASE_KERNELS = (10, 3, 3, 3, 3, 2, 2)
BASE_STRIDES = (5, 2, 2, 2, 2, 2, 2)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters for the shared encoder and its two heads.

    ``vocab_size`` counts the blank token at index 0; ``num_classes`` is
    fixed at 2 (non-toxic=0, toxic=1). ``num_layers`` may be 0 only in
    test-only configs; presets always have at least one layer.
    """

    conv_layers: tuple[ConvSpec, ...]
    hidden_dim: int
    num_layers: int
    num_heads: int
    ffn_dim: int
    vocab_size: int
    num_classes: int = 2
    preset: str = "custom"

    def __post_init__(self):
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.num_layers < 0:
            raise ConfigError(f"num_layers must be >= 0, got {self.num_layers}")
        if self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if not self.conv_layers:
            raise ConfigError("conv_layers must be non-empty")
        if self.preset == "base-mirror" and len(self.conv_layers) != 7:
            raise ConfigError("base-mirror preset requires exactly 7 conv layers")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_layers"] = [list(c) for c in self.conv_layers]
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        kw = dict(d)
        kw["conv_layers"] = tuple(tuple(c) for c in kw["conv_layers"])
        return ModelConfig(**kw)


def _conv_stack(channels: int) -> tuple[ConvSpec, ...]:
    return tuple((channels, k, s) for k, s in zip(BASE_KERNELS, BASE_STRIDES))


PRESETS = {
    # Mirrors the wav2vec2.0-base geometry: 7 conv layers, 12 transformer
    # layers with 8 heads over 768 hidden units.
    "base-mirror": ModelConfig(
        conv_layers=_conv_stack(512),
        hidden_dim=768,
        num_layers=12,
        num_heads=8,
        ffn_dim=3072,
        vocab_size=32,
        preset="base-mirror",
    ),
    # Small enough for fast tests while keeping every architectural feature.
    "tiny": ModelConfig(
        conv_layers=_conv_stack(32),
        hidden_dim=64,
        num_layers=4,
        num_heads=4,
        ffn_dim=128,
        vocab_size=8,
        preset="tiny",
    ),
}


def preset(name: str) -> ModelConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ParameterError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None


def expected_tensors(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) inventory implied by a config.

    The order here is also the payload order in serialized checkpoints and
    the draw order of seeded initialization.
    """
    d, ffn, v, n_cls = cfg.hidden_dim, cfg.ffn_dim, cfg.vocab_size, cfg.num_classes
    inv: list[tuple[str, tuple[int, ...]]] = []
    c_prev = 1
    for i, (c, k, _s) in enumerate(cfg.conv_layers):
        inv.append((f"conv{i}.weight", (c, c_prev, k)))
        inv.append((f"conv{i}.bias", (c,)))
        c_prev = c
    inv.append(("proj.weight", (d, c_prev)))
    inv.append(("proj.bias", (d,)))
    for l in range(cfg.num_layers):
        p = f"enc{l}"
        inv.append((f"{p}.ln1.gamma", (d,)))
        inv.append((f"{p}.ln1.beta", (d,)))
        for name in ("attn_q", "attn_k", "attn_v", "attn_out"):
            inv.append((f"{p}.{name}.weight", (d, d)))
            inv.append((f"{p}.{name}.bias", (d,)))
        inv.append((f"{p}.ln2.gamma", (d,)))
        inv.append((f"{p}.ln2.beta", (d,)))
        inv.append((f"{p}.ffn1.weight", (ffn, d)))
        inv.append((f"{p}.ffn1.bias", (ffn,)))
        inv.append((f"{p}.ffn2.weight", (d, ffn)))
        inv.append((f"{p}.ffn2.bias", (d,)))
    inv.append(("cls.weight", (n_cls, d)))
    inv.append(("cls.bias", (n_cls,)))
    inv.append(("ctc.weight", (v, d)))
    inv.append(("ctc.bias", (v,)))
    return inv


def param_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count.

    conv:   sum_i (c_i * c_{i-1} * k_i + c_i), with c_0 = 1
    proj:   d * c_last + d
    block:  4*(d^2 + d) attention + (ffn*d + ffn) + (d*ffn + d) FFN + 4*d layer-norm
    heads:  (num_classes*d + num_classes) + (V*d + V)
    """
    d, ffn, v, n_cls = cfg.hidden_dim, cfg.ffn_dim, cfg.vocab_size, cfg.num_classes
    total = 0
    c_prev = 1
    for c, k, _s in cfg.conv_layers:
        total += c * c_prev * k + c
        c_prev = c
    total += d * c_prev + d
    per_block = 4 * (d * d + d) + (ffn * d + ffn) + (d * ffn + d) + 4 * d
    total += cfg.num_layers * per_block
    total += n_cls * d + n_cls + v * d + v
    return total


def frame_count(cfg: ModelConfig, n_samples: int) -> int:
    """Number of encoder frames produced for an input of ``n_samples``."""
    length = n_samples
    for _c, k, s in cfg.conv_layers:
        if k > length:
            return 0
        length = (length - k) // s + 1
    return length


def min_input_samples(cfg: ModelConfig) -> int:
    """Smallest input length that survives the full conv stack (>= 1 frame)."""
    need = 1
    for _c, k, s in reversed(cfg.conv_layers):
        need = (need - 1) * s + k
    return need
