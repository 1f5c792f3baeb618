"""WAV ingestion, input conditioning, and the synthetic labeled dataset.

Only 16 kHz mono PCM16 RIFF files are accepted; there is no resampling.
The synthetic generator stands in for a curated toxicity corpus at desk
scale: each clip is a sequence of pure tones over noise, the tone tokens
are the transcript, and the toxic class draws its tones from a disjoint
(higher) frequency band so both heads have learnable signal.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .errors import ContractError, FormatError, LabelError, ParameterError, ParseError

SAMPLE_RATE = 16000

# 3:1 non-toxic:toxic class balance; every fourth clip is toxic.
TOXIC_EVERY = 4


@dataclass
class Waveform:
    """Mono PCM audio at 16 kHz, samples as float32."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.sample_rate != SAMPLE_RATE:
            raise FormatError(f"sample_rate: expected {SAMPLE_RATE}, got {self.sample_rate}")
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ParameterError("waveform must be a non-empty 1-D sample sequence")
        if not np.all(np.isfinite(self.samples)):
            raise ContractError("waveform contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class LabeledUtterance:
    """A waveform with a toxicity label and a token-id transcript."""

    waveform: Waveform
    label: int
    transcript: tuple[int, ...]

    def __post_init__(self):
        if self.label not in (0, 1):
            raise LabelError(f"label must be 0 or 1, got {self.label}")
        self.transcript = tuple(int(t) for t in self.transcript)
        if not self.transcript:
            raise ParameterError("transcript must be non-empty")
        if any(t < 1 for t in self.transcript):
            raise ParameterError("transcript tokens must be >= 1 (0 is the blank)")


def read_wav(path: str) -> Waveform:
    """Parse a RIFF/WAVE file: PCM16, mono, 16 kHz; int16 scaled by 1/32768."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise ParseError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise ParseError("fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise ParseError("data chunk truncated")
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned
    if fmt is None:
        raise ParseError("missing fmt chunk")
    if data is None:
        raise ParseError("missing data chunk")

    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise FormatError(f"audio_format: expected PCM (1), got {audio_format}")
    if channels != 1:
        raise FormatError(f"channels: expected 1, got {channels}")
    if rate != SAMPLE_RATE:
        raise FormatError(f"sample_rate: expected {SAMPLE_RATE}, got {rate}")
    if bits != 16:
        raise FormatError(f"bits_per_sample: expected 16, got {bits}")
    ints = np.frombuffer(data[: len(data) // 2 * 2], dtype="<i2")
    return Waveform(ints.astype(np.float32) / 32768.0)


def write_wav(path: str, w: Waveform) -> None:
    """Write PCM16 mono 16 kHz; inverse of :func:`read_wav` at int16 resolution."""
    ints = np.clip(np.round(w.samples.astype(np.float64) * 32768.0), -32768, 32767)
    payload = ints.astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, SAMPLE_RATE, SAMPLE_RATE * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as f:
        f.write(header + payload)


def normalize(w: Waveform) -> Waveform:
    """Zero mean, unit variance per utterance; variance floor guards silence."""
    x = w.samples.astype(np.float64)
    centered = x - x.mean()
    var = centered.var()
    out = centered / np.sqrt(max(var, 1e-7))
    return Waveform(out.astype(np.float32))


def nontoxic_tokens(cfg: ModelConfig) -> list[int]:
    return list(range(1, (cfg.vocab_size - 1) // 2 + 1))


def toxic_tokens(cfg: ModelConfig) -> list[int]:
    return list(range((cfg.vocab_size - 1) // 2 + 1, cfg.vocab_size))


def token_frequency(token: int, cfg: ModelConfig) -> float:
    """Map a token id to its tone frequency (Hz), linear in the id."""
    return 250.0 + token * 3400.0 / (cfg.vocab_size - 1)


def synth_dataset(
    seed: int,
    n: int,
    duration_s: float,
    cfg: ModelConfig,
) -> list[LabeledUtterance]:
    """Deterministic synthetic dataset with a 3:1 non-toxic:toxic balance.

    Every clip is a token-indexed tone sequence (its transcript) over
    Gaussian noise; toxic clips use the upper half of the tone alphabet,
    non-toxic the lower half, so pooled encoder features separate the
    classes and the frame sequence carries the transcript.
    """
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    if duration_s < 0.25:
        raise ParameterError(f"need duration_s >= 0.25, got {duration_s}")
    if cfg.vocab_size < 3:
        raise ParameterError("synthetic data needs vocab_size >= 3 for disjoint tone groups")
    rng = np.random.default_rng(seed)
    low = nontoxic_tokens(cfg)
    high = toxic_tokens(cfg)
    length = round(duration_s * SAMPLE_RATE)
    items: list[LabeledUtterance] = []
    for i in range(n):
        label = 1 if i % TOXIC_EVERY == TOXIC_EVERY - 1 else 0
        group = high if label else low
        n_seg = int(rng.integers(3, 7))
        tokens = [int(t) for t in rng.choice(group, size=n_seg)]
        x = rng.normal(0.0, 0.05, length)
        seg = length // n_seg
        tau = np.arange(seg) / SAMPLE_RATE
        for j, tok in enumerate(tokens):
            freq = token_frequency(tok, cfg)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.25, 0.35)
            x[j * seg : (j + 1) * seg] += amp * np.sin(2.0 * np.pi * freq * tau + phase)
        samples = np.clip(x, -1.0, 1.0).astype(np.float32)
        items.append(LabeledUtterance(Waveform(samples), label, tuple(tokens)))
    return items


def save_dataset(dirpath: str, items: list[LabeledUtterance]) -> str:
    """Write clips plus a JSONL manifest; returns the manifest path."""
    os.makedirs(dirpath, exist_ok=True)
    manifest = os.path.join(dirpath, "manifest.jsonl")
    with open(manifest, "w", encoding="utf-8") as f:
        for i, item in enumerate(items):
            name = f"clip_{i:04d}.wav"
            write_wav(os.path.join(dirpath, name), item.waveform)
            record = {
                "path": name,
                "label": item.label,
                "transcript": " ".join(str(t) for t in item.transcript),
            }
            f.write(json.dumps(record, sort_keys=True) + "\n")
    return manifest


def load_dataset(dirpath: str) -> list[LabeledUtterance]:
    """Read a dataset directory written by :func:`save_dataset`."""
    manifest = os.path.join(dirpath, "manifest.jsonl")
    try:
        with open(manifest, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as exc:
        raise ParseError(f"cannot read manifest {manifest}: {exc}") from exc
    items = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad manifest record: {exc}") from exc
        wav = read_wav(os.path.join(dirpath, record["path"]))
        transcript = tuple(int(t) for t in str(record["transcript"]).split())
        items.append(LabeledUtterance(wav, int(record["label"]), transcript))
    return items
