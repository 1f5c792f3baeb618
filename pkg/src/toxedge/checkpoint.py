"""Bit-exact, versioned model serialization (the ``TOXW`` container).

Layout (all integers little-endian, documented in ``docs/format.md``):

    bytes 0..3    magic ``TOXW``
    bytes 4..7    format version (u32)
    bytes 8..11   header length H (u32)
    bytes 12..    header: canonical JSON (sorted keys, no whitespace)
    ...           tensor payloads, each 64-byte aligned, in table order
    last 4 bytes  CRC-32 of everything before it

Float32 tensors serialize as raw row-major bytes; int8 tensors as their
per-channel float32 scales followed by the raw int8 data. Equal checkpoints
serialize to equal bytes, which makes on-disk size a deterministic
measurement.
"""

from __future__ import annotations

import hashlib
import json
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig, expected_tensors
from .errors import (
    ConfigError,
    ContractError,
    CrcError,
    IoError,
    MagicError,
    ParseError,
    VersionError,
)
from .memtrack import track

MAGIC = b"TOXW"
FORMAT_VERSION = 1
ALIGNMENT = 64

SYMMETRIC_PER_CHANNEL = "symmetric-per-channel"
AFFINE_PER_TENSOR = "affine-per-tensor"


@dataclass
class QuantParams:
    """Scale/zero-point metadata attached to a quantized tensor.

    Symmetric per-channel (weights): one positive scale per output channel,
    zero-point fixed at 0. Affine per-tensor (activations): a single scale
    and an integer zero-point in [-128, 127].
    """

    scheme: str
    scales: np.ndarray
    zero_points: np.ndarray | int = 0
    bits: int = 8
    axis: int = 0

    def __post_init__(self):
        self.scales = np.atleast_1d(np.asarray(self.scales, dtype=np.float32))
        if not np.all(self.scales > 0):
            raise ContractError("quantization scales must be positive")
        if self.scheme == SYMMETRIC_PER_CHANNEL and np.any(np.asarray(self.zero_points) != 0):
            raise ContractError("symmetric scheme requires zero_point = 0")


@dataclass
class TensorEntry:
    """One named tensor: dtype tag, raw values, optional quantization."""

    dtype: str  # "f32" | "int8"
    data: np.ndarray
    quant: QuantParams | None = None


@dataclass
class Checkpoint:
    """Architecture config plus the ordered named-tensor weight store."""

    config: ModelConfig
    tensors: dict[str, TensorEntry]
    provenance: dict = field(default_factory=lambda: {"seed": None, "parent": None, "history": []})


def _validate_inventory(cfg: ModelConfig, tensors: dict[str, TensorEntry]) -> None:
    expected = expected_tensors(cfg)
    expected_names = {name: shape for name, shape in expected}
    missing = [n for n in expected_names if n not in tensors]
    extra = [n for n in tensors if n not in expected_names]
    if missing or extra:
        raise ConfigError(
            f"tensor inventory mismatch: missing {missing or 'none'}, extra {extra or 'none'}"
        )
    for name, shape in expected:
        got = tuple(tensors[name].data.shape)
        if got != shape:
            raise ConfigError(f"tensor {name} has shape {got}, config implies {shape}")


def _align(offset: int) -> int:
    return (offset + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def _payload_bytes(entry: TensorEntry) -> bytes:
    if entry.dtype == "f32":
        return np.ascontiguousarray(entry.data, dtype="<f4").tobytes()
    if entry.dtype == "int8":
        scales = np.ascontiguousarray(entry.quant.scales, dtype="<f4").tobytes()
        return scales + np.ascontiguousarray(entry.data, dtype=np.int8).tobytes()
    raise ConfigError(f"unknown tensor dtype {entry.dtype!r}")


def save(ckpt: Checkpoint, path: str) -> int:
    """Serialize a checkpoint; returns the number of bytes written."""
    _validate_inventory(ckpt.config, ckpt.tensors)
    payloads: list[bytes] = []
    table: list[dict] = []
    rel = 0
    for name, entry in ckpt.tensors.items():
        rel = _align(rel)
        blob = _payload_bytes(entry)
        record = {
            "name": name,
            "dtype": entry.dtype,
            "shape": [int(s) for s in entry.data.shape],
            "offset": rel,
            "nbytes": len(blob),
        }
        if entry.dtype == "int8":
            record["scheme"] = entry.quant.scheme
        table.append(record)
        payloads.append(blob)
        rel += len(blob)

    header_obj = {
        "config": ckpt.config.to_dict(),
        "provenance": ckpt.provenance,
        "tensors": table,
    }
    header = json.dumps(header_obj, sort_keys=True, separators=(",", ":")).encode("utf-8")

    crc = 0
    written = 0
    try:
        with open(path, "wb") as f:

            def put(chunk: bytes):
                nonlocal crc, written
                f.write(chunk)
                crc = zlib.crc32(chunk, crc)
                written += len(chunk)

            put(MAGIC)
            put(FORMAT_VERSION.to_bytes(4, "little"))
            put(len(header).to_bytes(4, "little"))
            put(header)
            base = _align(written)
            put(b"\x00" * (base - written))
            for record, blob in zip(table, payloads):
                target = base + record["offset"]
                put(b"\x00" * (target - written))
                put(blob)
            f.write(crc.to_bytes(4, "little"))
            written += 4
    except OSError as exc:
        raise IoError(f"cannot write checkpoint to {path}: {exc}") from exc
    return written


def load(path: str) -> Checkpoint:
    """Read and fully validate a ``TOXW`` file."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint from {path}: {exc}") from exc
    if len(raw) < 16:
        raise ParseError(f"file too short to be a checkpoint ({len(raw)} bytes)")
    if raw[:4] != MAGIC:
        raise MagicError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version = int.from_bytes(raw[4:8], "little")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version}, this build reads {FORMAT_VERSION}")
    stored_crc = int.from_bytes(raw[-4:], "little")
    actual_crc = zlib.crc32(raw[:-4])
    if stored_crc != actual_crc:
        raise CrcError(f"CRC mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}")
    header_len = int.from_bytes(raw[8:12], "little")
    if 12 + header_len > len(raw) - 4:
        raise ParseError("header length exceeds file size")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"header is not valid JSON: {exc}") from exc

    cfg = ModelConfig.from_dict(header["config"])
    base = _align(12 + header_len)
    tensors: dict[str, TensorEntry] = {}
    for record in header["tensors"]:
        name = record["name"]
        shape = tuple(record["shape"])
        start = base + record["offset"]
        blob = raw[start : start + record["nbytes"]]
        if len(blob) != record["nbytes"]:
            raise ParseError(f"payload for tensor {name} is truncated")
        if record["dtype"] == "f32":
            data = track(np.frombuffer(blob, dtype="<f4").reshape(shape).copy())
            tensors[name] = TensorEntry("f32", data)
        elif record["dtype"] == "int8":
            n_scales = shape[0]
            scales = np.frombuffer(blob, dtype="<f4", count=n_scales).copy()
            data = track(
                np.frombuffer(blob, dtype=np.int8, offset=4 * n_scales).reshape(shape).copy()
            )
            tensors[name] = TensorEntry(
                "int8", data, QuantParams(record["scheme"], scales)
            )
        else:
            raise ParseError(f"unknown dtype {record['dtype']!r} for tensor {name}")
    _validate_inventory(cfg, tensors)
    return Checkpoint(config=cfg, tensors=tensors, provenance=header["provenance"])


def model_size_bytes(path: str) -> int:
    """Exact on-disk size of a checkpoint file."""
    try:
        return os.path.getsize(path)
    except OSError as exc:
        raise IoError(f"cannot stat {path}: {exc}") from exc


def checkpoint_checksum(ckpt: Checkpoint) -> str:
    """SHA-256 over config and all tensor contents (provenance excluded)."""
    return tensors_checksum(ckpt, sorted(ckpt.tensors))


def tensors_checksum(ckpt: Checkpoint, names: list[str]) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(ckpt.config.to_dict(), sort_keys=True).encode())
    for name in names:
        entry = ckpt.tensors[name]
        h.update(name.encode())
        h.update(entry.dtype.encode())
        h.update(str(tuple(entry.data.shape)).encode())
        h.update(np.ascontiguousarray(entry.data).tobytes())
        if entry.quant is not None:
            h.update(np.ascontiguousarray(entry.quant.scales).tobytes())
    return h.hexdigest()


def encoder_checksum(ckpt: Checkpoint) -> str:
    """Checksum over everything except the two heads (the frozen encoder)."""
    names = sorted(n for n in ckpt.tensors if not n.startswith(("cls.", "ctc.")))
    return tensors_checksum(ckpt, names)


def head_checksum(ckpt: Checkpoint, head: str) -> str:
    """Checksum of one head's tensors; ``head`` is ``cls`` or ``ctc``."""
    names = sorted(n for n in ckpt.tensors if n.startswith(head + "."))
    return tensors_checksum(ckpt, names)


def derive(
    ckpt: Checkpoint,
    new_tensors: dict[str, TensorEntry],
    event: str,
    config: ModelConfig | None = None,
) -> Checkpoint:
    """New checkpoint with some tensors replaced and provenance extended."""
    cfg = config if config is not None else ckpt.config
    merged: dict[str, TensorEntry] = {}
    for name, _shape in expected_tensors(cfg):
        if name in new_tensors:
            merged[name] = new_tensors[name]
        else:
            merged[name] = ckpt.tensors[name]
    provenance = {
        "seed": ckpt.provenance.get("seed"),
        "parent": checkpoint_checksum(ckpt),
        "history": list(ckpt.provenance.get("history", [])) + [event],
    }
    return Checkpoint(config=cfg, tensors=merged, provenance=provenance)
