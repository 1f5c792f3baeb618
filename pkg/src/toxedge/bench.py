"""Edge-deployment measurement harness: latency, RTF, peak RAM, report.

Timing uses a monotonic clock with one warmup pass excluded and the
per-clip median across reps as the headline number. Peak RAM is the
tracked tensor-allocation high-water mark (see :mod:`toxedge.memtrack`),
measured over a fresh checkpoint load plus one forward on the longest
clip, so model weights are included the way a resident-set measurement
would include them. Measurement runs one inference at a time; the harness
refuses to nest.
"""

from __future__ import annotations

import csv
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import model
from .audio import LabeledUtterance, Waveform, normalize
from .checkpoint import load, model_size_bytes
from .errors import ConfigError, ParameterError
from .memtrack import peak_memory
from .metrics import classification_metrics

CSV_COLUMNS = (
    "variant",
    "macro_f1",
    "size_bytes",
    "peak_ram_bytes",
    "total_s",
    "mean_s",
    "rtf",
    "clips",
    "audio_s",
)

# Size-reduction reference points for the report footer: int8 alone,
# a depth-5/12 student alone, and the two combined (377.9 / 95.2 / 25.9 MB).
REFERENCE_RATIOS = (("int8", 3.97), ("student", 3.70), ("int8 student", 14.59))


def rtf(inference_s: float, audio_s: float) -> float:
    """Real-time factor: inference time divided by audio duration."""
    if not audio_s > 0:
        raise ParameterError(f"audio duration must be > 0, got {audio_s}")
    return inference_s / audio_s


@dataclass
class LatencyStats:
    """Per-clip wall-time samples (warmup excluded) and their summary."""

    samples: list[list[float]]  # [rep][clip]
    mean_s: float
    median_s: float
    p95_s: float
    total_s: float  # sum of per-clip medians across reps
    per_clip_median: list[float]


def measure_latency(infer_fn, clips: list[Waveform], warmup: int = 1, reps: int = 5) -> LatencyStats:
    """Time ``infer_fn`` per clip over ``reps`` passes after ``warmup`` passes."""
    if not clips:
        raise ParameterError("no clips to measure")
    if reps < 1:
        raise ParameterError(f"reps must be >= 1, got {reps}")
    for _ in range(warmup):
        for clip in clips:
            infer_fn(clip)
    samples: list[list[float]] = []
    for _ in range(reps):
        row = []
        for clip in clips:
            t0 = time.perf_counter()
            infer_fn(clip)
            row.append(time.perf_counter() - t0)
        samples.append(row)
    flat = np.asarray(samples).reshape(-1)
    per_clip = np.median(np.asarray(samples), axis=0)
    return LatencyStats(
        samples=samples,
        mean_s=float(flat.mean()),
        median_s=float(np.median(flat)),
        p95_s=float(np.percentile(flat, 95)),
        total_s=float(per_clip.sum()),
        per_clip_median=[float(x) for x in per_clip],
    )


@dataclass
class BenchResult:
    """One report row per model variant, Table-style."""

    variant: str
    macro_f1: float
    size_bytes: int
    peak_ram_bytes: int
    total_s: float
    mean_s: float
    rtf: float
    clips: int
    audio_s: float

    def row(self) -> list:
        return [getattr(self, col) for col in CSV_COLUMNS]


def _evaluate_f1(ckpt, testset: list[LabeledUtterance]) -> float:
    preds = []
    for item in testset:
        logits, _ = model.forward(normalize(item.waveform), ckpt)
        preds.append(int(np.argmax(logits)))
    return classification_metrics([it.label for it in testset], preds).macro_f1


def bench_variant(
    path: str,
    testset: list[LabeledUtterance],
    warmup: int = 1,
    reps: int = 5,
) -> BenchResult:
    """Measure one checkpoint file against a labeled test set."""
    if not testset:
        raise ParameterError("empty test set")
    ckpt = load(path)
    variant = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    f1 = _evaluate_f1(ckpt, testset)
    clips = [item.waveform for item in testset]
    lat = measure_latency(lambda c: model.forward(normalize(c), ckpt), clips, warmup, reps)
    audio_s = float(sum(c.duration_s for c in clips))
    longest = max(clips, key=lambda c: c.duration_s)
    del ckpt
    peak = peak_memory(lambda: model.forward(normalize(longest), load(path)))
    return BenchResult(
        variant=variant,
        macro_f1=f1,
        size_bytes=model_size_bytes(path),
        peak_ram_bytes=peak,
        total_s=lat.total_s,
        mean_s=lat.total_s / len(clips),
        rtf=rtf(lat.total_s, audio_s),
        clips=len(clips),
        audio_s=audio_s,
    )


def bench_suite(
    paths: list[str],
    testset: list[LabeledUtterance],
    out_csv: str | None = None,
    warmup: int = 1,
    reps: int = 5,
    stream=None,
) -> list[BenchResult]:
    """One row per variant; also prints an aligned table with size ratios
    relative to the first (baseline) variant, next to the reference points."""
    if not paths:
        raise ParameterError("no model variants given")
    stream = stream if stream is not None else sys.stdout
    first_cfg = None
    results = []
    for path in paths:
        cfg = load(path).config
        if first_cfg is None:
            first_cfg = cfg
        elif (cfg.vocab_size, cfg.num_classes) != (first_cfg.vocab_size, first_cfg.num_classes):
            raise ConfigError(
                f"variant {path} has vocab/classes ({cfg.vocab_size}, {cfg.num_classes}), "
                f"baseline has ({first_cfg.vocab_size}, {first_cfg.num_classes})"
            )
        results.append(bench_variant(path, testset, warmup, reps))
    if out_csv:
        with open(out_csv, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            for r in results:
                writer.writerow(r.row())
    print(format_table(results), file=stream)
    return results


def format_table(results: list[BenchResult]) -> str:
    header = ["variant", "macro_f1", "size_mb", "peak_ram_mb", "total_s", "mean_s", "rtf"]
    rows = [
        [
            r.variant,
            f"{r.macro_f1:.4f}",
            f"{r.size_bytes / 1e6:.2f}",
            f"{r.peak_ram_bytes / 1e6:.2f}",
            f"{r.total_s:.3f}",
            f"{r.mean_s:.4f}",
            f"{r.rtf:.4f}",
        ]
        for r in results
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    base = results[0]
    refs = ", ".join(f"{name} {ratio:.2f}x" for name, ratio in REFERENCE_RATIOS)
    lines.append("")
    lines.append(f"size ratios vs {base.variant} (reference points: {refs}):")
    for r in results[1:]:
        lines.append(f"  {r.variant}: {base.size_bytes / r.size_bytes:.2f}x")
    return "\n".join(lines)
