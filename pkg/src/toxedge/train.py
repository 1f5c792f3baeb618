"""Desk-scale optimization with a frozen encoder.

Only the two affine heads train; encoder outputs are cached once per
dataset, so epochs are cheap and the λ grid reuses one cache. Training is
sequential over seeded shuffled batches (mean reduction), which makes loss
traces exactly reproducible; distillation shares the same loop, so an
``alpha = 1`` distillation run reproduces hard-label training bit for bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import model
from .audio import LabeledUtterance, normalize
from .checkpoint import Checkpoint, TensorEntry, checkpoint_checksum, derive
from .ctc import ctc_grad, ctc_loss
from .errors import ConfigError, ContractError, ParameterError, SplitError
from .kernels import log_softmax, softmax_t
from .losses import DistillHyper, LossBreakdown, MtlWeights, _kd_parts, cross_entropy, mtl_loss
from .metrics import Metrics, classification_metrics, roc_auc

HEAD_NAMES = ("cls.weight", "cls.bias", "ctc.weight", "ctc.bias")

DEFAULT_LAMBDA_GRID = (0.0, 0.05, 0.1, 0.2)

# Desk-scale defaults; the documented reference hyperparameters
# (lr 5e-5, batch 2, 100 epochs) are exposed by the CLI's --paper-hyper.
DESK_LR = 1e-3
DESK_BATCH = 8
DESK_EPOCHS = 30


@dataclass(frozen=True)
class AdamHyper:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """Per-parameter moments and the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int
    hyper: AdamHyper


def adam_init(params: dict[str, np.ndarray], hyper: AdamHyper) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        t=0,
        hyper=hyper,
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Standard bias-corrected Adam update; increments the step counter."""
    if set(params) != set(grads):
        raise ParameterError(f"parameter/gradient name mismatch: {sorted(params)} vs {sorted(grads)}")
    h = state.hyper
    state.t += 1
    new_params = {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ParameterError(f"gradient shape {g.shape} does not match parameter {k} {p.shape}")
        state.m[k] = h.beta1 * state.m[k] + (1 - h.beta1) * g
        state.v[k] = h.beta2 * state.v[k] + (1 - h.beta2) * g * g
        m_hat = state.m[k] / (1 - h.beta1**state.t)
        v_hat = state.v[k] / (1 - h.beta2**state.t)
        new_params[k] = p - h.lr * m_hat / (np.sqrt(v_hat) + h.eps)
    return new_params, state


def split_dataset(
    items: list[LabeledUtterance],
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
):
    """Stratified seeded split; val/test sizes floored, remainder to train."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"ratios must sum to 1, got {ratios}")
    n = len(items)
    n_val = int(np.floor(ratios[1] * n))
    n_test = int(np.floor(ratios[2] * n))
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise SplitError(f"split of {n} items by {ratios} leaves an empty partition")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[LabeledUtterance]] = {0: [], 1: []}
    for item in items:
        by_class[item.label].append(item)
    for c in by_class:
        order = rng.permutation(len(by_class[c]))
        by_class[c] = [by_class[c][i] for i in order]
    capacity = {c: len(pool) for c, pool in by_class.items()}

    def allocate(count: int) -> dict[int, int]:
        # Largest-remainder apportionment keeps every split's class mix
        # within one item of the global mix, bounded by what is left.
        ideal = {c: count * len(by_class[c]) / n for c in by_class}
        got = {c: min(int(np.floor(ideal[c])), capacity[c]) for c in by_class}
        order = sorted(by_class, key=lambda c: (got[c] + 1 - ideal[c], c))
        while sum(got.values()) < count:
            for c in order:
                if sum(got.values()) == count:
                    break
                if got[c] < capacity[c]:
                    got[c] += 1
        for c in by_class:
            capacity[c] -= got[c]
        return got

    val_take = allocate(n_val)
    test_take = allocate(n_test)
    val, test, train = [], [], []
    for c, pool in by_class.items():
        val.extend(pool[: val_take[c]])
        test.extend(pool[val_take[c] : val_take[c] + test_take[c]])
        train.extend(pool[val_take[c] + test_take[c] :])
    return train, val, test


@dataclass
class TrainReport:
    """Per-epoch loss averages plus the final validation metrics."""

    epochs: list[LossBreakdown]
    val_metrics: Metrics | None
    wall_time_s: float
    seed: int


def save_report(report: TrainReport, path: str) -> None:
    """One epoch per JSONL record, for plotting by external tools."""
    with open(path, "w", encoding="utf-8") as f:
        for i, breakdown in enumerate(report.epochs):
            record = {"epoch": i + 1, **breakdown.to_dict()}
            f.write(json.dumps(record, sort_keys=True) + "\n")


def _encode_cache(ckpt: Checkpoint, items: list[LabeledUtterance]):
    """Frozen-encoder outputs per clip: (hidden [T,d] f64, pooled [d] f64)."""
    cache = []
    for item in items:
        feats = model.feature_extract(normalize(item.waveform), ckpt)
        h = model.encode(feats, ckpt).astype(np.float64)
        cache.append((h, h.mean(axis=0)))
    return cache


def _head_params(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    for name in HEAD_NAMES:
        if ckpt.tensors[name].dtype != "f32":
            raise ConfigError(f"head training requires f32 heads; {name} is quantized")
    return {name: ckpt.tensors[name].data.astype(np.float64) for name in HEAD_NAMES}


def _clip_terms(params, cache_entry, transcript, lam):
    """CTC loss/grads for one clip; cls handled by the caller's loss_fn."""
    h, _pooled = cache_entry
    z = h @ params["ctc.weight"].T + params["ctc.bias"]
    lp = log_softmax(z)
    asr = ctc_loss(lp, transcript)
    g = ctc_grad(lp, transcript)
    return asr, g


def _run_heads(ckpt, cache, items, cls_loss_fn, lam, epochs, batch_size, lr, seed):
    """Shared training loop for hard-label and distillation objectives.

    ``cls_loss_fn(i, logits) -> (loss, grad, parts)`` where ``parts`` is a
    dict merged into the epoch averages (e.g. kd_soft / kd_hard).
    """
    if not items:
        raise ParameterError("training dataset is empty")
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    if epochs < 1 or batch_size < 1:
        raise ParameterError("epochs and batch_size must be >= 1")
    params = _head_params(ckpt)
    state = adam_init(params, AdamHyper(lr=lr))
    rng = np.random.default_rng(seed)
    n = len(items)
    history: list[LossBreakdown] = []
    for _epoch in range(epochs):
        order = rng.permutation(n)
        sums: dict[str, float] = {"cls": 0.0, "asr": 0.0}
        extra_sums: dict[str, float] = {}
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            grads = {k: np.zeros_like(p) for k, p in params.items()}
            for i in batch:
                h, pooled = cache[i]
                cls_logits = params["cls.weight"] @ pooled + params["cls.bias"]
                cls_val, cls_grad, parts = cls_loss_fn(int(i), cls_logits)
                grads["cls.weight"] += np.outer(cls_grad, pooled)
                grads["cls.bias"] += cls_grad
                asr_val, ctc_g = _clip_terms(params, cache[i], items[i].transcript, lam)
                grads["ctc.weight"] += lam * (ctc_g.T @ h)
                grads["ctc.bias"] += lam * ctc_g.sum(axis=0)
                sums["cls"] += cls_val
                sums["asr"] += asr_val
                for key, val in parts.items():
                    extra_sums[key] = extra_sums.get(key, 0.0) + val
            for k in grads:
                grads[k] /= len(batch)
            params, state = adam_step(params, grads, state)
        breakdown = mtl_loss(sums["cls"] / n, (sums["asr"] / n,), MtlWeights((lam,)))
        if extra_sums:
            breakdown.kd_hard = extra_sums.get("kd_hard", 0.0) / n
            breakdown.kd_soft = extra_sums.get("kd_soft", 0.0) / n
        history.append(breakdown)
    return params, history


def _predict_with_heads(params, cache):
    preds, scores = [], []
    for _h, pooled in cache:
        logits = params["cls.weight"] @ pooled + params["cls.bias"]
        probs = softmax_t(logits, 1.0)
        preds.append(int(np.argmax(logits)))
        scores.append(float(probs[1]))
    return preds, scores


def _evaluate(params, cache, items) -> Metrics:
    preds, scores = _predict_with_heads(params, cache)
    labels = [item.label for item in items]
    m = classification_metrics(labels, preds)
    if 0 < sum(labels) < len(labels):
        m.auc = roc_auc(scores, labels)
    return m


def _finish_checkpoint(ckpt, params, event):
    new_tensors = {
        name: TensorEntry("f32", params[name].astype(np.float32)) for name in HEAD_NAMES
    }
    return derive(ckpt, new_tensors, event)


def train_heads(
    ckpt: Checkpoint,
    train_items: list[LabeledUtterance],
    lam: float = 0.1,
    epochs: int = DESK_EPOCHS,
    batch_size: int = DESK_BATCH,
    lr: float = DESK_LR,
    seed: int = 0,
    val_items: list[LabeledUtterance] | None = None,
) -> tuple[Checkpoint, TrainReport]:
    """Train both heads on ``cls + lam * ctc`` with the encoder frozen."""
    t0 = time.perf_counter()
    cache = _encode_cache(ckpt, train_items)
    labels = [item.label for item in train_items]

    def cls_loss_fn(i, logits):
        loss, grad = cross_entropy(logits, labels[i])
        return loss, grad, {}

    params, history = _run_heads(
        ckpt, cache, train_items, cls_loss_fn, lam, epochs, batch_size, lr, seed
    )
    val_metrics = None
    if val_items:
        val_metrics = _evaluate(params, _encode_cache(ckpt, val_items), val_items)
    out = _finish_checkpoint(
        ckpt, params, f"train-heads(lambda={lam},epochs={epochs},lr={lr},seed={seed})"
    )
    return out, TrainReport(history, val_metrics, time.perf_counter() - t0, seed)


def distill(
    teacher: Checkpoint,
    student: Checkpoint,
    items: list[LabeledUtterance],
    hyper: DistillHyper,
    lam: float = 0.1,
    epochs: int = DESK_EPOCHS,
    batch_size: int = DESK_BATCH,
    lr: float = DESK_LR,
    seed: int = 0,
    val_items: list[LabeledUtterance] | None = None,
) -> tuple[Checkpoint, TrainReport]:
    """Train the student's heads on ``kd + lam * ctc``; the teacher is frozen.

    The teacher's class logits are computed once per clip and treated as
    constants; a checksum asserts it is bitwise unchanged afterwards.
    """
    if teacher.config.conv_layers != student.config.conv_layers:
        raise ConfigError("teacher and student must share the conv geometry")
    if teacher.config.vocab_size != student.config.vocab_size:
        raise ConfigError("teacher and student must share the vocabulary")
    if teacher.config.num_classes != student.config.num_classes:
        raise ConfigError("teacher and student must share the class count")
    t0 = time.perf_counter()
    teacher_before = checkpoint_checksum(teacher)
    teacher_logits = []
    for item in items:
        feats = model.feature_extract(normalize(item.waveform), teacher)
        h = model.encode(feats, teacher)
        teacher_logits.append(model.classify(h, teacher).astype(np.float64))
    cache = _encode_cache(student, items)
    labels = [item.label for item in items]

    def cls_loss_fn(i, logits):
        loss, grad, hard, soft = _kd_parts(logits, teacher_logits[i], labels[i], hyper)
        return loss, grad, {"kd_hard": hard, "kd_soft": soft}

    params, history = _run_heads(
        student, cache, items, cls_loss_fn, lam, epochs, batch_size, lr, seed
    )
    if checkpoint_checksum(teacher) != teacher_before:
        raise ContractError("teacher checkpoint changed during distillation")
    val_metrics = None
    if val_items:
        val_metrics = _evaluate(params, _encode_cache(student, val_items), val_items)
    out = _finish_checkpoint(
        student,
        params,
        f"distill(alpha={hyper.alpha},T={hyper.temperature},lambda={lam},epochs={epochs},seed={seed})",
    )
    return out, TrainReport(history, val_metrics, time.perf_counter() - t0, seed)


@dataclass
class TrainProtocol:
    """Everything a grid-search branch needs to train reproducibly."""

    ckpt: Checkpoint
    epochs: int = 10
    batch_size: int = DESK_BATCH
    lr: float = DESK_LR
    seed: int = 0
    split_seed: int = 0
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)


def lambda_grid_search(
    candidates,
    dataset: list[LabeledUtterance],
    protocol: TrainProtocol,
):
    """Train per λ with identical seeds; best validation macro F1 wins.

    Ties go to the smallest λ. The encoder cache is shared across branches
    since every branch trains heads over the same frozen encoder.
    """
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise ParameterError("candidate list is empty")
    train_items, val_items, _test = split_dataset(
        dataset, protocol.ratios, protocol.split_seed
    )
    cache = _encode_cache(protocol.ckpt, train_items)
    val_cache = _encode_cache(protocol.ckpt, val_items)
    labels = [item.label for item in train_items]
    results: dict[float, Metrics] = {}
    for lam in candidates:

        def cls_loss_fn(i, logits):
            loss, grad = cross_entropy(logits, labels[i])
            return loss, grad, {}

        params, _history = _run_heads(
            protocol.ckpt,
            cache,
            train_items,
            cls_loss_fn,
            lam,
            protocol.epochs,
            protocol.batch_size,
            protocol.lr,
            protocol.seed,
        )
        results[lam] = _evaluate(params, val_cache, val_items)
    best = min(results, key=lambda lam: (-results[lam].macro_f1, lam))
    return best, results
