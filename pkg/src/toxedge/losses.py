"""Classification, multitask, and knowledge-distillation losses.

The multitask total is ``cls + sum(lambda_n * aux_n)``; this artifact uses
one auxiliary (CTC). Distillation blends hard-label cross-entropy (weight
``alpha``) with a temperature-softened KL term against the frozen teacher
(weight ``1 - alpha``, scaled by ``T**2`` so its gradient magnitude stays
comparable across temperatures). The KL direction is teacher || student.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, LabelError, ParameterError, ShapeError
from .kernels import log_softmax, softmax_t


@dataclass(frozen=True)
class MtlWeights:
    """One non-negative weight per auxiliary task."""

    lambdas: tuple[float, ...]

    def __post_init__(self):
        if any(l < 0 for l in self.lambdas):
            raise ParameterError(f"auxiliary weights must be >= 0, got {self.lambdas}")


@dataclass(frozen=True)
class DistillHyper:
    """Distillation blend ``alpha`` in [0, 1] and temperature > 0."""

    alpha: float
    temperature: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must be in [0, 1], got {self.alpha}")
        if not self.temperature > 0:
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")


@dataclass
class LossBreakdown:
    """All terms of one multitask loss evaluation."""

    cls_loss: float
    aux_losses: tuple[float, ...]
    lambdas: tuple[float, ...]
    total: float
    kd_soft: float | None = None
    kd_hard: float | None = None

    @property
    def asr_loss(self) -> float:
        return self.aux_losses[0]

    @property
    def lam(self) -> float:
        return self.lambdas[0]

    def to_dict(self) -> dict:
        d = {
            "cls_loss": self.cls_loss,
            "asr_loss": self.aux_losses[0] if self.aux_losses else 0.0,
            "lambda": self.lambdas[0] if self.lambdas else 0.0,
            "total": self.total,
        }
        if self.kd_soft is not None:
            d["kd_soft"] = self.kd_soft
        if self.kd_hard is not None:
            d["kd_hard"] = self.kd_hard
        return d


def cross_entropy(logits, label: int) -> tuple[float, np.ndarray]:
    """Stable ``-log softmax(logits)[label]`` plus its gradient."""
    if label not in (0, 1):
        raise LabelError(f"label must be 0 or 1, got {label}")
    z = np.asarray(logits, dtype=np.float64)
    log_probs = log_softmax(z)
    grad = np.exp(log_probs)
    grad[label] -= 1.0
    return float(-log_probs[label]), grad


def mtl_loss(cls: float, aux_losses, weights: MtlWeights) -> LossBreakdown:
    """Weighted multitask total with every part recorded."""
    aux = tuple(float(a) for a in aux_losses)
    if len(aux) != len(weights.lambdas):
        raise ParameterError(
            f"{len(aux)} auxiliary losses but {len(weights.lambdas)} weights"
        )
    total = float(cls) + sum(l * a for l, a in zip(weights.lambdas, aux))
    return LossBreakdown(float(cls), aux, tuple(weights.lambdas), total)


def kl_div(p, q) -> float:
    """``sum p * ln(p/q)`` with ``0 ln 0 = 0``; q floored at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"distributions differ in shape: {p.shape} vs {q.shape}")
    for name, dist in (("p", p), ("q", q)):
        if abs(float(dist.sum()) - 1.0) > 1e-6 or np.any(dist < 0):
            raise ContractError(f"{name} is not a probability distribution")
    q = np.maximum(q, 1e-12)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def _kd_parts(student_logits, teacher_logits, hard_label: int, hyper: DistillHyper):
    s = np.asarray(student_logits, dtype=np.float64)
    t = np.asarray(teacher_logits, dtype=np.float64)
    if s.shape != t.shape:
        raise ShapeError(f"student/teacher logits differ in shape: {s.shape} vs {t.shape}")
    alpha, temp = hyper.alpha, hyper.temperature
    hard, hard_grad = cross_entropy(s, hard_label)
    p = softmax_t(t, temp)
    q = softmax_t(s, temp)
    soft = temp * temp * kl_div(p, q)
    loss = alpha * hard + (1.0 - alpha) * soft
    grad = alpha * hard_grad + (1.0 - alpha) * temp * (q - p)
    return loss, grad, hard, soft


def kd_loss(
    student_logits,
    teacher_logits,
    hard_label: int,
    hyper: DistillHyper,
) -> tuple[float, np.ndarray]:
    """Distillation loss and its gradient w.r.t. the student logits.

    ``alpha * CE(student, hard) + (1-alpha) * T^2 * KL(soft_teacher || soft_student)``;
    the teacher is a constant (no gradient flows into it).
    """
    loss, grad, _hard, _soft = _kd_parts(student_logits, teacher_logits, hard_label, hyper)
    return loss, grad
