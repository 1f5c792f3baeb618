"""Connectionist Temporal Classification over blank-expanded targets.

The blank symbol is index 0. All recursions run in log space with
log-sum-exp; losses are per utterance (sum over time, no length
normalization). ``brute_force_ctc`` enumerates every frame path and is the
independent oracle for the forward algorithm.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ContractError, InfeasibleTargetError, OracleSizeError, ParameterError

BLANK = 0

_ORACLE_PATH_LIMIT = 10**7


def collapse(path) -> list[int]:
    """Merge adjacent repeats, then delete blanks."""
    out: list[int] = []
    prev = None
    for p in path:
        if p != prev:
            if p != BLANK:
                out.append(int(p))
            prev = p
    return out


def greedy_decode(logprobs: np.ndarray) -> list[int]:
    """Per-frame argmax (ties go to the lowest index), collapsed."""
    logprobs = np.asarray(logprobs)
    return collapse(np.argmax(logprobs, axis=1))


def _validate(logprobs: np.ndarray, target) -> tuple[np.ndarray, list[int]]:
    lp = np.asarray(logprobs, dtype=np.float64)
    if lp.ndim != 2:
        raise ParameterError(f"logprobs must be [T, V], got shape {lp.shape}")
    t, v = lp.shape
    row_sums = np.exp(lp).sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6):
        worst = float(np.max(np.abs(row_sums - 1.0)))
        raise ContractError(f"logprob rows must be normalized within 1e-6 (off by {worst:.3g})")
    target = [int(tok) for tok in target]
    if any(tok == BLANK for tok in target):
        raise ParameterError("target contains the blank token")
    if any(not 1 <= tok < v for tok in target):
        raise ParameterError(f"target tokens must be in [1, {v - 1}]")
    required = len(target) + sum(1 for a, b in zip(target, target[1:]) if a == b)
    if t < required:
        raise InfeasibleTargetError(
            f"target needs at least {required} frames, got {t}"
        )
    return lp, target


def _expand(target: list[int]) -> np.ndarray:
    expanded = [BLANK]
    for tok in target:
        expanded.extend((tok, BLANK))
    return np.asarray(expanded, dtype=np.int64)


def _forward_alphas(lp: np.ndarray, labels: np.ndarray) -> np.ndarray:
    t_max = lp.shape[0]
    s = labels.size
    allow_skip = np.zeros(s, dtype=bool)
    allow_skip[2:] = (labels[2:] != BLANK) & (labels[2:] != labels[:-2])
    alphas = np.full((t_max, s), -np.inf)
    alphas[0, 0] = lp[0, labels[0]]
    if s > 1:
        alphas[0, 1] = lp[0, labels[1]]
    neg_inf = np.array([-np.inf])
    for t in range(1, t_max):
        prev = alphas[t - 1]
        stay = prev
        left = np.concatenate((neg_inf, prev[:-1]))
        skip = np.concatenate((neg_inf, neg_inf, prev[:-2]))
        skip = np.where(allow_skip, skip, -np.inf)
        alphas[t] = np.logaddexp(np.logaddexp(stay, left), skip) + lp[t, labels]
    return alphas


def ctc_loss(logprobs: np.ndarray, target) -> float:
    """Negative log-probability of all paths collapsing to ``target``."""
    lp, target = _validate(logprobs, target)
    labels = _expand(target)
    alphas = _forward_alphas(lp, labels)
    tail = alphas[-1, -1]
    if labels.size > 1:
        tail = np.logaddexp(tail, alphas[-1, -2])
    return float(-tail)


def ctc_grad(logprobs: np.ndarray, target) -> np.ndarray:
    """Gradient of the loss with respect to pre-softmax logits, ``[T, V]``.

    Computed from the forward-backward (alpha-beta) recursions:
    ``grad = softmax(logits) - posterior``, so every row sums to zero.
    """
    lp, target = _validate(logprobs, target)
    labels = _expand(target)
    t_max, v = lp.shape
    s = labels.size
    allow_skip = np.zeros(s, dtype=bool)
    allow_skip[2:] = (labels[2:] != BLANK) & (labels[2:] != labels[:-2])
    alphas = _forward_alphas(lp, labels)

    betas = np.full((t_max, s), -np.inf)
    betas[-1, -1] = lp[-1, labels[-1]]
    if s > 1:
        betas[-1, -2] = lp[-1, labels[-2]]
    neg_inf = np.array([-np.inf])
    # Entering s+2 is allowed exactly when allow_skip[s+2] holds.
    skip_from = np.concatenate((allow_skip[2:], [False, False]))
    for t in range(t_max - 2, -1, -1):
        nxt = betas[t + 1]
        stay = nxt
        right = np.concatenate((nxt[1:], neg_inf))
        skip = np.concatenate((nxt[2:], neg_inf, neg_inf))
        skip = np.where(skip_from, skip, -np.inf)
        betas[t] = np.logaddexp(np.logaddexp(stay, right), skip) + lp[t, labels]

    log_p = alphas[-1, -1]
    if s > 1:
        log_p = np.logaddexp(log_p, alphas[-1, -2])

    # gamma[t, s] = alpha + beta - lp (both recursions include lp at t).
    gamma = alphas + betas - lp[:, labels]
    log_post = np.full((t_max, v), -np.inf)
    with np.errstate(divide="ignore"):  # log(0) -> -inf is the wanted value
        for sym in np.unique(labels):
            cols = gamma[:, labels == sym]
            m = cols.max(axis=1)
            safe = np.where(np.isfinite(m), m, 0.0)
            log_post[:, sym] = np.where(
                np.isfinite(m),
                safe + np.log(np.exp(cols - safe[:, None]).sum(axis=1)),
                -np.inf,
            )
    posterior = np.exp(log_post - log_p)
    return np.exp(lp) - posterior


def brute_force_ctc(logprobs: np.ndarray, target) -> float:
    """Enumerate all ``V^T`` frame paths; the reference for :func:`ctc_loss`."""
    lp, target = _validate(logprobs, target)
    t_max, v = lp.shape
    if v**t_max > _ORACLE_PATH_LIMIT:
        raise OracleSizeError(f"V^T = {v**t_max} exceeds the oracle limit {_ORACLE_PATH_LIMIT}")
    matched: list[float] = []
    for path in itertools.product(range(v), repeat=t_max):
        if collapse(path) == target:
            matched.append(float(sum(lp[t, sym] for t, sym in enumerate(path))))
    if not matched:
        raise InfeasibleTargetError("no path collapses to the target")
    m = max(matched)
    return float(-(m + np.log(np.exp(np.asarray(matched) - m).sum())))
