"""Linear-chain CRF over per-token emission scores.

A tag path ``y_1..y_T`` is scored as

    score(y) = trans[START, y_1] + sum_t emissions[t, y_t]
             + sum_t trans[y_t, y_{t+1}] + trans[y_T, STOP]

and trained by negative log-likelihood: ``log Z - score(gold)``, where the
log-partition ``log Z`` runs over all K^T paths via the forward recursion in
log space. Decoding is max-product (Viterbi). Brute-force enumeration
versions of both quantities are provided as test oracles.

START and STOP live as two extra rows/columns of the transition matrix, so
emission matrices stay purely (T, K).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import TagSet
from .errors import ShapeError, TrainingDiverged

NEG_INF = float("-inf")

BRUTE_FORCE_LIMIT = 10 ** 6


def logsumexp(a: np.ndarray, axis=None):
    """Stable log(sum(exp(a))) that tolerates -inf entries."""
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m_safe), axis=axis))
    if axis is None:
        return out + m_safe.item()
    return out + np.squeeze(m_safe, axis=axis)


@dataclass
class TransitionMatrix:
    """(K+2) x (K+2) transition scores with reserved START/STOP indices.

    Real tags occupy indices [0, K); START is K, STOP is K+1. Transitions
    into START and out of STOP are structurally impossible and pinned to
    -inf; they are never updated (their gradients are identically zero).
    """

    scores: np.ndarray
    n_tags: int

    def __post_init__(self):
        expected = (self.n_tags + 2, self.n_tags + 2)
        if self.scores.shape != expected:
            raise ShapeError(
                f"transition matrix has shape {self.scores.shape}, "
                f"expected {expected}"
            )

    @property
    def start(self) -> int:
        return self.n_tags

    @property
    def stop(self) -> int:
        return self.n_tags + 1

    @classmethod
    def zeros(cls, n_tags: int) -> "TransitionMatrix":
        scores = np.zeros((n_tags + 2, n_tags + 2))
        scores[:, n_tags] = NEG_INF   # into START
        scores[n_tags + 1, :] = NEG_INF  # out of STOP
        return cls(scores, n_tags)

    def copy(self) -> "TransitionMatrix":
        return TransitionMatrix(self.scores.copy(), self.n_tags)


@dataclass
class TagPath:
    """A decoded tag sequence (real tag ids only) and its path score."""

    tags: list[int]
    score: float


def _check_instance(emissions: np.ndarray, trans: TransitionMatrix) -> np.ndarray:
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[0] < 1:
        raise ShapeError(f"emissions must be (T, K) with T >= 1, got {emissions.shape}")
    if emissions.shape[1] != trans.n_tags:
        raise ShapeError(
            f"emissions have {emissions.shape[1]} tags, transitions expect "
            f"{trans.n_tags}"
        )
    if not np.all(np.isfinite(emissions)):
        raise TrainingDiverged("emissions contain non-finite entries")
    return emissions


def _path_ids(path) -> list[int]:
    tags = list(path.tags) if isinstance(path, TagPath) else list(path)
    return tags


def path_score(emissions: np.ndarray, trans: TransitionMatrix,
               path: Sequence[int] | TagPath) -> float:
    """Unnormalized score of one tag path (START and STOP terms included)."""
    emissions = _check_instance(emissions, trans)
    tags = _path_ids(path)
    T, K = emissions.shape
    if len(tags) != T:
        raise ShapeError(f"path length {len(tags)} != sequence length {T}")
    if any(not 0 <= y < K for y in tags):
        raise ValueError("path contains ids outside the real tag range")
    s = trans.scores[trans.start, tags[0]]
    s += sum(emissions[t, y] for t, y in enumerate(tags))
    s += sum(trans.scores[a, b] for a, b in zip(tags, tags[1:]))
    s += trans.scores[tags[-1], trans.stop]
    return float(s)


def forward_alphas(emissions: np.ndarray, trans: TransitionMatrix) -> np.ndarray:
    """Forward-recursion log scores: alphas[t, b] = log-sum over all prefixes
    ending in tag b at position t."""
    T, K = emissions.shape
    inner = trans.scores[:K, :K]
    alphas = np.empty((T, K))
    alphas[0] = trans.scores[trans.start, :K] + emissions[0]
    for t in range(1, T):
        alphas[t] = logsumexp(alphas[t - 1][:, None] + inner, axis=0) + emissions[t]
    return alphas


def backward_betas(emissions: np.ndarray, trans: TransitionMatrix) -> np.ndarray:
    """Backward analogue: betas[t, a] = log-sum over all suffixes from tag a
    at position t (including the STOP transition)."""
    T, K = emissions.shape
    inner = trans.scores[:K, :K]
    betas = np.empty((T, K))
    betas[T - 1] = trans.scores[:K, trans.stop]
    for t in range(T - 2, -1, -1):
        betas[t] = logsumexp(inner + (emissions[t + 1] + betas[t + 1])[None, :],
                             axis=1)
    return betas


def log_partition(emissions: np.ndarray, trans: TransitionMatrix) -> float:
    """log of the sum of exp(path_score) over all K^T tag paths."""
    emissions = _check_instance(emissions, trans)
    alphas = forward_alphas(emissions, trans)
    K = emissions.shape[1]
    return float(logsumexp(alphas[-1] + trans.scores[:K, trans.stop]))


def nll_loss(emissions: np.ndarray, trans: TransitionMatrix,
             gold: Sequence[int] | TagPath) -> float:
    """Negative log-likelihood of the gold path: log Z - score(gold). Always >= 0."""
    return log_partition(emissions, trans) - path_score(emissions, trans, gold)


def nll_gradients(emissions: np.ndarray, trans: TransitionMatrix,
                  gold: Sequence[int] | TagPath
                  ) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus analytic gradients w.r.t. emissions and transitions.

    The gradient of log Z is the model expectation of each score term
    (posterior unary and pairwise marginals from the forward-backward
    recursions); the gradient of the gold score subtracts the observed
    counts. Structural -inf entries receive an exactly-zero gradient.
    """
    emissions = _check_instance(emissions, trans)
    gold_tags = _path_ids(gold)
    T, K = emissions.shape
    if len(gold_tags) != T:
        raise ShapeError(f"gold length {len(gold_tags)} != sequence length {T}")

    alphas = forward_alphas(emissions, trans)
    betas = backward_betas(emissions, trans)
    log_z = float(logsumexp(alphas[-1] + trans.scores[:K, trans.stop]))
    if not np.isfinite(log_z):
        raise ValueError("no admissible tag path under the transition matrix")

    loss = log_z - path_score(emissions, trans, gold_tags)

    # Unary marginals P(y_t = k | X); exp(-inf) underflows to exactly 0.
    unary = np.exp(alphas + betas - log_z)
    d_emissions = unary.copy()
    d_emissions[np.arange(T), gold_tags] -= 1.0

    d_trans = np.zeros_like(trans.scores)
    inner = trans.scores[:K, :K]
    for t in range(T - 1):
        # P(y_t = a, y_{t+1} = b | X)
        joint = (alphas[t][:, None] + inner
                 + (emissions[t + 1] + betas[t + 1])[None, :] - log_z)
        d_trans[:K, :K] += np.exp(joint)
    d_trans[trans.start, :K] += unary[0]
    d_trans[:K, trans.stop] += unary[-1]
    d_trans[trans.start, gold_tags[0]] -= 1.0
    for a, b in zip(gold_tags, gold_tags[1:]):
        d_trans[a, b] -= 1.0
    d_trans[gold_tags[-1], trans.stop] -= 1.0
    return loss, d_emissions, d_trans


def viterbi_decode(emissions: np.ndarray, trans: TransitionMatrix) -> TagPath:
    """Maximum-scoring tag path; ties resolve to the lowest tag index.

    The returned score is recomputed with :func:`path_score` so it is
    bit-identical to scoring the same path externally.
    """
    emissions = _check_instance(emissions, trans)
    T, K = emissions.shape
    inner = trans.scores[:K, :K]
    delta = trans.scores[trans.start, :K] + emissions[0]
    backptr = np.empty((T, K), dtype=np.intp)
    for t in range(1, T):
        candidates = delta[:, None] + inner
        backptr[t] = np.argmax(candidates, axis=0)  # first max = lowest index
        delta = candidates[backptr[t], np.arange(K)] + emissions[t]
    final = delta + trans.scores[:K, trans.stop]
    best = int(np.argmax(final))
    tags = [best]
    for t in range(T - 1, 0, -1):
        best = int(backptr[t, best])
        tags.append(best)
    tags.reverse()
    return TagPath(tags, path_score(emissions, trans, tags))


def brute_force_partition(emissions: np.ndarray, trans: TransitionMatrix) -> float:
    """Exhaustive log-partition over all K^T paths. Test oracle only."""
    emissions = _check_instance(emissions, trans)
    T, K = emissions.shape
    _refuse_if_huge(T, K)
    scores = [path_score(emissions, trans, path)
              for path in itertools.product(range(K), repeat=T)]
    return float(logsumexp(np.array(scores)))


def brute_force_decode(emissions: np.ndarray, trans: TransitionMatrix) -> TagPath:
    """Exhaustive argmax over all K^T paths. Test oracle only.

    Ties resolve to the lexicographically smallest path, which may differ
    from Viterbi's per-step tie-breaking; the scores always agree.
    """
    emissions = _check_instance(emissions, trans)
    T, K = emissions.shape
    _refuse_if_huge(T, K)
    best_path, best_score = None, NEG_INF
    for path in itertools.product(range(K), repeat=T):
        s = path_score(emissions, trans, path)
        if s > best_score:
            best_path, best_score = path, s
    return TagPath(list(best_path), best_score)


def _refuse_if_huge(T: int, K: int) -> None:
    if K ** T > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"brute force refused: {K}^{T} paths exceed {BRUTE_FORCE_LIMIT}"
        )


def constrain_transitions(trans: TransitionMatrix,
                          tagset: TagSet) -> TransitionMatrix:
    """Decode-time mask: forbid transitions that would break BIO structure.

    An ``I-c`` tag may only follow ``B-c`` or ``I-c`` of the same class;
    everything else into it (O, other classes, START) is set to -inf.
    Intended for prediction; training normally stays unconstrained.
    """
    if trans.n_tags != tagset.n_tags:
        raise ShapeError(
            f"transition matrix has {trans.n_tags} tags, tag set has "
            f"{tagset.n_tags}"
        )
    masked = trans.copy()
    for b, name in enumerate(tagset.tags):
        if not name.startswith("I-"):
            continue
        label = name[2:]
        allowed = {tagset.tag_id(f"B-{label}"), tagset.tag_id(f"I-{label}")}
        for a in range(trans.n_tags + 2):
            if a not in allowed:
                masked.scores[a, b] = NEG_INF
    return masked
