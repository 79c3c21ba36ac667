"""Variance-minimizing component sampling.

Given per-component error bounds d_i, the inclusion probabilities that
minimize the independent-sampling variance sum_i (1/pi_i - 1) d_i^2 subject
to sum_i pi_i = b have the water-filling closed form implemented by
:func:`optimal_probabilities`.  :func:`fixed_size_batch` coerces a sampled
index set to exactly b members, and :func:`dynamic_batch` grows b in chunks
of the resource size r until the variance bound passes a Chebyshev-style
accuracy test.

Component indices are 1-based; probability and bound vectors are arrays
whose position j corresponds to component j+1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

# Probabilities are floored here (without renormalizing) so that the
# corrected-model weights 1/pi stay finite; a zero bound means the numerator
# the weight multiplies is itself provably zero.
EPS_PROBABILITY = 1e-12


@dataclass(frozen=True)
class ProbabilityVector:
    """Inclusion probabilities with expected batch size target_b.

    Before the floor is applied the entries sum to target_b exactly; after
    flooring the sum can exceed it by at most p * EPS_PROBABILITY.
    """

    pi: np.ndarray
    target_b: int


@dataclass(frozen=True)
class Batch:
    """A realized index set together with the probabilities that drew it."""

    indices: np.ndarray
    pi: ProbabilityVector

    def __len__(self) -> int:
        return len(self.indices)


def _sorted_order(d: np.ndarray) -> np.ndarray:
    # ascending by (|d_i|, i); the index tiebreak keeps runs reproducible
    return np.lexsort((np.arange(len(d)), np.abs(d)))


def optimal_probabilities(d: np.ndarray, b: int) -> ProbabilityVector:
    """Variance-minimizing probabilities for expected batch size b.

    Sorting |d| ascending, the largest cutoff c with
    0 < b + c - p <= sum_{i<=c} |d_(i)| / |d_(c)| receives
    pi_(i) = (b + c - p) |d_(i)| / sum_{j<=c} |d_(j)| for i <= c and
    pi_(i) = 1 above the cutoff.  When the first c sorted entries are all
    zero the variance does not depend on their probabilities and the slack
    b + c - p is spread uniformly over them.
    """
    d = np.asarray(d, dtype=float)
    p = d.shape[0]
    if not 1 <= b <= p:
        raise ValueError(f"batch size {b} out of range 1..{p}")
    if not np.all(np.isfinite(d)):
        raise ValueError("error bounds must be finite")

    order = _sorted_order(d)
    sorted_d = np.abs(d)[order]
    prefix = np.cumsum(sorted_d)

    pi_sorted = np.ones(p)
    for c in range(p, p - b, -1):
        t = b + c - p
        dc = sorted_d[c - 1]
        if dc == 0.0:
            pi_sorted[:c] = t / c
            break
        if t * dc <= prefix[c - 1]:
            pi_sorted[:c] = t * sorted_d[:c] / prefix[c - 1]
            break

    pi = np.empty(p)
    pi[order] = pi_sorted
    pi = np.maximum(pi, EPS_PROBABILITY)
    return ProbabilityVector(pi=pi, target_b=int(b))


def independent_sample(
    pv: ProbabilityVector, rng: np.random.Generator
) -> np.ndarray:
    """One Bernoulli trial per component; returns sorted 1-based indices.

    Exactly p uniforms are consumed per call regardless of the outcome, so
    downstream draws replay identically under a fixed seed.
    """
    mask = rng.random(pv.pi.shape[0]) < pv.pi
    return np.flatnonzero(mask) + 1


def _coerce_batch(
    sampled: np.ndarray, d: np.ndarray, b: int
) -> np.ndarray:
    """Force the sampled set to exactly b members.

    Too-small sets gain the unsampled indices of largest |d| first; too-large
    sets lose the sampled indices of smallest |d| first.
    """
    p = d.shape[0]
    member = np.zeros(p, dtype=bool)
    member[np.asarray(sampled, dtype=int) - 1] = True
    count = int(member.sum())
    order = _sorted_order(d)
    if count < b:
        for pos in range(p - 1, -1, -1):
            j = order[pos]
            if not member[j]:
                member[j] = True
                count += 1
                if count == b:
                    break
    elif count > b:
        for pos in range(p):
            j = order[pos]
            if member[j]:
                member[j] = False
                count -= 1
                if count == b:
                    break
    return np.flatnonzero(member) + 1


def fixed_size_batch(
    d: np.ndarray, b: int, rng: np.random.Generator
) -> Batch:
    """Sample with the optimal probabilities, then coerce to size b exactly."""
    pv = optimal_probabilities(d, b)
    sampled = independent_sample(pv, rng)
    return Batch(indices=_coerce_batch(sampled, np.asarray(d, float), b), pi=pv)


def variance_upper_bound(
    d: np.ndarray, pi: Union[ProbabilityVector, np.ndarray]
) -> float:
    """Independent-sampling variance sum_i (1/pi_i - 1) d_i^2."""
    if isinstance(pi, ProbabilityVector):
        pi = pi.pi
    pi = np.asarray(pi, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(pi <= 0.0):
        raise ValueError("probabilities must be positive")
    terms = np.where(d == 0.0, 0.0, (1.0 / pi - 1.0) * d * d)
    return float(terms.sum())


def variance_general(
    d: np.ndarray, pi: np.ndarray, pi_pair: np.ndarray
) -> float:
    """Variance for an arbitrary sampling design with pair-inclusion
    probabilities pi_pair[i, j]; specializes to :func:`variance_upper_bound`
    under independence."""
    d = np.asarray(d, dtype=float)
    pi = np.asarray(pi, dtype=float)
    pi_pair = np.asarray(pi_pair, dtype=float)
    if not np.allclose(pi_pair, pi_pair.T, atol=1e-12, rtol=0.0):
        raise ValueError("pair-probability matrix must be symmetric")
    if not np.allclose(np.diag(pi_pair), pi, atol=1e-12, rtol=0.0):
        raise ValueError("diagonal of pair probabilities must equal pi")
    coeff = pi_pair / np.outer(pi, pi) - 1.0
    return float(d @ coeff @ d)


def dynamic_batch(
    d: np.ndarray,
    r: int,
    delta_k: float,
    C: float,
    pi_prob: float,
    rng: np.random.Generator,
) -> Batch:
    """Grow the batch size in chunks of r until the variance bound is small.

    Accepts the first batch whose variance bound V satisfies
    V <= (1 - pi_prob) C^2 delta_k^4.  Always terminates: at b = p every
    probability is 1 and the variance is exactly zero.
    """
    d = np.asarray(d, dtype=float)
    p = d.shape[0]
    if r < 1:
        raise ValueError("resource size must be at least 1")
    if C <= 0.0:
        raise ValueError("accuracy constant must be positive")
    if not 0.5 < pi_prob < 1.0:
        raise ValueError("probability parameter must lie in (1/2, 1)")
    if delta_k <= 0.0:
        raise ValueError("trust-region radius must be positive")

    threshold = (1.0 - pi_prob) * C * C * delta_k**4
    b = min(r, p)
    while True:
        batch = fixed_size_batch(d, b, rng)
        v = variance_upper_bound(d, batch.pi)
        if v > threshold and b < p:
            b = min(b + r, p)
            continue
        return batch


def chernoff_upper(b: int, delta: float, tail: str = "upper") -> float:
    """Tail bound for the realized size of an independent sample with
    expected size b: P[|I| >= (1+delta) b] <= exp(-b delta^2 / (2+delta)) and
    P[|I| <= (1-delta) b] <= exp(-b delta^2 / 2)."""
    if tail == "upper":
        if delta <= 0.0:
            raise ValueError("upper tail requires delta > 0")
        return math.exp(-b * delta * delta / (2.0 + delta))
    if tail == "lower":
        if not 0.0 < delta < 1.0:
            raise ValueError("lower tail requires delta in (0, 1)")
        return math.exp(-b * delta * delta / 2.0)
    raise ValueError("tail must be 'upper' or 'lower'")
