"""Disagreement ratios of classifier banks and empirical disagreement measures.

A bank of k classifiers on a c-class task "disagrees" on an input when all k
predicted labels are pairwise distinct. Over the full label grid [0, c)^k the
fraction of such tuples is the falling factorial c(c-1)...(c-k+1) over c^k.
Adding heads beyond c cannot create new disagreements, so k saturates at c.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "RatioResult",
    "disagreement_ratio_exact",
    "disagreement_ratio_bruteforce",
    "ratio_recurrence_check",
    "empirical_disagreement",
    "divergence_estimate",
    "montecarlo_random_bank_ratio",
    "BRUTEFORCE_LIMIT",
]

BRUTEFORCE_LIMIT = 10**7


@dataclass(frozen=True)
class RatioResult:
    c: int
    k: int
    numerator: int
    denominator: int

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    @property
    def value(self) -> float:
        return self.numerator / self.denominator


def _check(c: int, k: int) -> int:
    if c < 2 or k < 2:
        raise ValueError(f"need c >= 2 and k >= 2, got c={c}, k={k}")
    return min(k, c)


def disagreement_ratio_exact(c: int, k: int) -> RatioResult:
    keff = _check(c, k)
    return RatioResult(c, k, math.perm(c, keff), c**keff)


def disagreement_ratio_bruteforce(c: int, k: int) -> RatioResult:
    """Count all-distinct tuples by enumerating the label grid (saturated at k = c)."""
    keff = _check(c, k)
    if c**keff > BRUTEFORCE_LIMIT:
        raise ValueError(f"{c}^{keff} label tuples exceeds the enumeration limit {BRUTEFORCE_LIMIT}")
    hits = total = 0
    for labels in itertools.product(range(c), repeat=keff):
        total += 1
        if all(a != b for a, b in itertools.combinations(labels, 2)):
            hits += 1
    return RatioResult(c, k, hits, total)


def ratio_recurrence_check(c: int) -> list[tuple[int, Fraction]]:
    """Quotients P(c, k) / P(c, k-1) for k = 3 .. c+1."""
    if c < 2:
        raise ValueError("c must be >= 2")
    out = []
    for k in range(3, c + 2):
        q = disagreement_ratio_exact(c, k).fraction / disagreement_ratio_exact(c, k - 1).fraction
        out.append((k, q))
    return out


def empirical_disagreement(labels) -> float:
    """Mean over samples of the fraction of head pairs whose labels differ.

    ``labels`` is an (n, k) array of per-head predicted classes.
    """
    L = np.asarray(labels)
    if L.ndim != 2 or L.shape[0] < 1 or L.shape[1] < 2:
        raise ValueError(f"expected an (n >= 1, k >= 2) label array, got shape {L.shape}")
    k = L.shape[1]
    differ = sum((L[:, i] != L[:, j]).astype(np.int64) for i, j in itertools.combinations(range(k), 2))
    return float(np.mean(differ / math.comb(k, 2)))


def divergence_estimate(source, target) -> float:
    """2 |eps_S - eps_T| for one fixed bank: a lower bound on the divergence supremum."""
    return 2.0 * abs(empirical_disagreement(source) - empirical_disagreement(target))


def montecarlo_random_bank_ratio(c: int, k: int, n_samples: int, seed: int) -> float:
    keff = _check(c, k)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    draws = np.sort(rng.integers(0, c, size=(n_samples, keff)), axis=1)
    distinct = np.all(np.diff(draws, axis=1) != 0, axis=1)
    return float(distinct.mean())
