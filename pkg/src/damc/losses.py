"""Training objectives over a bank of softmax heads.

All losses are batch-averaged scalars (1x1 tensors) built from graph
operations, so they differentiate through whatever produced the bank output.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import SoftmaxBankOutput
from .numerics import Tensor, abs_, log, mul, tmean, tsum

__all__ = [
    "AdaptationWeights",
    "PairDiscrepancyReport",
    "classification_loss",
    "pair_discrepancies",
    "pair_distance",
    "adversarial_separation_loss",
    "trace_loss",
    "pair_trace_loss",
    "conditional_entropy",
    "marginal_entropy",
    "pseudo_label_loss",
    "adaptation_objective",
    "adaptation_terms",
]

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class AdaptationWeights:
    alpha_t: float = 0.5
    gamma1: float = 0.1
    gamma2: float = 0.1
    beta: float = 0.1

    def __post_init__(self):
        for name in ("alpha_t", "gamma1", "gamma2", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class PairDiscrepancyReport:
    distances: dict[tuple[int, int], float]
    argmin: tuple[int, int]
    minimum: float


def _one_hot(labels, c: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    out = np.zeros((labels.size, c))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _head_mean(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return mul(total, 1.0 / len(terms))


def classification_loss(out: SoftmaxBankOutput, labels) -> Tensor:
    """Cross-entropy averaged over the batch and over the k heads."""
    onehot = _one_hot(labels, out.c)
    if onehot.shape[0] != out.batch:
        raise ValueError(f"{onehot.shape[0]} labels for a batch of {out.batch}")
    return _head_mean([-tmean(tsum(mul(lp, onehot), axis=1)) for lp in out.log_probs])


def pseudo_label_loss(out: SoftmaxBankOutput, pseudo) -> Tensor:
    return classification_loss(out, pseudo)


def pair_distance(out: SoftmaxBankOutput, i: int, j: int) -> Tensor:
    """Batch mean of the per-sample L1 distance between heads i and j."""
    return tmean(tsum(abs_(out.probs[i] - out.probs[j]), axis=1))


def pair_discrepancies(out: SoftmaxBankOutput) -> PairDiscrepancyReport:
    P = out.arrays()
    distances = {
        (i, j): float(np.abs(P[i] - P[j]).sum(axis=1).mean())
        for i, j in itertools.combinations(range(out.k), 2)
    }
    # combinations() yields pairs lexicographically; min() keeps the first minimum
    argmin = min(distances, key=distances.__getitem__)
    return PairDiscrepancyReport(distances, argmin, distances[argmin])


def adversarial_separation_loss(out: SoftmaxBankOutput, alpha_s: float) -> Tensor:
    """``alpha_s`` times the distance of the closest head pair; to be maximized.

    Only the closest pair enters the graph, so only those heads receive gradient.
    """
    i, j = pair_discrepancies(out).argmin
    return mul(pair_distance(out, i, j), alpha_s)


def trace_loss(out: SoftmaxBankOutput) -> Tensor:
    """1 minus the per-class product of all heads' probabilities, summed over classes."""
    prod = out.probs[0]
    for p in out.probs[1:]:
        prod = mul(prod, p)
    return 1.0 - tmean(tsum(prod, axis=1))


def pair_trace_loss(out: SoftmaxBankOutput) -> Tensor:
    total = None
    for i, j in itertools.combinations(range(out.k), 2):
        term = 1.0 - tmean(tsum(mul(out.probs[i], out.probs[j]), axis=1))
        total = term if total is None else total + term
    return total


def conditional_entropy(out: SoftmaxBankOutput) -> Tensor:
    return _head_mean([-tmean(tsum(mul(p, lp), axis=1))
                       for p, lp in zip(out.probs, out.log_probs)])


def marginal_entropy(out: SoftmaxBankOutput) -> Tensor:
    """Entropy of each head's batch-mean prediction, averaged over heads."""
    terms = []
    for p in out.probs:
        mean = tmean(p, axis=0)
        terms.append(-tsum(mul(mean, log(mean, PROB_FLOOR))))
    return _head_mean(terms)


def adaptation_terms(out: SoftmaxBankOutput, pseudo) -> dict[str, Tensor]:
    """Unweighted target-phase terms; ``pseudo`` None drops the pseudo-label term."""
    terms = {
        "pair_tr": pair_trace_loss(out),
        "ent_c": conditional_entropy(out),
        "ent_m": marginal_entropy(out),
    }
    if pseudo is not None:
        terms["pseudo"] = pseudo_label_loss(out, pseudo)
    return terms


def combine_terms(terms: dict[str, Tensor], w: AdaptationWeights) -> Tensor:
    coeffs = {"pair_tr": w.alpha_t, "ent_c": w.gamma1, "ent_m": -w.gamma2, "pseudo": w.beta}
    total = Tensor(0.0)
    for name, t in terms.items():
        if coeffs[name]:
            total = total + mul(t, coeffs[name])
    return total


def adaptation_objective(out: SoftmaxBankOutput, pseudo, w: AdaptationWeights) -> Tensor:
    """alpha_t * pair_trace + gamma1 * H_cond - gamma2 * H_marg + beta * pseudo CE.

    ``pseudo`` may be None, in which case the pseudo-label term is dropped.
    """
    return combine_terms(adaptation_terms(out, pseudo), w)
