import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damc import losses
from damc.losses import AdaptationWeights
from damc.numerics import backward, grad_check

from conftest import bank_from_probs, random_bank

LN2 = math.log(2)


def uniform(k, c, batch=1):
    return bank_from_probs(*[np.full((batch, c), 1.0 / c)] * k)


def one_hot(labels, c):
    return np.eye(c)[labels]


class TestClassification:
    def test_perfect_heads_zero(self):
        y = np.array([0, 2, 1])
        out = bank_from_probs(one_hot(y, 3), one_hot(y, 3))
        assert losses.classification_loss(out, y).item() == pytest.approx(0.0, abs=1e-12)

    def test_uniform_two_class(self):
        assert losses.classification_loss(uniform(3, 2, 4), [0, 1, 1, 0]).item() == pytest.approx(LN2)

    def test_hand_value(self):
        out = bank_from_probs([0.5, 0.25, 0.25], [0.25, 0.5, 0.25])
        # true class 0: probabilities 0.5 and 0.25
        assert losses.classification_loss(out, [0]).item() == pytest.approx(1.5 * LN2, abs=1e-12)

    def test_label_count_mismatch(self):
        with pytest.raises(ValueError):
            losses.classification_loss(uniform(2, 3, 2), [0])

    def test_pseudo_label_cases(self):
        y = np.array([1, 0])
        assert losses.pseudo_label_loss(bank_from_probs(one_hot(y, 3), one_hot(y, 3)), y).item() == \
            pytest.approx(0.0, abs=1e-12)
        assert losses.pseudo_label_loss(uniform(2, 3, 2), y).item() == pytest.approx(math.log(3))


class TestPairDiscrepancy:
    def test_identical_heads(self):
        P = np.random.default_rng(0).dirichlet(np.ones(4), size=5)
        report = losses.pair_discrepancies(bank_from_probs(P, P, P))
        assert report.minimum == 0.0
        assert all(d == 0 for d in report.distances.values())

    def test_disjoint_one_hots(self):
        out = bank_from_probs(one_hot([0, 1, 2], 3), one_hot([1, 2, 0], 3))
        assert losses.pair_distance(out, 0, 1).item() == pytest.approx(2.0)

    def test_selects_closest_pair(self):
        a = [1.0, 0.0]
        b = [0.0, 1.0]
        c = [0.75, 0.25]
        out = bank_from_probs(a, b, c)
        report = losses.pair_discrepancies(out)
        assert report.distances == {(0, 1): 2.0, (0, 2): 0.5, (1, 2): 1.5}
        assert report.argmin == (0, 2) and report.minimum == 0.5

    def test_adversarial_value(self):
        out = bank_from_probs([1.0, 0.0], [0.0, 1.0], [0.75, 0.25])
        assert losses.adversarial_separation_loss(out, 0.3).item() == pytest.approx(0.15)
        P = [[0.2, 0.8]]
        assert losses.adversarial_separation_loss(bank_from_probs(P, P), 0.3).item() == 0.0

    def test_adversarial_only_touches_closest_pair(self):
        logits, build = random_bank(np.random.default_rng(3), 3, 4, 6)
        i, j = losses.pair_discrepancies(build()).argmin
        backward(losses.adversarial_separation_loss(build(), 1.0))
        untouched = ({0, 1, 2} - {i, j}).pop()
        assert np.all(logits[untouched].grad == 0)
        assert np.any(logits[i].grad != 0) and np.any(logits[j].grad != 0)


class TestTrace:
    def test_identical_one_hot_zero(self):
        h = one_hot([2, 0], 3)
        assert losses.trace_loss(bank_from_probs(h, h, h)).item() == 0.0
        assert losses.pair_trace_loss(bank_from_probs(h, h, h)).item() == 0.0

    def test_disjoint_one_hot_one(self):
        out = bank_from_probs(one_hot([0], 2), one_hot([1], 2))
        assert losses.trace_loss(out).item() == 1.0
        assert losses.pair_trace_loss(out).item() == 1.0

    @pytest.mark.parametrize("k,c", [(2, 2), (3, 3), (4, 5), (5, 2)])
    def test_uniform_closed_forms(self, k, c):
        out = uniform(k, c, 3)
        assert losses.trace_loss(out).item() == pytest.approx(1 - c ** (1 - k), abs=1e-12)
        assert losses.pair_trace_loss(out).item() == pytest.approx(math.comb(k, 2) * (1 - 1 / c), abs=1e-12)

    def test_pair_trace_three_uniform_binary(self):
        assert losses.pair_trace_loss(uniform(3, 2)).item() == pytest.approx(1.5, abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 4), st.integers(2, 5), st.integers(0, 2**31 - 1))
    def test_bounds(self, k, c, seed):
        P = np.random.default_rng(seed).dirichlet(np.ones(c), size=(k, 3))
        out = bank_from_probs(*P)
        t, pt = losses.trace_loss(out).item(), losses.pair_trace_loss(out).item()
        assert -1e-12 <= t <= 1 + 1e-12
        assert -1e-12 <= pt <= math.comb(k, 2) + 1e-12


class TestEntropies:
    def test_conditional_cases(self):
        assert losses.conditional_entropy(bank_from_probs(one_hot([0, 1], 3))).item() == pytest.approx(0.0, abs=1e-10)
        assert losses.conditional_entropy(uniform(2, 4, 3)).item() == pytest.approx(math.log(4))
        out = bank_from_probs([0.5, 0.5], [1.0, 0.0])
        assert losses.conditional_entropy(out).item() == pytest.approx(LN2 / 2, abs=1e-10)

    def test_marginal_cases(self):
        assert losses.marginal_entropy(uniform(2, 3, 4)).item() == pytest.approx(math.log(3))
        assert losses.marginal_entropy(bank_from_probs(one_hot([0, 0, 0], 3))).item() == pytest.approx(0.0, abs=1e-10)
        half = one_hot([0, 0, 1, 1], 2)
        assert losses.marginal_entropy(bank_from_probs(half, half)).item() == pytest.approx(LN2)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**31 - 1))
    def test_marginal_dominates_conditional(self, c, seed):
        # concavity of entropy: H(mean p) >= mean H(p)
        P = np.random.default_rng(seed).dirichlet(np.ones(c), size=(2, 7))
        out = bank_from_probs(*P)
        assert losses.marginal_entropy(out).item() >= losses.conditional_entropy(out).item() - 1e-12


class TestObjective:
    def test_all_zero_weights(self):
        out = uniform(3, 2)
        total = losses.adaptation_objective(out, [0], AdaptationWeights(0, 0, 0, 0))
        assert total.item() == 0.0

    def test_alpha_only_is_pair_trace(self):
        rng = np.random.default_rng(0)
        out = bank_from_probs(*rng.dirichlet(np.ones(3), size=(3, 4)))
        got = losses.adaptation_objective(out, None, AdaptationWeights(1, 0, 0, 0)).item()
        assert got == losses.pair_trace_loss(out).item()

    def test_hand_combination(self):
        w = AdaptationWeights(0.1, 0.1, 0.1, 0.01)
        got = losses.adaptation_objective(uniform(3, 2), [1], w).item()
        assert got == pytest.approx(0.1 * 1.5 + 0.1 * LN2 - 0.1 * LN2 + 0.01 * LN2, abs=1e-12)

    def test_terms_without_pseudo(self):
        assert set(losses.adaptation_terms(uniform(2, 2), None)) == {"pair_tr", "ent_c", "ent_m"}

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            AdaptationWeights(-0.1, 0, 0, 0)


LOSS_FNS = {
    "classification": lambda out, y: losses.classification_loss(out, y),
    "pseudo_label": lambda out, y: losses.pseudo_label_loss(out, y),
    "pair_distance": lambda out, y: losses.pair_distance(out, 0, out.k - 1),
    "adversarial": lambda out, y: losses.adversarial_separation_loss(out, 0.3),
    "trace": lambda out, y: losses.trace_loss(out),
    "pair_trace": lambda out, y: losses.pair_trace_loss(out),
    "conditional_entropy": lambda out, y: losses.conditional_entropy(out),
    "marginal_entropy": lambda out, y: losses.marginal_entropy(out),
    "objective": lambda out, y: losses.adaptation_objective(out, y, AdaptationWeights(0.5, 0.1, 0.1, 0.1)),
}


@pytest.mark.parametrize("name", sorted(LOSS_FNS))
@settings(max_examples=10, deadline=None)
@given(st.integers(2, 4), st.integers(2, 5), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_gradients_match_finite_differences(name, k, c, batch, seed):
    rng = np.random.default_rng(seed)
    logits, build = random_bank(rng, k, c, batch)
    y = rng.integers(0, c, batch)
    assert grad_check(lambda: LOSS_FNS[name](build(), y), logits) <= 1e-4


def test_pair_trace_gradient_k3_c4():
    logits, build = random_bank(np.random.default_rng(11), 3, 4, 5)
    assert grad_check(lambda: losses.pair_trace_loss(build()), logits) <= 1e-4
