import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grlimits.corpus import ConstrainedFirstStep
from grlimits.decoder import apply_constraint, marginal_pair, predicted_marginal, truth_marginal
from grlimits.errors import EmptyCorpusError, EmptySupportError
from grlimits.relevance import BranchWeights


def _flat(weights):
    w = np.asarray(weights, dtype=float)
    return BranchWeights(n=1, totals=w, simpson=np.ones_like(w))


class TestApplyConstraint:
    def test_renormalizes(self):
        out = apply_constraint([0.2, 0.3, 0.5], [1, 0, 1])
        np.testing.assert_allclose(out, [2 / 7, 0, 5 / 7], rtol=1e-15)

    def test_all_valid_is_identity(self):
        probs = np.array([0.1, 0.2, 0.7])
        np.testing.assert_allclose(apply_constraint(probs, [1, 1, 1]), probs)

    def test_empty_support(self):
        with pytest.raises(EmptySupportError):
            apply_constraint([1.0, 0.0], [0, 1])

    def test_not_a_distribution(self):
        with pytest.raises(ValueError):
            apply_constraint([0.5, 0.6], [1, 1])

    @settings(max_examples=60)
    @given(arrays(float, 6, elements=st.floats(0.01, 1.0)), arrays(bool, 6))
    def test_output_is_distribution(self, raw, mask):
        probs = raw / raw.sum()
        if not mask.any():
            with pytest.raises(EmptySupportError):
                apply_constraint(probs, mask)
            return
        out = apply_constraint(probs, mask)
        assert out.sum() == pytest.approx(1.0)
        assert np.all(out[~mask] == 0)


class TestPredictedMarginal:
    @pytest.mark.parametrize("w,support,expected", [
        ((1, 1, 1, 1), (1, 0, 1, 0), (0.5, 0, 0.5, 0)),
        ((1, 3), (1, 1), (0.25, 0.75)),
        ((1, 3), (0, 1), (0, 1)),
    ])
    def test_values(self, w, support, expected):
        np.testing.assert_allclose(predicted_marginal(_flat(w), np.array(support, bool)), expected)

    def test_empty_support(self):
        with pytest.raises(EmptySupportError):
            predicted_marginal(_flat([1, 1]), np.array([False, False]))


class TestTruthMarginal:
    def test_counts(self):
        cfs = ConstrainedFirstStep(np.array([2.0, 0.0, 3.0]), np.array([2, 0, 3]))
        np.testing.assert_allclose(truth_marginal(cfs), [0.4, 0, 0.6])

    def test_one_hot(self):
        cfs = ConstrainedFirstStep(np.array([0.0, 0.7, 0.0]), None)
        np.testing.assert_array_equal(truth_marginal(cfs), [0, 1, 0])

    def test_symmetric(self):
        np.testing.assert_array_equal(truth_marginal(ConstrainedFirstStep(np.array([1.5, 1.5]), None)), [0.5, 0.5])

    def test_empty(self):
        with pytest.raises(EmptyCorpusError):
            truth_marginal(ConstrainedFirstStep(np.zeros(3), np.zeros(3, int)))


def test_marginal_pair_shares_support():
    bw = _flat([1.0, 2.0, 3.0])
    pair = marginal_pair(bw, ConstrainedFirstStep(np.array([0.5, 0.0, 3.0]), None))
    np.testing.assert_array_equal(pair.truth > 0, pair.predicted > 0)
    np.testing.assert_allclose(pair.predicted, [0.25, 0, 0.75])
