import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grlimits.corpus import (
    ConstrainedFirstStep,
    CorpusGeometry,
    SamplingSpec,
    sample_first_step_binomial,
    sample_first_step_exact,
    sample_first_step_grouped,
    sample_first_step_normal,
)
from grlimits.errors import FeasibilityError, LyapunovError
from grlimits.relevance import BranchWeights, exponential_tier_model, uniform_model


class TestGeometry:
    def test_branch_size(self):
        g = CorpusGeometry(256, 4)
        assert g.n == 256**3
        assert g.size == 256**4
        assert g.log_size == pytest.approx(4 * math.log(256))

    @pytest.mark.parametrize("k,m", [(1, 3), (4, 0), (2.5, 2)])
    def test_rejects_bad_shape(self, k, m):
        with pytest.raises(ValueError):
            CorpusGeometry(k, m)

    def test_large_geometry_is_exact(self):
        g = CorpusGeometry(2**12, 26)
        assert g.n == 2**300


class TestSamplingSpec:
    def test_from_size_power_of_two_is_exact(self):
        g = CorpusGeometry(1024, 3)
        spec = SamplingSpec.from_size(g, 1024)
        assert spec.p == 2.0**-20
        assert spec.expected_size == 1024.0

    def test_from_p_round_trip(self):
        g = CorpusGeometry(64, 3)
        assert SamplingSpec.from_p(2.0**-8, g).expected_size == 1024.0

    @pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
    def test_rejects_bad_p(self, p):
        with pytest.raises(ValueError):
            SamplingSpec(p)

    def test_rejects_oversized(self):
        with pytest.raises(ValueError):
            SamplingSpec.from_size(CorpusGeometry(2, 2), 5)


class TestExactSampler:
    def test_certain_selection_keeps_everything(self, rng):
        bw = BranchWeights.from_leaf_weights(rng.random((5, 7)) + 0.1)
        cfs = sample_first_step_exact(bw, 1.0, rng)
        np.testing.assert_allclose(cfs.selected_mass, bw.totals)
        np.testing.assert_array_equal(cfs.selected_count, np.full(5, 7))

    def test_unit_weights_mass_equals_counts(self, rng):
        bw = uniform_model(CorpusGeometry(2, 2))
        for _ in range(20):
            cfs = sample_first_step_exact(bw, 0.5, rng)
            assert set(cfs.selected_count.tolist()) <= {0, 1, 2}
            np.testing.assert_allclose(cfs.selected_mass / bw.unit_weight, cfs.selected_count)

    def test_mean_total_mass(self, rng):
        # 64 * 4096 * 2^-8 kept documents on average
        bw = uniform_model(CorpusGeometry(64, 3))
        kept = np.array([sample_first_step_exact(bw, 2.0**-8, rng).selected_count.sum() for _ in range(1000)])
        se = kept.std(ddof=1) / math.sqrt(kept.size)
        assert abs(kept.mean() - 1024) < 3 * se

    def test_chunked_path_matches_distribution(self, rng):
        # more leaves than one chunk forces the blockwise loop
        bw = uniform_model(CorpusGeometry(2**12, 2))
        import grlimits.corpus as corpus

        old = corpus._CHUNK
        corpus._CHUNK = 1000
        try:
            cfs = sample_first_step_exact(bw, 0.5, rng)
        finally:
            corpus._CHUNK = old
        assert cfs.selected_count.sum() == pytest.approx(2**23, rel=0.01)

    def test_cap(self, rng):
        bw = uniform_model(CorpusGeometry(64, 3))
        with pytest.raises(FeasibilityError):
            sample_first_step_exact(bw, 0.5, rng, max_draws=1000)


class TestBinomialSampler:
    def test_certain_selection(self, rng):
        bw = uniform_model(CorpusGeometry(8, 3))
        np.testing.assert_array_equal(sample_first_step_binomial(bw, 1.0, rng).selected_count, 64)

    def test_unit_expected_count(self, rng):
        bw = uniform_model(CorpusGeometry(1024, 3))
        counts = sample_first_step_binomial(bw, 2.0**-20, rng).selected_count
        se = math.sqrt(1.0 / counts.size)
        assert abs(counts.mean() - 1.0) < 3 * se

    def test_needs_uniform_weights(self, rng):
        bw = BranchWeights.from_leaf_weights([[1.0, 2.0], [1.0, 1.0]])
        with pytest.raises(ValueError):
            sample_first_step_binomial(bw, 0.5, rng)

    def test_overflow(self, rng):
        with pytest.raises(OverflowError):
            sample_first_step_binomial(uniform_model(CorpusGeometry(2, 64)), 0.5, rng)


class TestGroupedSampler:
    def test_matches_exact_mean_mass(self):
        g = CorpusGeometry(16, 3)
        bw = exponential_tier_model(g, 5, 0.7, 1.0, np.random.default_rng(1))
        grouped = np.mean([sample_first_step_grouped(bw, 0.3, np.random.default_rng(s)).selected_mass
                           for s in range(400)], axis=0)
        exact = np.mean([sample_first_step_exact(bw, 0.3, np.random.default_rng(10_000 + s)).selected_mass
                         for s in range(400)], axis=0)
        np.testing.assert_allclose(grouped, 0.3 * bw.totals, rtol=0.05)
        np.testing.assert_allclose(exact, 0.3 * bw.totals, rtol=0.05)

    def test_falls_back_without_tiers(self, rng):
        bw = BranchWeights.from_leaf_weights([[1.0, 2.0], [3.0, 1.0]])
        cfs = sample_first_step_grouped(bw, 1.0, rng)
        np.testing.assert_allclose(cfs.selected_mass, [3.0, 4.0])


class TestNormalSampler:
    def test_moments(self, rng):
        # w = 100, A = 0.1, p = 0.5 -> Normal(50, 25)
        bw = BranchWeights(n=100, totals=np.full(100_000, 100.0), simpson=np.full(100_000, 0.1))
        s = sample_first_step_normal(bw, 0.5, rng, lyapunov_threshold=None).selected_mass
        assert abs(s.mean() - 50) < 3 * math.sqrt(25 / s.size)
        # variance of the sample variance is about 2 sigma^4 / N
        assert abs(s.var(ddof=1) - 25) < 3 * math.sqrt(2 * 25**2 / s.size)

    def test_degenerate_variance(self, rng):
        bw = BranchWeights(n=1, totals=np.array([4.0, 6.0]), simpson=np.zeros(2))
        s = sample_first_step_normal(bw, 0.25, rng, lyapunov_threshold=None).selected_mass
        np.testing.assert_array_equal(s, [1.0, 1.5])

    def test_counts_absent(self, rng):
        bw = uniform_model(CorpusGeometry(8, 3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert sample_first_step_normal(bw, 0.5, rng).selected_count is None

    def test_lyapunov_gate(self, rng):
        w = np.ones((3, 50))
        w[1, 0] = 1e6
        bw = BranchWeights.from_leaf_weights(w)
        with pytest.raises(LyapunovError) as exc:
            sample_first_step_normal(bw, 0.5, rng)
        assert exc.value.offending == (1,)

    def test_gate_needs_leaves(self, rng):
        bw = BranchWeights(n=10, totals=np.ones(3), simpson=np.full(3, 0.3))
        with pytest.raises(LyapunovError):
            sample_first_step_normal(bw, 0.5, rng)

    def test_truncation_warning(self, rng):
        bw = uniform_model(CorpusGeometry(4, 2))
        with pytest.warns(RuntimeWarning):
            sample_first_step_normal(bw, 0.01, rng, lyapunov_threshold=None)


class TestConstrainedFirstStep:
    def test_empty(self):
        assert ConstrainedFirstStep(np.zeros(3), np.zeros(3, dtype=int)).empty
        assert not ConstrainedFirstStep(np.array([0.0, 1e-300]), None).empty

    def test_support(self):
        cfs = ConstrainedFirstStep(np.array([0.0, 2.0, 1.0]), None)
        np.testing.assert_array_equal(cfs.support, [False, True, True])
        assert cfs.total_mass == 3.0


@settings(max_examples=40, deadline=None)
@given(
    weights=st.lists(st.lists(st.floats(0.01, 10), min_size=3, max_size=3), min_size=2, max_size=4),
    p=st.floats(0.05, 1.0),
    seed=st.integers(0, 2**32),
)
def test_kept_mass_never_exceeds_branch_total(weights, p, seed):
    bw = BranchWeights.from_leaf_weights(weights)
    cfs = sample_first_step_exact(bw, p, np.random.default_rng(seed))
    assert np.all(cfs.selected_mass <= bw.totals * (1 + 1e-12))
    assert np.all((cfs.selected_count == 0) == (cfs.selected_mass == 0))
