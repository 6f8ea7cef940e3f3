import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grlimits.beam import (
    BranchValuation,
    branch_values_max,
    branch_values_sum,
    instance_seed,
    nonrelevant_score_moments,
    rank_and_score,
    spike_experiment,
    summarize_rows,
)
from grlimits.errors import FeasibilityError
from grlimits.relevance import SpikeModel, spike_model

SINH_1 = 1.1752011936438014  # T = 1 mean of exp(U(-1, 1))


def _bv(values, relevant):
    return BranchValuation(np.array(values, float), "sum", "exact", np.array(relevant, bool))


class TestMoments:
    def test_unit_temperature(self):
        mean, var = nonrelevant_score_moments(1.0)
        assert mean == pytest.approx(SINH_1, rel=1e-15)
        assert var == pytest.approx(math.sinh(2) / 2 - SINH_1**2, rel=1e-14)

    @pytest.mark.parametrize("T", [0.5, 1.0, 2.0])
    def test_against_sampling(self, T):
        x = np.exp(np.random.default_rng(0).uniform(-1, 1, 400_000) / T)
        mean, var = nonrelevant_score_moments(T)
        assert x.mean() == pytest.approx(mean, rel=5e-3)
        assert x.var() == pytest.approx(var, rel=2e-2)


class TestRankAndScore:
    def test_perfect(self):
        rm = rank_and_score(_bv([5, 1, 3], [1, 0, 1]), cutoff=2)
        assert rm.recall == 1.0 and rm.precision_at_1 == 1

    def test_miss(self):
        rm = rank_and_score(_bv([1, 5, 3], [1, 0, 0]), cutoff=1)
        assert rm.recall == 0.0 and rm.precision_at_1 == 0

    def test_ties_prefer_lower_index(self):
        rm = rank_and_score(_bv([2, 2, 2], [0, 1, 0]), cutoff=1)
        assert rm.precision_at_1 == 0
        rm = rank_and_score(_bv([2, 2, 2], [1, 0, 0]), cutoff=1)
        assert rm.precision_at_1 == 1

    def test_default_cutoff_is_relevant_count(self):
        assert rank_and_score(_bv([3, 2, 1, 0], [1, 0, 1, 0])).cutoff == 2

    def test_no_relevant(self):
        with pytest.raises(ValueError):
            rank_and_score(_bv([1, 2], [0, 0]))

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.floats(0, 100), st.booleans()), min_size=1, max_size=30).filter(
        lambda xs: any(r for _, r in xs)))
    def test_recall_in_unit_interval(self, xs):
        rm = rank_and_score(_bv([v for v, _ in xs], [r for _, r in xs]))
        assert 0.0 <= rm.recall <= 1.0
        assert rm.relevant_branch_count == sum(r for _, r in xs)


def _tiny_spike(logits_by_branch, n, T=1.0):
    br, leaf, lg = [], [], []
    for b, items in logits_by_branch.items():
        for j, s in items:
            br.append(b)
            leaf.append(j)
            lg.append(s)
    k = 1 + max(logits_by_branch)
    return SpikeModel(k=k, n=n, lam=0.0, delta=0.0, Delta=0.0, temperature=T,
                      relevant_branch=np.array(br, int), relevant_leaf=np.array(leaf, int),
                      relevant_logits=np.array(lg, float))


class TestBranchValues:
    def test_all_relevant_exact(self, rng):
        sm = _tiny_spike({0: [(0, 0.0), (1, 0.0)]}, n=2)
        bv = branch_values_sum(sm, "exact", rng)
        assert bv.values[0] == pytest.approx(2.0)

    def test_exact_sum_matches_moments(self):
        sm = spike_model(64, 4096, 0.0, np.random.default_rng(0))
        bv = branch_values_sum(sm, "exact", np.random.default_rng(1))
        mean, var = nonrelevant_score_moments(1.0)
        assert bv.values.mean() == pytest.approx(4096 * mean, rel=1e-3)

    def test_normal_approx_needs_large_branches(self, rng):
        sm = spike_model(64, 1000, 0.1, rng)
        with pytest.raises(ValueError):
            branch_values_sum(sm, "normal_approx", rng)

    def test_exact_cap(self, rng):
        sm = spike_model(64, 2**20, 0.1, rng)
        with pytest.raises(FeasibilityError):
            branch_values_sum(sm, "exact", rng, max_draws=1000)

    def test_unknown_mode(self, rng):
        with pytest.raises(ValueError):
            branch_values_sum(spike_model(8, 100, 0.5, rng), "fast", rng)

    def test_max_dominance(self, rng):
        sm = spike_model(4096, 2**25, 0.05, rng)
        bv = branch_values_max(sm, "normal_approx", rng)
        assert bv.values[~bv.relevant].max() <= math.e
        assert bv.values[bv.relevant].min() >= math.exp(sm.delta - sm.Delta)

    def test_max_exact_matches_order_statistic(self):
        sm = spike_model(256, 2000, 0.0, np.random.default_rng(2))
        exact = branch_values_max(sm, "exact", np.random.default_rng(3)).values
        approx = branch_values_max(sm, "normal_approx", np.random.default_rng(4)).values
        # both are the max of 2000 exp(U(-1, 1)) draws; the mean sits just under e
        assert exact.mean() == pytest.approx(approx.mean(), rel=2e-3)
        assert exact.max() <= math.e and approx.max() <= math.e


class TestSpikeExperiment:
    def test_rows_sorted_and_complete(self):
        rows = spike_experiment(256, 2**14, [0.2, 0.1], [2.0, 1.0], 3, seed=1)
        keys = [(r.lam, r.temperature, r.seed_index) for r in rows]
        assert keys == sorted(keys) and len(keys) == 12

    def test_worker_independent(self):
        a = spike_experiment(256, 2**14, [0.1], [1.0], 6, seed=2, workers=1)
        b = spike_experiment(256, 2**14, [0.1], [1.0], 6, seed=2, workers=3)
        assert a == b

    def test_instances_shared_across_temperatures(self):
        assert instance_seed(7, 64, 100, 0.05, 1.0, 3) == instance_seed(7, 64, 100, 0.05, 1.0, 3)
        rows = spike_experiment(256, 2**14, [0.1], [0.5, 2.0], 2, seed=4)
        by_t = {}
        for r in rows:
            by_t.setdefault(r.seed_index, set()).add(r.seed)
        assert all(len(s) == 1 for s in by_t.values())

    def test_maxheap_perfect(self):
        rows = spike_experiment(1024, 2**20, [0.05, 0.4], [1.0], 5, seed=3, valuation="max")
        assert all(r.recall == 1.0 for r in rows)

    def test_low_temperature_perfect(self):
        rows = spike_experiment(1024, 2**25, [0.05], [0.5], 5, seed=3)
        assert all(r.recall == 1.0 for r in rows)

    def test_within_bound_only_at_unit_temperature(self):
        rows = spike_experiment(256, 2**14, [0.1], [1.0, 2.0], 2, seed=5)
        assert {r.within_bound is None for r in rows} == {False, True}

    def test_summary(self):
        rows = spike_experiment(256, 2**14, [0.1, 0.2], [1.0], 4, seed=6)
        summary = summarize_rows(rows)
        assert [(s.lam, s.seeds) for s in summary] == [(0.1, 4), (0.2, 4)]
        lo, hi = summary[0].ci95
        assert lo <= summary[0].mean_recall <= hi
