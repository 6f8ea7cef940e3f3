"""First-step branch valuation and ranking on the spike relevance model.

A branch is valued either by the sum of its leaf scores (the marginal
used by ordinary beam search) or by its best leaf (max-heap valuation).
Scores are ``exp(logit / T)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bounds import recall_upper_bound
from .errors import FeasibilityError
from .relevance import SpikeModel, spike_model
from .seeds import mix, rng_for

__all__ = [
    "BranchValuation",
    "RankMetrics",
    "SpikeRow",
    "nonrelevant_score_moments",
    "branch_values_sum",
    "branch_values_max",
    "rank_and_score",
    "spike_experiment",
    "summarize_rows",
]

SCORE_MODES = ("exact", "normal_approx")
DEFAULT_MAX_DRAWS = 2**28
MIN_CLT_BRANCH = 10_000
_CHUNK = 2**22


@dataclass(frozen=True, eq=False)
class BranchValuation:
    values: np.ndarray
    mode: str
    score_mode: str
    relevant: np.ndarray
    # branch holding the single highest-scoring document, when known
    argmax_branch: int | None = None


@dataclass(frozen=True)
class RankMetrics:
    recall: float
    precision_at_1: int
    cutoff: int
    relevant_branch_count: int
    top_has_argmax: bool | None = None


def nonrelevant_score_moments(temperature: float) -> tuple[float, float]:
    """Mean and variance of ``exp(X / T)`` for ``X ~ Uniform(-1, 1)``."""
    t = float(temperature)
    mean = t * math.sinh(1.0 / t)
    second = 0.5 * t * math.sinh(2.0 / t)
    return mean, second - mean * mean


def _relevant_parts(sm: SpikeModel):
    counts = sm.branch_counts
    scores = np.exp(sm.relevant_logits / sm.temperature)
    return counts, scores


def _known_argmax(sm: SpikeModel) -> int | None:
    # Non-relevant logits never exceed 1, so a relevant logit above 1 wins.
    if sm.relevant_count and sm.relevant_logits.max() > 1.0:
        return int(sm.relevant_branch[np.argmax(sm.relevant_logits)])
    return None


def _check_mode(score_mode):
    if score_mode not in SCORE_MODES:
        raise ValueError(f"score_mode must be one of {SCORE_MODES}, got {score_mode!r}")


def _enumerate_background(sm: SpikeModel, rng, max_draws, reduce):
    """Draw every non-relevant logit; returns per-branch reduction and global max logit."""
    k, n = sm.k, sm.n
    if k * n > max_draws:
        raise FeasibilityError(f"exact scoring needs {k * n} leaf draws (cap {max_draws})")
    out = np.empty(k)
    top_logit = -np.inf
    top_branch = -1
    rows = max(1, _CHUNK // n)
    for start in range(0, k, rows):
        stop = min(k, start + rows)
        logits = rng.uniform(-1.0, 1.0, size=(stop - start, n))
        sel = (sm.relevant_branch >= start) & (sm.relevant_branch < stop)
        logits[sm.relevant_branch[sel] - start, sm.relevant_leaf[sel]] = np.nan
        block_max = np.nanmax(logits, axis=1, initial=-np.inf)
        j = int(np.argmax(block_max))
        if block_max[j] > top_logit:
            top_logit, top_branch = block_max[j], start + j
        scores = np.exp(logits / sm.temperature)
        out[start:stop] = reduce(scores)
    return out, top_logit, top_branch


def _exact_argmax(sm, top_logit, top_branch):
    if sm.relevant_count and sm.relevant_logits.max() > top_logit:
        return int(sm.relevant_branch[np.argmax(sm.relevant_logits)])
    return int(top_branch)


def branch_values_sum(
    sm: SpikeModel,
    score_mode: str,
    rng: np.random.Generator,
    max_draws: int = DEFAULT_MAX_DRAWS,
) -> BranchValuation:
    """Marginal (sum-of-scores) value of every first-token branch."""
    _check_mode(score_mode)
    counts, rel_scores = _relevant_parts(sm)
    increment = np.bincount(sm.relevant_branch, weights=rel_scores, minlength=sm.k)
    if score_mode == "exact":
        background, top_logit, top_branch = _enumerate_background(
            sm, rng, max_draws, lambda s: np.nansum(s, axis=1)
        )
        argmax = _exact_argmax(sm, top_logit, top_branch)
    else:
        if sm.n < MIN_CLT_BRANCH:
            raise ValueError(f"normal approximation needs n >= {MIN_CLT_BRANCH}, got {sm.n}")
        mean, var = nonrelevant_score_moments(sm.temperature)
        others = sm.n - counts
        background = np.maximum(rng.normal(others * mean, np.sqrt(others * var)), 0.0)
        argmax = _known_argmax(sm)
    return BranchValuation(background + increment, "sum", score_mode, counts > 0, argmax)


def branch_values_max(
    sm: SpikeModel,
    score_mode: str,
    rng: np.random.Generator,
    max_draws: int = DEFAULT_MAX_DRAWS,
) -> BranchValuation:
    """Max-heap value: the best leaf score in each branch.

    ``normal_approx`` draws the non-relevant maximum directly through the
    inverse CDF of the largest of ``n'`` uniforms, ``U**(1/n')``.
    """
    _check_mode(score_mode)
    counts, rel_scores = _relevant_parts(sm)
    rel_max = np.zeros(sm.k)
    np.maximum.at(rel_max, sm.relevant_branch, rel_scores)
    if score_mode == "exact":
        background, top_logit, top_branch = _enumerate_background(
            sm, rng, max_draws, lambda s: np.nanmax(s, axis=1, initial=0.0)
        )
        argmax = _exact_argmax(sm, top_logit, top_branch)
    else:
        others = sm.n - counts
        u = rng.random(sm.k)
        with np.errstate(divide="ignore"):
            u_max = np.exp(np.log(u) / others)
        background = np.where(others > 0, np.exp((2.0 * u_max - 1.0) / sm.temperature), 0.0)
        argmax = _known_argmax(sm)
    return BranchValuation(np.maximum(background, rel_max), "max", score_mode, counts > 0, argmax)


def rank_and_score(bv: BranchValuation, cutoff: int | None = None) -> RankMetrics:
    """Recall of relevant branches in the top ``cutoff`` and precision@1.

    Ties go to the lower branch index.
    """
    relevant = np.asarray(bv.relevant, dtype=bool)
    n_rel = int(relevant.sum())
    if n_rel == 0:
        raise ValueError("no relevant branch to rank")
    cutoff = n_rel if cutoff is None else int(cutoff)
    values = np.asarray(bv.values, dtype=float)
    order = np.lexsort((np.arange(len(values)), -values))
    top = order[:cutoff]
    hit = int(relevant[top].sum())
    argmax_hit = None if bv.argmax_branch is None else bool(order[0] == bv.argmax_branch)
    return RankMetrics(
        recall=hit / n_rel,
        precision_at_1=int(relevant[order[0]]),
        cutoff=cutoff,
        relevant_branch_count=n_rel,
        top_has_argmax=argmax_hit,
    )


@dataclass(frozen=True)
class SpikeRow:
    k: int
    n: int
    lam: float
    temperature: float
    seed_index: int
    seed: int
    valuation: str
    score_mode: str
    delta_factor: float
    recall: float
    precision_at_1: int
    top_has_argmax: bool | None
    relevant_branch_count: int
    relevant_count: int
    bound: float

    @property
    def within_bound(self) -> bool | None:
        """Recall against the ceiling (plus 0.05 slack); only judged at T = 1."""
        if self.temperature != 1.0:
            return None
        return self.recall <= self.bound + 0.05


def instance_seed(master: int, k: int, n: int, lam: float, delta_factor: float, index: int) -> int:
    # Independent of temperature, valuation and score mode, so every variant
    # is scored on the same relevance instances.
    return mix(master, ["spike", k, n, float(lam), float(delta_factor)], index)


def spike_experiment(
    k: int,
    n: int,
    lambda_grid: Sequence[float],
    temperature_grid: Sequence[float],
    seeds: int,
    score_mode: str = "normal_approx",
    seed: int = 0,
    valuation: str = "sum",
    Delta_factor: float = 1.0,
    workers: int = 1,
    max_draws: int = DEFAULT_MAX_DRAWS,
) -> list[SpikeRow]:
    """One row per (lambda, T, seed index), ordered by that key."""
    if not lambda_grid or not temperature_grid or seeds < 1:
        raise ValueError("grids must be non-empty and seeds positive")
    _check_mode(score_mode)
    value_fn = {"sum": branch_values_sum, "max": branch_values_max}[valuation]

    def one(job):
        lam, T, s = job
        iseed = instance_seed(seed, k, n, lam, Delta_factor, s)
        sm = spike_model(k, n, lam, rng_for(iseed), Delta_factor=Delta_factor, temperature=T)
        bv = value_fn(sm, score_mode, rng_for(iseed, [valuation, score_mode, float(T)]), max_draws)
        rm = rank_and_score(bv)
        return SpikeRow(
            k=k, n=n, lam=float(lam), temperature=float(T), seed_index=s, seed=iseed,
            valuation=valuation, score_mode=score_mode, delta_factor=float(Delta_factor),
            recall=rm.recall, precision_at_1=rm.precision_at_1, top_has_argmax=rm.top_has_argmax,
            relevant_branch_count=rm.relevant_branch_count, relevant_count=sm.relevant_count,
            bound=recall_upper_bound(lam),
        )

    jobs = [(lam, T, s) for lam in lambda_grid for T in temperature_grid for s in range(seeds)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = [one(j) for j in jobs]
    return sorted(rows, key=lambda r: (r.lam, r.temperature, r.seed_index))


@dataclass(frozen=True)
class RecallSummary:
    lam: float
    temperature: float
    seeds: int
    mean_recall: float
    sem: float
    precision_rate: float
    bound: float

    @property
    def ci95(self) -> tuple[float, float]:
        return self.mean_recall - 1.959963984540054 * self.sem, self.mean_recall + 1.959963984540054 * self.sem


def summarize_rows(rows: Sequence[SpikeRow]) -> list[RecallSummary]:
    groups: dict[tuple[float, float], list[SpikeRow]] = {}
    for r in rows:
        groups.setdefault((r.lam, r.temperature), []).append(r)
    out = []
    for (lam, T), rs in sorted(groups.items()):
        rec = np.array([r.recall for r in rs])
        sem = float(rec.std(ddof=1) / math.sqrt(len(rec))) if len(rec) > 1 else 0.0
        out.append(RecallSummary(
            lam, T, len(rs), math.fsum(rec) / len(rec), sem,
            sum(r.precision_at_1 for r in rs) / len(rs), rs[0].bound,
        ))
    return out
