"""First-step relevance structure ``Pr(. | q)`` and Simpson diversity.

Weights are kept per first-token branch. Heavy-tailed models store their
leaf weights relative to the heaviest leaf (``log_scale`` records the
dropped factor) so nothing near ``e**100`` is ever materialized; every
quantity the analysis uses is scale invariant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from .corpus import CorpusGeometry

__all__ = [
    "BranchWeights",
    "SpikeModel",
    "uniform_model",
    "exponential_tier_model",
    "tier_decay_for_simpson",
    "spike_model",
    "spike_center",
    "spike_half_width",
    "simpson_index",
    "avg_simpson",
    "runfile_model",
    "MAX_LOG_WEIGHT",
]

MAX_LOG_WEIGHT = 100.0
# Leaf weights are materialized (with per-branch permutations) below this size.
_MATERIALIZE_CAP = 2**22
_TAIL_NOISE_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class BranchWeights:
    """Relevance mass grouped by first token.

    Leaf-level detail is optional. ``leaf_weights`` is a dense ``(k, n)``
    array; ``tier_values``/``tier_counts`` describe each branch as counts of
    a shared set of weight levels. Either is enough for exact sampling and
    Lyapunov diagnostics. Aggregate-only instances carry just the totals
    and Simpson indices.
    """

    n: int
    totals: np.ndarray
    simpson: np.ndarray
    leaf_weights: np.ndarray | None = None
    tier_values: np.ndarray | None = None
    tier_counts: np.ndarray | None = None
    log_scale: float = 0.0
    label: str = field(default="custom", compare=False)

    def __post_init__(self):
        totals = np.asarray(self.totals, dtype=float)
        simpson = np.asarray(self.simpson, dtype=float)
        object.__setattr__(self, "totals", totals)
        object.__setattr__(self, "simpson", simpson)
        if totals.ndim != 1 or simpson.shape != totals.shape:
            raise ValueError("totals and simpson must be equal-length vectors")
        if np.any(totals < 0) or not np.all(np.isfinite(totals)):
            raise ValueError("branch totals must be finite and non-negative")
        if not self.grand_total > 0:
            raise ValueError("relevance distribution has no mass")
        if self.leaf_weights is not None and self.leaf_weights.shape != (self.k, self.n):
            raise ValueError("leaf_weights must have shape (k, n)")
        if self.tier_counts is not None:
            if self.tier_counts.shape != (self.k, len(self.tier_values)):
                raise ValueError("tier_counts must have shape (k, tiers)")

    @property
    def k(self) -> int:
        return len(self.totals)

    @property
    def grand_total(self) -> float:
        return math.fsum(self.totals)

    @property
    def has_leaves(self) -> bool:
        return self.leaf_weights is not None or self.tier_values is not None

    @property
    def is_uniform(self) -> bool:
        if self.tier_values is not None:
            used = self.tier_values[np.any(self.tier_counts > 0, axis=0)]
            return bool(np.all(used == used[0])) and bool(np.all(self.tier_counts.sum(1) == self.n))
        if self.leaf_weights is not None:
            return bool(np.all(self.leaf_weights == self.leaf_weights.flat[0]))
        return False

    @property
    def unit_weight(self) -> float:
        if self.tier_values is not None:
            return float(self.tier_values[np.argmax(self.tier_counts.sum(0) > 0)])
        return float(self.leaf_weights.flat[0])

    @cached_property
    def _shared_leaves(self) -> np.ndarray | None:
        if self.tier_counts is None or np.any(self.tier_counts != self.tier_counts[0]):
            return None
        return np.repeat(self.tier_values, self.tier_counts[0])

    def leaf_block(self, start: int, stop: int) -> np.ndarray:
        """Dense leaf weights for branches ``start:stop``."""
        if self.leaf_weights is not None:
            return self.leaf_weights[start:stop]
        if self.tier_values is None:
            raise ValueError("leaf weights are not available for this model")
        shared = self._shared_leaves
        if shared is not None:
            return np.broadcast_to(shared, (stop - start, self.n))
        return np.stack([np.repeat(self.tier_values, c) for c in self.tier_counts[start:stop]])

    def power_sums(self, r: float) -> np.ndarray | None:
        """Per-branch sum of ``w_ij ** r``, or None without leaf detail."""
        if self.tier_values is not None:
            return self.tier_counts @ (self.tier_values**r)
        if self.leaf_weights is not None:
            return (self.leaf_weights**r).sum(axis=1)
        return None

    @classmethod
    def from_leaf_weights(cls, leaf_weights, label: str = "custom") -> BranchWeights:
        leaf = np.atleast_2d(np.asarray(leaf_weights, dtype=float))
        if np.any(leaf < 0):
            raise ValueError("leaf weights must be non-negative")
        totals = leaf.sum(axis=1)
        simpson = np.array([simpson_index(row) if t > 0 else 0.0 for row, t in zip(leaf, totals)])
        return cls(leaf.shape[1], totals, simpson, leaf_weights=leaf, label=label)

    @classmethod
    def from_tiers(cls, values, counts, log_scale: float = 0.0, label: str = "custom") -> BranchWeights:
        values = np.asarray(values, dtype=float)
        counts = np.asarray(counts, dtype=np.int64)
        n = int(counts[0].sum())
        totals = counts @ values
        simpson = np.sqrt(counts @ values**2) / totals
        return cls(n, totals, simpson, tier_values=values, tier_counts=counts,
                   log_scale=log_scale, label=label)


def simpson_index(leaf_weights) -> float:
    """``sqrt(sum w^2) / sum w`` for one branch; 1 means all mass on one leaf."""
    w = np.asarray(leaf_weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    top = w.max(initial=0.0)
    if not top > 0:
        raise ValueError("simpson index needs at least one positive weight")
    w = w / top
    return float(math.sqrt(math.fsum(w * w)) / math.fsum(w))


def avg_simpson(bw: BranchWeights) -> float:
    """Mass-weighted mean of the branch indices, squared."""
    mean = math.fsum(bw.totals * bw.simpson) / bw.grand_total
    return mean * mean


def uniform_model(geom: CorpusGeometry) -> BranchWeights:
    n = geom.n
    counts = np.full((geom.k, 1), n, dtype=np.int64) if n < 2**63 else None
    if counts is None:
        raise OverflowError("branch size does not fit in int64")
    return BranchWeights.from_tiers([1.0], counts, label="uniform")


def _tier_layout(tiers: int, growth: float, decay: float):
    j = np.arange(tiers, dtype=float)
    log_w = np.minimum(growth * j, MAX_LOG_WEIGHT)
    log_prob = -decay * j
    prob = np.exp(log_prob - log_prob.max())
    return log_w, prob / prob.sum()


def exponential_tier_model(
    geom: CorpusGeometry,
    tiers: int,
    growth: float,
    decay: float,
    rng: np.random.Generator,
    materialize_cap: int = _MATERIALIZE_CAP,
) -> BranchWeights:
    """Leaf weights ``e**(growth*j)`` with tier ``j`` drawn w.p. ``∝ e**(-decay*j)``.

    One multiset of ``n`` weights is drawn and shared by every branch, so
    all branches have the same Simpson index. When small enough the leaves
    are materialized under an independent permutation per branch.
    """
    if tiers < 1:
        raise ValueError("need at least one tier")
    if growth <= 0 or decay <= 0:
        raise ValueError("growth and decay rates must be positive")
    n = geom.n
    log_w, prob = _tier_layout(tiers, growth, decay)
    counts = rng.multinomial(n, prob)
    values = np.exp(log_w - log_w.max())
    shared = np.broadcast_to(counts, (geom.k, tiers)).copy()
    bw = BranchWeights.from_tiers(values, shared, log_scale=float(log_w.max()), label="exponential-tier")
    if geom.k * n <= materialize_cap:
        base = np.repeat(values, counts)
        leaves = np.stack([rng.permutation(base) for _ in range(geom.k)])
        bw = replace(bw, leaf_weights=leaves)
    return bw


def tier_decay_for_simpson(target: float, n: int, tiers: int, growth: float) -> float:
    """Decay rate whose population-level avg Simpson index hits ``target``.

    Uses the expected tier frequencies, so a drawn model lands near (not
    exactly on) the target.
    """
    from scipy.optimize import brentq

    if not (1.0 / n < target < 1.0):
        raise ValueError(f"target must lie strictly between 1/n = {1 / n:.3g} and 1")

    def excess(log_decay):
        log_w, prob = _tier_layout(tiers, growth, math.exp(log_decay))
        w = np.exp(log_w - log_w.max())
        a2 = (prob @ w**2) / (n * (prob @ w) ** 2)
        return math.log(a2) - math.log(target)

    lo, hi = math.log(1e-4), math.log(1e3)
    if excess(lo) < 0 or excess(hi) > 0:
        raise ValueError("target simpson index is not reachable with these tiers")
    return math.exp(brentq(excess, lo, hi, xtol=1e-12))


def spike_center(n: int) -> float:
    """Center of the relevant logit window, ``0.5 ln(0.8 n)``."""
    return 0.5 * math.log(0.8 * n)


def spike_half_width(k: int, factor: float = 1.0) -> float:
    if k <= math.e:
        raise ValueError("k must exceed e so that ln ln k is defined and positive")
    return factor * 0.5 * math.log(math.log(k))


@dataclass(frozen=True, eq=False)
class SpikeModel:
    """Sparse relevance over ``k`` branches of ``n`` leaves.

    Non-relevant leaves have logits ~ Uniform(-1, 1), held parametrically.
    Relevant leaves are listed by branch, in-branch position and logit.
    Scores are ``exp(logit / temperature)``.
    """

    k: int
    n: int
    lam: float
    delta: float
    Delta: float
    temperature: float
    relevant_branch: np.ndarray
    relevant_leaf: np.ndarray
    relevant_logits: np.ndarray

    @property
    def relevant_count(self) -> int:
        return len(self.relevant_logits)

    @property
    def branch_counts(self) -> np.ndarray:
        return np.bincount(self.relevant_branch, minlength=self.k)

    @property
    def relevant_mask(self) -> np.ndarray:
        return self.branch_counts > 0

    def logits_by_branch(self) -> list[np.ndarray]:
        cuts = np.searchsorted(self.relevant_branch, np.arange(1, self.k))
        return np.split(self.relevant_logits, cuts)

    def with_temperature(self, temperature: float) -> SpikeModel:
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        return replace(self, temperature=float(temperature))


def spike_model(
    k: int,
    n: int,
    lam: float,
    rng: np.random.Generator,
    Delta_factor: float = 1.0,
    temperature: float = 1.0,
) -> SpikeModel:
    if not (0.0 <= lam <= 1.0):
        raise ValueError("lambda must lie in [0, 1]")
    if n < 2:
        raise ValueError("branches need at least two leaves")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    delta = spike_center(n)
    Delta = spike_half_width(k, Delta_factor)
    count = int(math.floor(lam * k + 0.5))
    if count > k * n:
        raise ValueError("more relevant documents than leaves")
    pos = np.sort(rng.choice(k * n, size=count, replace=False)) if count else np.zeros(0, np.int64)
    logits = rng.uniform(delta - Delta, delta + Delta, size=count)
    return SpikeModel(
        k=k, n=n, lam=float(lam), delta=delta, Delta=Delta, temperature=float(temperature),
        relevant_branch=(pos // n).astype(np.int64),
        relevant_leaf=(pos % n).astype(np.int64),
        relevant_logits=logits,
    )


def runfile_model(
    doc_ids: Sequence[str],
    scores: Sequence[float],
    mapping,
    corpus_size: int,
    rng: np.random.Generator,
    noise_sigma: float | None = None,
    branch_sizes: Sequence[int] | None = None,
) -> BranchWeights:
    """Relevance mass per first token from a ranked score list.

    Scored documents keep their scores. Every other document of the
    corpus gets 1% of the lowest score plus Gaussian noise (default sigma
    is 10% of that base), floored just above zero. The unscored tail is
    split across branches by ``branch_sizes`` when given, else evenly.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("score list is empty")
    if len(doc_ids) != scores.size:
        raise ValueError("doc_ids and scores differ in length")
    if np.any(np.diff(scores) > 0):
        raise ValueError("scores must be non-increasing")
    if scores[-1] <= 0:
        raise ValueError("the tail extrapolation needs positive scores")
    missing = [d for d in doc_ids if d not in mapping]
    if missing:
        raise KeyError(f"mapping lacks {len(missing)} scored documents: {missing[:10]}")
    k = mapping.k
    first = np.fromiter((mapping.first_token(d) for d in doc_ids), dtype=np.int64, count=len(doc_ids))

    scored_sum = np.bincount(first, weights=scores, minlength=k)
    scored_sq = np.bincount(first, weights=scores**2, minlength=k)
    scored_n = np.bincount(first, minlength=k)

    n_tail = corpus_size - scores.size
    if n_tail < 0:
        raise ValueError("corpus is smaller than the scored list")
    if branch_sizes is None:
        if n_tail:
            warnings.warn("branch sizes unknown; splitting the unscored tail evenly",
                          RuntimeWarning, stacklevel=2)
        tail_n = np.full(k, n_tail // k, dtype=np.int64)
        tail_n[: n_tail % k] += 1
    else:
        tail_n = np.asarray(branch_sizes, dtype=np.int64) - scored_n
        if np.any(tail_n < 0):
            raise ValueError("branch sizes are smaller than the scored documents they hold")

    base = 0.01 * scores[-1]
    sigma = 0.1 * base if noise_sigma is None else float(noise_sigma)
    if sigma < 0:
        raise ValueError("noise sigma must be non-negative")
    tail_sum, tail_sq = _tail_mass(tail_n, base, sigma, rng)

    totals = scored_sum + tail_sum
    sq = scored_sq + tail_sq
    simpson = np.divide(np.sqrt(sq), totals, out=np.zeros(k), where=totals > 0)
    n_nominal = max(1, -(-corpus_size // k))
    return BranchWeights(n_nominal, totals, simpson, label="runfile")


def _tail_mass(tail_n, base, sigma, rng):
    if sigma == 0.0:
        return tail_n * base, tail_n * base * base
    if base >= 8.0 * sigma:
        # flooring has probability below 1e-15 per leaf: the sum is exactly normal
        sums = rng.normal(tail_n * base, sigma * np.sqrt(tail_n))
        return sums, tail_n * (base * base + sigma * sigma)
    floor = _TAIL_NOISE_FLOOR * base
    sums = np.empty(len(tail_n))
    sqs = np.empty(len(tail_n))
    for i, c in enumerate(tail_n):
        leaves = np.maximum(rng.normal(base, sigma, size=int(c)), floor)
        sums[i] = leaves.sum()
        sqs[i] = (leaves * leaves).sum()
    return sums, sqs
