"""Complete corpus geometry and downstream-corpus samplers.

The complete corpus is the implicit set ``[k]^m`` of docIDs. A downstream
corpus keeps each document independently with probability ``p``. Only the
first generation step matters for the analysis, so samplers aggregate the
kept relevance mass per first-token branch.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import FeasibilityError, LyapunovError

if TYPE_CHECKING:
    from .relevance import BranchWeights

__all__ = [
    "CorpusGeometry",
    "SamplingSpec",
    "ConstrainedFirstStep",
    "DEFAULT_MAX_DRAWS",
    "DEFAULT_LYAPUNOV_THRESHOLD",
    "sample_first_step_exact",
    "sample_first_step_grouped",
    "sample_first_step_binomial",
    "sample_first_step_normal",
    "SAMPLERS",
]

DEFAULT_MAX_DRAWS = 2**28
DEFAULT_LYAPUNOV_THRESHOLD = 0.1
# Largest branch size the binomial sampler will hand to numpy's int64 draws.
_MAX_COUNT = 2**62
# Leaves materialized at once by the exact sampler.
_CHUNK = 2**22


@dataclass(frozen=True)
class CorpusGeometry:
    """Vocabulary size ``k`` and docID length ``m``."""

    k: int
    m: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"vocabulary size must be an integer >= 2, got {self.k}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"docID length must be an integer >= 1, got {self.m}")
        if not math.isfinite(self.log_size):
            raise ValueError("corpus log-size is not representable")

    @property
    def n(self) -> int:
        """Leaves per first-token branch, ``k**(m-1)``."""
        return self.k ** (self.m - 1)

    @property
    def size(self) -> int:
        return self.k**self.m

    @property
    def log_size(self) -> float:
        return self.m * math.log(self.k)


@dataclass(frozen=True)
class SamplingSpec:
    """Bernoulli keep-probability of the downstream corpus.

    Build it with :meth:`from_p` or :meth:`from_size`; the other form is
    derived when a geometry is known.
    """

    p: float
    expected_size: float | None = None

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise ValueError(f"selection probability must lie in (0, 1], got {self.p}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @classmethod
    def from_p(cls, p: float, geom: CorpusGeometry | None = None) -> SamplingSpec:
        size = None if geom is None else p * float(geom.size)
        return cls(p=float(p), expected_size=size)

    @classmethod
    def from_size(cls, geom: CorpusGeometry, expected_size: float) -> SamplingSpec:
        if expected_size <= 0:
            raise ValueError("expected downstream size must be positive")
        # float(int) is correctly rounded, and exact for powers of two
        p = expected_size / float(geom.size)
        if p > 1.0:
            raise ValueError(
                f"expected size {expected_size} exceeds the complete corpus ({geom.size})"
            )
        return cls(p=p, expected_size=float(expected_size))


@dataclass(frozen=True)
class ConstrainedFirstStep:
    """Per-branch aggregate of one sampled downstream corpus.

    ``selected_count`` is ``None`` when the sampler does not track counts
    (the normal approximation); zero counts are real zeros.
    """

    selected_mass: np.ndarray
    selected_count: np.ndarray | None

    @property
    def support(self) -> np.ndarray:
        return self.selected_mass > 0

    @property
    def total_mass(self) -> float:
        return math.fsum(self.selected_mass)

    @property
    def empty(self) -> bool:
        """True for the EMPTY_CORPUS condition (Z = 0)."""
        return not self.selected_mass.any()

    @property
    def k(self) -> int:
        return len(self.selected_mass)


def _p_of(spec: SamplingSpec | float) -> float:
    p = spec.p if isinstance(spec, SamplingSpec) else float(spec)
    if not (0.0 < p <= 1.0):
        raise ValueError(f"selection probability must lie in (0, 1], got {p}")
    return p


def sample_first_step_exact(
    weights: BranchWeights,
    spec: SamplingSpec | float,
    rng: np.random.Generator,
    max_draws: int = DEFAULT_MAX_DRAWS,
) -> ConstrainedFirstStep:
    """Draw one Bernoulli(p) per leaf and aggregate kept weight per branch."""
    p = _p_of(spec)
    k, n = weights.k, weights.n
    if k * n > max_draws:
        raise FeasibilityError(
            f"exact sampling needs {k * n} leaf draws (cap {max_draws}); "
            "use the grouped, binomial or normal sampler instead"
        )
    if k * n <= _CHUNK:
        leaves = weights.leaf_block(0, k)
        keep = rng.random(leaves.shape) < p
        return ConstrainedFirstStep((leaves * keep).sum(axis=1), keep.sum(axis=1))
    mass = np.zeros(k)
    count = np.zeros(k, dtype=np.int64)
    rows = max(1, _CHUNK // n)
    for start in range(0, k, rows):
        stop = min(k, start + rows)
        leaves = weights.leaf_block(start, stop)
        keep = rng.random(leaves.shape) < p
        count[start:stop] = keep.sum(axis=1)
        mass[start:stop] = (leaves * keep).sum(axis=1)
    return ConstrainedFirstStep(mass, count)


def sample_first_step_grouped(
    weights: BranchWeights,
    spec: SamplingSpec | float,
    rng: np.random.Generator,
) -> ConstrainedFirstStep:
    """Exact in distribution: one Binomial draw per distinct weight level.

    Leaves sharing a weight are exchangeable, so the number kept out of
    ``c`` such leaves is Binomial(c, p). This scales to branches far too
    large for leaf-level draws.
    """
    p = _p_of(spec)
    if weights.tier_values is None:
        return sample_first_step_exact(weights, p, rng)
    counts = weights.tier_counts
    if counts.max() > _MAX_COUNT:
        raise OverflowError("tier counts exceed the int64 binomial range")
    kept = rng.binomial(counts, p)
    mass = kept @ weights.tier_values
    return ConstrainedFirstStep(np.asarray(mass, dtype=float), kept.sum(axis=1))


def sample_first_step_binomial(
    weights: BranchWeights,
    spec: SamplingSpec | float,
    rng: np.random.Generator,
) -> ConstrainedFirstStep:
    """Uniform relevance only: kept counts are i.i.d. Binomial(n, p)."""
    p = _p_of(spec)
    if not weights.is_uniform:
        raise ValueError("the binomial sampler requires uniform leaf weights")
    n = weights.n
    if n > _MAX_COUNT:
        raise OverflowError(f"branch size {n} overflows the count representation")
    counts = rng.binomial(n, p, size=weights.k)
    return ConstrainedFirstStep(counts.astype(float) * weights.unit_weight, counts)


def sample_first_step_normal(
    weights: BranchWeights,
    spec: SamplingSpec | float,
    rng: np.random.Generator,
    lyapunov_threshold: float | None = DEFAULT_LYAPUNOV_THRESHOLD,
) -> ConstrainedFirstStep:
    """CLT approximation S_i ~ Normal(w_i p, p q w_i^2 A_i^2), truncated at 0.

    Pass ``lyapunov_threshold=None`` to skip the admissibility gate, e.g.
    for aggregate-only weights where leaf moments are unknown.
    """
    p = _p_of(spec)
    q = 1.0 - p
    if lyapunov_threshold is not None:
        check_normal_admissible(weights, p, lyapunov_threshold)
    mu = weights.totals * p
    sigma = np.sqrt(p * q) * weights.totals * weights.simpson
    if np.any(mu < 3.0 * sigma):
        warnings.warn(
            "normal sampler truncation at 0 is not negligible for some branches "
            "(mean below 3 standard deviations)",
            RuntimeWarning,
            stacklevel=2,
        )
    mass = np.maximum(rng.normal(mu, sigma), 0.0)
    return ConstrainedFirstStep(mass, None)


def check_normal_admissible(weights: BranchWeights, p: float, threshold: float) -> np.ndarray:
    from .analysis import branch_lyapunov_ratios

    if p >= 1.0:
        # certain selection: zero variance, the sampler returns w_i exactly
        return np.zeros(weights.k)
    ratios = branch_lyapunov_ratios(weights, p)
    if ratios is None:
        raise LyapunovError(
            "leaf weights are unavailable, so Lyapunov's condition cannot be checked; "
            "pass lyapunov_threshold=None to sample anyway"
        )
    bad = np.flatnonzero(~(ratios < threshold))
    if bad.size:
        shown = ", ".join(f"{i} ({ratios[i]:.3g})" for i in bad[:10])
        raise LyapunovError(
            f"Lyapunov's condition does not hold (ratio >= {threshold}) for "
            f"{bad.size} branches: {shown}",
            offending=bad.tolist(),
        )
    return ratios


SAMPLERS = {
    "exact": sample_first_step_exact,
    "grouped": sample_first_step_grouped,
    "binomial": sample_first_step_binomial,
    "normal": sample_first_step_normal,
}
