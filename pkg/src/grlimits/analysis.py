"""Divergences, Monte Carlo aggregation and diagnostics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import entr, kl_div

from .corpus import (
    DEFAULT_LYAPUNOV_THRESHOLD,
    DEFAULT_MAX_DRAWS,
    SAMPLERS,
    CorpusGeometry,
    SamplingSpec,
    check_normal_admissible,
)
from .decoder import predicted_marginal
from .errors import AbsoluteContinuityError, FeasibilityError
from .relevance import BranchWeights, avg_simpson
from .seeds import mix, rng_for

__all__ = [
    "kl",
    "tv",
    "TrialReport",
    "monte_carlo_kl",
    "lyapunov_ratio",
    "branch_lyapunov_ratios",
    "step_entropy_profile",
    "joint_entropy",
    "UnbiasednessReport",
    "mass_unbiasedness_check",
    "ENTROPY_STATE_CAP",
]

ENTROPY_STATE_CAP = 2**24
Z95 = 1.959963984540054

ModelLike = BranchWeights | Callable[[CorpusGeometry, np.random.Generator], BranchWeights]


def kl(P, Q) -> float:
    """KL(P || Q) in nats, with 0 ln 0 = 0.

    Summed as ``P ln(P/Q) - P + Q`` so every term is non-negative.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise ValueError("distributions differ in shape")
    if np.any((P > 0) & (Q <= 0)):
        raise AbsoluteContinuityError("P is not absolutely continuous with respect to Q")
    return math.fsum(kl_div(P, Q))


def tv(P, Q) -> float:
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise ValueError("distributions differ in shape")
    return 0.5 * math.fsum(np.abs(P - Q))


@dataclass(eq=False)
class TrialReport:
    """Per-trial KL/TV records plus aggregates over them."""

    params: dict
    seeds: np.ndarray
    kl: np.ndarray
    tv: np.ndarray
    resamples: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return len(self.kl)

    @property
    def mean(self) -> float:
        return math.fsum(self.kl) / self.trials

    @property
    def std(self) -> float:
        if self.trials < 2:
            return 0.0
        mu = self.mean
        return math.sqrt(math.fsum((self.kl - mu) ** 2) / (self.trials - 1))

    @property
    def sem(self) -> float:
        return self.std / math.sqrt(self.trials)

    @property
    def ci95(self) -> tuple[float, float]:
        half = Z95 * self.sem
        return self.mean - half, self.mean + half

    @property
    def total_resamples(self) -> int:
        return int(self.resamples.sum())

    def pinsker_violations(self) -> int:
        return int(np.count_nonzero(self.kl < 2.0 * self.tv**2))

    def records(self):
        for t, (s, d, v, r) in enumerate(zip(self.seeds, self.kl, self.tv, self.resamples)):
            yield {"trial": t, "seed": int(s), "kl": float(d), "tv": float(v), "resamples": int(r)}


def _resolve_model(model: ModelLike, geom: CorpusGeometry, seed: int) -> BranchWeights:
    if isinstance(model, BranchWeights):
        return model
    return model(geom, rng_for(seed, "model"))


def _check_sampler(bw: BranchWeights, p: float, sampler: str, kwargs: dict):
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}; choose from {sorted(SAMPLERS)}")
    if sampler == "exact":
        cap = kwargs.get("max_draws", DEFAULT_MAX_DRAWS)
        if not bw.has_leaves:
            raise ValueError("exact sampling needs leaf weights")
        if bw.k * bw.n > cap:
            raise FeasibilityError(
                f"exact sampling needs {bw.k * bw.n} leaf draws (cap {cap}); "
                "use the grouped, binomial or normal sampler instead"
            )
    elif sampler == "grouped" and not bw.has_leaves:
        raise ValueError("grouped sampling needs leaf weights")
    elif sampler == "binomial" and not bw.is_uniform:
        raise ValueError("the binomial sampler requires uniform leaf weights")
    elif sampler == "normal":
        threshold = kwargs.get("lyapunov_threshold", DEFAULT_LYAPUNOV_THRESHOLD)
        if threshold is not None:
            check_normal_admissible(bw, p, threshold)
            kwargs["lyapunov_threshold"] = None


def monte_carlo_kl(
    model: ModelLike,
    geom: CorpusGeometry,
    spec: SamplingSpec,
    sampler: str = "exact",
    trials: int = 200,
    seed: int = 0,
    workers: int = 1,
    max_resamples: int = 10_000,
    **sampler_kwargs,
) -> TrialReport:
    """KL(truth || predicted) at the first step over independent corpora.

    Trial ``t`` draws from a generator seeded by ``mix(seed, t, attempt)``;
    an empty corpus is redrawn with the next attempt index and counted.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    bw = _resolve_model(model, geom, seed)
    if bw.k != geom.k:
        raise ValueError("model and geometry disagree on k")
    p = spec.p
    _check_sampler(bw, p, sampler, sampler_kwargs)
    draw = SAMPLERS[sampler]

    def one(t):
        for attempt in range(max_resamples + 1):
            cfs = draw(bw, p, rng_for(seed, t, attempt), **sampler_kwargs)
            if not cfs.empty:
                break
        else:
            raise RuntimeError(f"trial {t}: corpus stayed empty after {max_resamples} resamples")
        mass = cfs.selected_mass
        support = mass > 0
        P = mass / math.fsum(mass)
        Q = predicted_marginal(bw, support)
        return mix(seed, t), kl(P, Q), tv(P, Q), attempt

    def run(chunk):
        return [one(t) for t in chunk]

    chunks = np.array_split(np.arange(trials), max(1, min(workers, trials)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    rows = [r for part in parts for r in part]

    params = {
        "k": geom.k, "m": geom.m, "n": bw.n, "p": p,
        "N": spec.expected_size if spec.expected_size is not None else p * float(geom.size),
        "model": bw.label, "sampler": sampler, "avg_simpson": avg_simpson(bw), "seed": seed,
    }
    return TrialReport(
        params=params,
        seeds=np.array([r[0] for r in rows], dtype=np.uint64),
        kl=np.array([r[1] for r in rows]),
        tv=np.array([r[2] for r in rows]),
        resamples=np.array([r[3] for r in rows], dtype=np.int64),
    )


def lyapunov_ratio(leaf_weights, p: float, exponent_delta: float = 1.0) -> float:
    """Lyapunov ratio for the weighted Bernoulli sum of one branch.

    Small values mean the branch's kept mass is close to normal.
    """
    if not (0.0 < p < 1.0):
        raise ValueError("Lyapunov ratio needs 0 < p < 1 (degenerate Bernoulli otherwise)")
    w = np.asarray(leaf_weights, dtype=float)
    if w.size == 0 or np.any(w < 0) or not w.max() > 0:
        raise ValueError("need non-negative weights with positive mass")
    w = w / w.max()
    e = 2.0 + 2.0 * exponent_delta
    q = 1.0 - p
    head = p * q**e + p**e * q
    return float(head * math.fsum(w**e) / (math.fsum(w * w) * p * q) ** (1.0 + exponent_delta))


def branch_lyapunov_ratios(bw: BranchWeights, p: float, exponent_delta: float = 1.0):
    """Per-branch :func:`lyapunov_ratio`, or None when leaves are unknown."""
    if not (0.0 < p < 1.0):
        raise ValueError("Lyapunov ratio needs 0 < p < 1 (degenerate Bernoulli otherwise)")
    e = 2.0 + 2.0 * exponent_delta
    s_e = bw.power_sums(e)
    if s_e is None:
        return None
    s_2 = bw.power_sums(2.0)
    q = 1.0 - p
    head = p * q**e + p**e * q
    with np.errstate(divide="ignore", invalid="ignore"):
        return head * s_e / (s_2 * p * q) ** (1.0 + exponent_delta)


def _as_joint(joint, k, m):
    joint = np.asarray(joint, dtype=float)
    if k is None or m is None:
        if joint.ndim < 1 or len(set(joint.shape)) != 1:
            raise ValueError("pass k and m, or a joint shaped (k,)*m")
        k, m = joint.shape[0], joint.ndim
    if k**m > ENTROPY_STATE_CAP:
        raise FeasibilityError(f"{k}**{m} states exceed the enumeration cap {ENTROPY_STATE_CAP}")
    if joint.size != k**m:
        raise ValueError("joint size does not match k**m")
    if np.any(joint < 0) or abs(math.fsum(joint.ravel()) - 1.0) > 1e-9:
        raise ValueError("joint is not a probability distribution")
    return joint.reshape((k,) * m), k, m


def joint_entropy(joint) -> float:
    return math.fsum(entr(np.asarray(joint, dtype=float).ravel()))


def step_entropy_profile(joint, k: int | None = None, m: int | None = None) -> np.ndarray:
    """Conditional entropies ``H(d_i | d_<i)`` for each step, in nats.

    Each step is the prefix-weighted entropy of the next-token conditional,
    not a difference of prefix entropies, so the chain rule is a real check.
    """
    joint, k, m = _as_joint(joint, k, m)
    out = np.empty(m)
    for i in range(m):
        # rows: prefixes of length i, columns: next token
        marg = joint.sum(axis=tuple(range(i + 1, m))) if i + 1 < m else joint
        rows = marg.reshape(-1, k)
        mass = rows.sum(axis=1)
        live = mass > 0
        cond = rows[live] / mass[live, None]
        out[i] = math.fsum(mass[live] * entr(cond).sum(axis=1))
    return out


@dataclass(frozen=True, eq=False)
class UnbiasednessReport:
    z: np.ndarray
    means: np.ndarray
    targets: np.ndarray
    trials: int

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))


def mass_unbiasedness_check(
    model: ModelLike,
    geom: CorpusGeometry,
    spec: SamplingSpec,
    trials: int,
    seed: int,
    sampler: str = "exact",
    **sampler_kwargs,
) -> UnbiasednessReport:
    """z-score of each branch's mean kept mass against ``p * w_i``.

    Empty corpora are kept: the expectation is over all downstream corpora.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    bw = _resolve_model(model, geom, seed)
    draw = SAMPLERS[sampler]
    masses = np.stack(
        [draw(bw, spec.p, rng_for(seed, t), **sampler_kwargs).selected_mass for t in range(trials)]
    )
    means = masses.mean(axis=0)
    sd = masses.std(axis=0, ddof=1)
    targets = spec.p * bw.totals
    diff = means - targets
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, diff / (sd / math.sqrt(trials)), np.where(diff == 0, 0.0, np.inf))
    return UnbiasednessReport(z, means, targets, trials)
