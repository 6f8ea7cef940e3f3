"""Constrained first-step marginals.

``predicted_marginal`` is what a model unaware of future constraints
returns after masking invalid first tokens. ``truth_marginal`` sums only
the relevance mass that survives in the downstream corpus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import ConstrainedFirstStep
from .errors import EmptyCorpusError, EmptySupportError
from .relevance import BranchWeights

__all__ = [
    "MarginalPair",
    "apply_constraint",
    "predicted_marginal",
    "truth_marginal",
    "marginal_pair",
]


def apply_constraint(probs, valid) -> np.ndarray:
    """Zero out invalid tokens and renormalize."""
    probs = np.asarray(probs, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    if probs.shape != valid.shape:
        raise ValueError("probability vector and mask differ in shape")
    if abs(math.fsum(probs) - 1.0) > 1e-9:
        raise ValueError("input is not a probability vector")
    kept = np.where(valid, probs, 0.0)
    z = math.fsum(kept)
    if not z > 0:
        raise EmptySupportError("no valid token carries probability mass")
    return kept / z


def predicted_marginal(bw: BranchWeights, support) -> np.ndarray:
    support = np.asarray(support, dtype=bool)
    kept = np.where(support, bw.totals, 0.0)
    z = math.fsum(kept)
    if not z > 0:
        raise EmptySupportError("support holds no relevance mass")
    return kept / z


def truth_marginal(cfs: ConstrainedFirstStep) -> np.ndarray:
    z = cfs.total_mass
    if not z > 0:
        raise EmptyCorpusError("downstream corpus is empty")
    return cfs.selected_mass / z


@dataclass(frozen=True, eq=False)
class MarginalPair:
    predicted: np.ndarray
    truth: np.ndarray
    support: np.ndarray


def marginal_pair(bw: BranchWeights, cfs: ConstrainedFirstStep) -> MarginalPair:
    support = cfs.support
    return MarginalPair(predicted_marginal(bw, support), truth_marginal(cfs), support)
