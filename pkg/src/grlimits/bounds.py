"""Closed-form reference values: KL lower bounds, the sum-valuation recall
ceiling, and the minimal docID vocabulary size."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "BoundValue",
    "kl_bound_uniform",
    "kl_bound_general",
    "recall_upper_bound",
    "recall_bound_is_vacuous",
    "min_vocab_size",
    "min_vocab_log2",
    "evaluate",
]

KL_CONSTANT = 0.05
RECALL_BASE = 0.5
RECALL_OFFSET = 0.65
RECALL_SLOPE = 0.15


def kl_bound_uniform(k: int, expected_size: float) -> float:
    """Asymptotic KL floor for uniform relevance: ``0.05 k / N``."""
    if k < 2 or not expected_size > 0:
        raise ValueError("need k >= 2 and a positive downstream size")
    return KL_CONSTANT * k / expected_size


def kl_bound_general(avg_simpson: float, p: float) -> float:
    """Asymptotic KL floor ``0.05 A / p`` for a general relevance distribution."""
    if not (0.0 < avg_simpson <= 1.0) or not (0.0 < p <= 1.0):
        raise ValueError("need 0 < A <= 1 and 0 < p <= 1")
    return KL_CONSTANT * avg_simpson / p


def recall_upper_bound(lam: float) -> float:
    """Top-``lam*k`` recall ceiling of sum-valued branches.

    Not clamped: values above 1 mean the bound says nothing.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return RECALL_BASE + max(RECALL_OFFSET - RECALL_SLOPE / lam, 0.0)


def recall_bound_is_vacuous(lam: float) -> bool:
    return recall_upper_bound(lam) >= 1.0


def min_vocab_log2(doc_bytes: float, bits_per_byte: float, docid_len: int) -> float:
    if doc_bytes < 1 or docid_len < 1 or not bits_per_byte > 0:
        raise ValueError("need doc_bytes >= 1, docid_len >= 1 and bits_per_byte > 0")
    return doc_bytes * bits_per_byte / docid_len


def min_vocab_size(doc_bytes: float, bits_per_byte: float, docid_len: int) -> int:
    """Smallest ``k`` with ``docid_len * log2(k) >= doc_bytes * bits_per_byte``."""
    x = min_vocab_log2(doc_bytes, bits_per_byte, docid_len)
    if x >= 1024:
        raise OverflowError(f"vocabulary size 2**{x} is not representable as a float")
    if float(x).is_integer():
        return 1 << int(x)
    return math.ceil(2.0**x)


@dataclass(frozen=True)
class BoundValue:
    kind: str
    value: float
    inputs: dict = field(default_factory=dict)

    @property
    def vacuous(self) -> bool:
        return self.kind == "recall_upper" and self.value >= 1.0


def evaluate(kind: str, **inputs) -> BoundValue:
    """Dispatch by bound kind; ``vocab_min`` overflow yields ``inf`` plus log2."""
    if kind == "kl_uniform":
        value = kl_bound_uniform(inputs["k"], inputs["N"])
    elif kind == "kl_general":
        value = kl_bound_general(inputs["A"], inputs["p"])
    elif kind == "recall_upper":
        value = recall_upper_bound(inputs["lam"])
    elif kind == "vocab_min":
        args = inputs["doc_bytes"], inputs["bits_per_byte"], inputs["docid_len"]
        inputs = dict(inputs, log2=min_vocab_log2(*args))
        try:
            value = min_vocab_size(*args)
        except OverflowError:
            value = math.inf
    else:
        raise ValueError(f"unknown bound kind {kind!r}")
    return BoundValue(kind, value, dict(inputs))
