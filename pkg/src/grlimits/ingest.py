"""Ranked run files, docID codebook mappings and first-step branch metrics.

Run files use the usual six whitespace-separated columns::

    qid Q0 docid rank score tag

Mapping files are tab-separated: a doc id, then its ``m`` tokens separated
by spaces.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, TextIO

import numpy as np

from .beam import BranchValuation, rank_and_score
from .relevance import runfile_model
from .seeds import rng_for

__all__ = [
    "RunRecord",
    "RunFormatError",
    "DocidMapping",
    "parse_run_file",
    "write_run_file",
    "hash_mapping",
    "load_mapping",
    "write_mapping",
    "QueryBranchMetrics",
    "BranchMetricsReport",
    "branch_metrics",
    "synthetic_run",
    "MSMARCO_PASSAGES",
]

MSMARCO_PASSAGES = 8_841_823
DEFAULT_CODEBOOK = 256


class RunFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RunRecord:
    query_id: str
    doc_id: str
    rank: int
    score: float


def parse_run_file(stream: TextIO | Iterable[str]) -> dict[str, list[RunRecord]]:
    """Parse a ranked run, grouped by query in order of first appearance."""
    runs: dict[str, list[RunRecord]] = {}
    for lineno, line in enumerate(stream, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 6:
            raise RunFormatError(f"line {lineno}: expected 6 columns, got {len(parts)}")
        qid, _, doc, rank, score, _ = parts
        try:
            rec = RunRecord(qid, doc, int(rank), float(score))
        except ValueError as exc:
            raise RunFormatError(f"line {lineno}: {exc}") from None
        if rec.rank < 1 or not math.isfinite(rec.score):
            raise RunFormatError(f"line {lineno}: rank must be positive and score finite")
        prev = runs.setdefault(qid, [])
        if prev:
            if rec.rank <= prev[-1].rank:
                raise RunFormatError(f"query {qid}: ranks not strictly increasing at line {lineno}")
            if rec.score > prev[-1].score:
                raise RunFormatError(f"query {qid}: scores increase at line {lineno}")
        prev.append(rec)
    return runs


def write_run_file(runs: Mapping[str, list[RunRecord]], stream: TextIO, tag: str = "grlimits"):
    for qid, recs in runs.items():
        for r in recs:
            stream.write(f"{qid} Q0 {r.doc_id} {r.rank} {r.score!r} {tag}\n")


class DocidMapping:
    """One-to-one map from doc id to a length-``m`` token sequence over ``[k]``."""

    def __init__(self, codes: Mapping[str, tuple[int, ...]], k: int, m: int):
        self.k = int(k)
        self.m = int(m)
        seen: dict[tuple[int, ...], str] = {}
        for doc, seq in codes.items():
            if len(seq) != self.m:
                raise ValueError(f"{doc}: expected {self.m} tokens, got {len(seq)}")
            if any(not 0 <= t < self.k for t in seq):
                raise ValueError(f"{doc}: token out of range [0, {self.k})")
            if seq in seen:
                raise ValueError(f"docids collide: {seen[seq]} and {doc} share {seq}")
            seen[seq] = doc
        self._codes = dict(codes)

    def __getitem__(self, doc_id: str) -> tuple[int, ...]:
        return self._codes[doc_id]

    def __contains__(self, doc_id) -> bool:
        return doc_id in self._codes

    def __len__(self) -> int:
        return len(self._codes)

    def items(self):
        return self._codes.items()

    def first_token(self, doc_id: str) -> int:
        return self._codes[doc_id][0]

    def branch_sizes(self) -> np.ndarray:
        firsts = np.fromiter((s[0] for s in self._codes.values()), dtype=np.int64, count=len(self))
        return np.bincount(firsts, minlength=self.k)


def _to_digits(value: int, k: int, m: int) -> tuple[int, ...]:
    digits = []
    for _ in range(m):
        value, d = divmod(value, k)
        digits.append(d)
    return tuple(reversed(digits))


def hash_mapping(doc_ids: Iterable[str], k: int = DEFAULT_CODEBOOK, m: int = 4, seed: int = 0) -> DocidMapping:
    """Seed-keyed hash codes; collisions move to the next free code."""
    doc_ids = list(doc_ids)
    space = k**m
    if len(doc_ids) > space:
        raise ValueError(f"{len(doc_ids)} documents do not fit in {k}**{m} codes")
    nbytes = max(8, (space.bit_length() + 7) // 8 + 8)
    key = (seed & ((1 << 64) - 1)).to_bytes(8, "little")
    used: set[int] = set()
    codes = {}
    for doc in doc_ids:
        if doc in codes:
            continue
        h = hashlib.blake2b(doc.encode(), digest_size=min(nbytes, 64), key=key).digest()
        slot = int.from_bytes(h, "little") % space
        while slot in used:
            slot = (slot + 1) % space
        used.add(slot)
        codes[doc] = _to_digits(slot, k, m)
    return DocidMapping(codes, k, m)


def load_mapping(stream: TextIO | Iterable[str], k: int = DEFAULT_CODEBOOK) -> DocidMapping:
    codes: dict[str, tuple[int, ...]] = {}
    m = None
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        try:
            doc, toks = line.split("\t")
            seq = tuple(int(t) for t in toks.split())
        except ValueError:
            raise ValueError(f"line {lineno}: expected 'doc_id<TAB>tokens'") from None
        if doc in codes:
            raise ValueError(f"line {lineno}: duplicate doc id {doc}")
        m = len(seq) if m is None else m
        codes[doc] = seq
    return DocidMapping(codes, k, m or 1)


def write_mapping(mapping: DocidMapping, stream: TextIO):
    for doc, seq in mapping.items():
        stream.write(doc + "\t" + " ".join(map(str, seq)) + "\n")


@dataclass(frozen=True)
class QueryBranchMetrics:
    query_id: str
    recall: float
    precision_at_1: int
    relevant_branch_count: int


@dataclass(frozen=True)
class BranchMetricsReport:
    queries: list[QueryBranchMetrics]
    top_r: int

    @property
    def recall_pct(self) -> float:
        return 100.0 * math.fsum(q.recall for q in self.queries) / len(self.queries)

    @property
    def precision_pct(self) -> float:
        return 100.0 * sum(q.precision_at_1 for q in self.queries) / len(self.queries)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("query_id,recall,precision_at_1,relevant_branches\n")
        for q in self.queries:
            buf.write(f"{q.query_id},{q.recall:.6g},{q.precision_at_1},{q.relevant_branch_count}\n")
        buf.write(f"macro,{self.recall_pct / 100:.6g},{self.precision_pct / 100:.6g},\n")
        return buf.getvalue()


def branch_metrics(
    runs: Mapping[str, list[RunRecord]],
    mapping: DocidMapping,
    top_r: int = 50,
    corpus_size: int = MSMARCO_PASSAGES,
    noise_sigma: float | None = None,
    seed: int = 0,
    branch_sizes=None,
) -> BranchMetricsReport:
    """Recall@top_r and precision@1 of relevant first-token branches per query.

    The ``top_r`` best-scored documents of a query are its relevant set; a
    branch is relevant when it holds one of them. Branches are valued by
    their total (extrapolated) relevance mass. Recall divides by the number
    of relevant branches, which can be below ``top_r`` when documents share
    a branch.
    """
    if not runs:
        raise ValueError("no queries")
    if branch_sizes is None and len(mapping) >= corpus_size:
        branch_sizes = mapping.branch_sizes()
    out = []
    for qid, recs in runs.items():
        if len(recs) < top_r:
            raise ValueError(f"query {qid} has {len(recs)} documents, fewer than top_r={top_r}")
        docs = [r.doc_id for r in recs]
        missing = [d for d in docs if d not in mapping]
        if missing:
            raise KeyError(f"query {qid}: mapping lacks {missing[:10]}")
        bw = runfile_model(
            docs, [r.score for r in recs], mapping, corpus_size, rng_for(seed, ["query", qid]),
            noise_sigma=noise_sigma, branch_sizes=branch_sizes,
        )
        relevant = np.zeros(mapping.k, dtype=bool)
        relevant[[mapping.first_token(d) for d in docs[:top_r]]] = True
        rm = rank_and_score(BranchValuation(bw.totals, "sum", "exact", relevant), cutoff=top_r)
        out.append(QueryBranchMetrics(qid, rm.recall, rm.precision_at_1, rm.relevant_branch_count))
    return BranchMetricsReport(out, top_r)


def synthetic_run(n_queries: int = 100, depth: int = 100, n_docs: int = 20_000, seed: int = 0):
    """A deterministic stand-in for a real ranked run (heavy-tailed scores)."""
    rng = rng_for(seed, "synthetic-run")
    runs = {}
    for qi in range(n_queries):
        qid = f"q{qi:03d}"
        docs = rng.choice(n_docs, size=depth, replace=False)
        scores = np.sort(rng.gamma(2.0, 5.0, size=depth) + 1.0)[::-1]
        runs[qid] = [
            RunRecord(qid, f"D{d}", rank + 1, float(round(s, 4)))
            for rank, (d, s) in enumerate(zip(docs, scores))
        ]
    return runs
