"""ROUGE-1/2/L, limited-length recall, entity coverage and paired bootstrap."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: int, n_cand: int, n_ref: int) -> "RougeScore":
        p = overlap / n_cand if n_cand else 0.0
        r = overlap / n_ref if n_ref else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)

    def to_json(self) -> dict:
        return {"p": self.precision, "r": self.recall, "f1": self.f1}


def normalize(tokens: Sequence[str] | str) -> list[str]:
    if isinstance(tokens, str):
        tokens = tokens.split()
    return [t.lower() for t in tokens]


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n: int = 1) -> RougeScore:
    """Clipped n-gram overlap."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand, ref = ngrams(normalize(candidate), n), ngrams(normalize(reference), n)
    overlap = sum((cand & ref).values())
    return RougeScore.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def _as_ids(a: list[str], b: list[str]) -> tuple[np.ndarray, np.ndarray]:
    table: dict[str, int] = {}
    ia = np.array([table.setdefault(t, len(table)) for t in a], dtype=np.int64)
    ib = np.array([table.setdefault(t, len(table)) for t in b], dtype=np.int64)
    return ia, ib


def rouge_l(candidate, reference) -> RougeScore:
    """Summary-level LCS on the concatenated token sequences."""
    cand, ref = normalize(candidate), normalize(reference)
    ia, ib = _as_ids(cand, ref)
    return RougeScore.from_counts(kernels.lcs_length(ia, ib), len(cand), len(ref))


METRICS = {
    "rouge1": lambda c, r: rouge_n(c, r, 1),
    "rouge2": lambda c, r: rouge_n(c, r, 2),
    "rougeL": rouge_l,
}


def limited_length_recall(candidate, reference, metric: str = "rouge1") -> float:
    """Recall after truncating the candidate to the reference length."""
    cand, ref = normalize(candidate), normalize(reference)
    if not ref:
        log.warning("limited_length_recall: empty reference")
        return 0.0
    return METRICS[metric](cand[: len(ref)], ref).recall


def entity_coverage(gold_entities: Sequence[str], summary) -> float | None:
    """Share of gold entity surfaces found contiguously in ``summary``; None without gold."""
    gold = sorted({" ".join(normalize(e)) for e in gold_entities if e.strip()})
    if not gold:
        return None
    toks = normalize(summary)
    padded = " " + " ".join(toks) + " "
    hit = sum(1 for e in gold if f" {e} " in padded)
    return hit / len(gold)


def corpus_report(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                  coverages: Sequence[float | None] | None = None,
                  limited_length: bool = False) -> dict:
    """Mean ROUGE P/R/F1 per metric; optionally limited-length recall."""
    if len(candidates) != len(references):
        raise ValueError("candidate/reference count mismatch")
    report: dict = {}
    for name, fn in METRICS.items():
        scores = [fn(c, r) for c, r in zip(candidates, references)]
        report[name] = {
            "p": float(np.mean([s.precision for s in scores])) if scores else 0.0,
            "r": float(np.mean([s.recall for s in scores])) if scores else 0.0,
            "f1": float(np.mean([s.f1 for s in scores])) if scores else 0.0,
        }
        if limited_length:
            report[name]["r_limited"] = float(np.mean(
                [limited_length_recall(c, r, name) for c, r in zip(candidates, references)])) if scores else 0.0
    covs = [c for c in (coverages or []) if c is not None]
    report["entity_coverage"] = float(np.mean(covs)) if covs else None
    report["n"] = len(candidates)
    return report


# ----------------------------------------------------------------- bootstrap


@dataclass
class SigTestConfig:
    sample_size: int = 3000
    n_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.sample_size < 1 or self.n_iter < 1:
            raise ValueError("sample_size and n_iter must be >= 1")


def paired_bootstrap(scores_a: Sequence[float], scores_b: Sequence[float],
                     cfg: SigTestConfig | None = None) -> float:
    """One-sided p-value: share of resamples where mean(A) - mean(B) <= 0.

    Both systems are resampled with the same indices; ties count against A.
    """
    cfg = cfg or SigTestConfig()
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"score length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("no scores")
    rng = np.random.default_rng(cfg.seed)
    idx = rng.integers(0, a.size, size=(cfg.n_iter, cfg.sample_size))
    diffs = kernels.bootstrap_mean_diffs(a - b, idx)
    return float(np.mean(diffs <= 0.0))
