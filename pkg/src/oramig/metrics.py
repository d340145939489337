"""Lexical similarity metrics over SQL text: token recall, BLEU and chrF.

Token-level metrics share the profiler's lexer (PostgreSQL dialect by
default). Comments are dropped, keywords are upper-cased and literals are
kept verbatim. Corpus variants sum the sufficient statistics over all pairs
before combining, so scoring one pair is the one-element corpus case.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .lexer import Dialect, tokenize

MAX_BLEU_ORDER = 4
CHRF_ORDER = 6
CHRF_BETA = 2.0


def metric_tokens(text: str, dialect=Dialect.POSTGRESQL) -> list[str]:
    return [t.norm for t in tokenize(text, dialect)]


def ngrams(seq: Sequence, n: int) -> Counter:
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def _as_tokens(x) -> list[str]:
    return metric_tokens(x) if isinstance(x, str) else list(x)


# -- recall -------------------------------------------------------------------


def recall_stats(candidate, reference) -> tuple[int, int, int]:
    """(overlap, reference length, candidate length)."""
    cand, ref = _as_tokens(candidate), _as_tokens(reference)
    overlap = sum((Counter(cand) & Counter(ref)).values())
    return overlap, len(ref), len(cand)


def _recall_from(overlap: int, ref_len: int, cand_len: int) -> float:
    if ref_len == 0:
        return 1.0 if cand_len == 0 else 0.0
    return overlap / ref_len


def token_recall(candidate, reference) -> float:
    """Multiset token overlap divided by the reference length."""
    return _recall_from(*recall_stats(candidate, reference))


def corpus_recall(pairs: Iterable[tuple]) -> float:
    o = r = c = 0
    for cand, ref in pairs:
        a, b, d = recall_stats(cand, ref)
        o, r, c = o + a, r + b, c + d
    return _recall_from(o, r, c)


# -- BLEU ---------------------------------------------------------------------


@dataclass
class BleuStats:
    matches: list[int]
    totals: list[int]
    cand_len: int
    ref_len: int

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats([a + b for a, b in zip(self.matches, other.matches)],
                         [a + b for a, b in zip(self.totals, other.totals)],
                         self.cand_len + other.cand_len, self.ref_len + other.ref_len)

    def score(self) -> float:
        if self.cand_len == 0 or self.totals[0] == 0 or self.matches[0] == 0:
            return 0.0
        # order 1 unsmoothed, higher orders add-one
        logs = [math.log(self.matches[0] / self.totals[0])]
        logs += [math.log((m + 1) / (t + 1)) for m, t in zip(self.matches[1:], self.totals[1:])]
        bp = 1.0 if self.cand_len > self.ref_len else math.exp(1 - self.ref_len / self.cand_len)
        return min(1.0, bp * math.exp(sum(logs) / len(logs)))


def bleu_stats(candidate, reference, max_order: int = MAX_BLEU_ORDER) -> BleuStats:
    cand, ref = _as_tokens(candidate), _as_tokens(reference)
    matches, totals = [], []
    for n in range(1, max_order + 1):
        c = ngrams(cand, n)
        matches.append(sum((c & ngrams(ref, n)).values()))
        totals.append(max(0, len(cand) - n + 1))
    return BleuStats(matches, totals, len(cand), len(ref))


def bleu(candidate, reference) -> float:
    return bleu_stats(candidate, reference).score()


def corpus_bleu(pairs: Iterable[tuple]) -> float:
    total = BleuStats([0] * MAX_BLEU_ORDER, [0] * MAX_BLEU_ORDER, 0, 0)
    for cand, ref in pairs:
        total = total + bleu_stats(cand, ref)
    return total.score()


# -- chrF ---------------------------------------------------------------------


def collapse_ws(text: str) -> str:
    return " ".join(text.split())


@dataclass
class ChrfStats:
    matches: list[int]
    cand: list[int]
    ref: list[int]

    def __add__(self, other: "ChrfStats") -> "ChrfStats":
        return ChrfStats(*([a + b for a, b in zip(x, y)] for x, y in
                           ((self.matches, other.matches), (self.cand, other.cand), (self.ref, other.ref))))

    def score(self, beta: float = CHRF_BETA) -> float:
        orders = [i for i in range(len(self.matches)) if self.cand[i] or self.ref[i]]
        if not orders:
            return 1.0  # both sides empty
        p = sum(self.matches[i] / self.cand[i] if self.cand[i] else 0.0 for i in orders) / len(orders)
        r = sum(self.matches[i] / self.ref[i] if self.ref[i] else 0.0 for i in orders) / len(orders)
        if p == 0 and r == 0:
            return 0.0
        b2 = beta * beta
        return (1 + b2) * p * r / (b2 * p + r)


def chrf_stats(candidate: str, reference: str, max_order: int = CHRF_ORDER) -> ChrfStats:
    cand, ref = collapse_ws(candidate), collapse_ws(reference)
    m, c, r = [], [], []
    for n in range(1, max_order + 1):
        cg, rg = ngrams(cand, n), ngrams(ref, n)
        m.append(sum((cg & rg).values()))
        c.append(sum(cg.values()))
        r.append(sum(rg.values()))
    return ChrfStats(m, c, r)


def chrf(candidate: str, reference: str, beta: float = CHRF_BETA) -> float:
    """Character n-gram F-score; precision and recall averaged over orders 1..6."""
    return chrf_stats(candidate, reference).score(beta)


def corpus_chrf(pairs: Iterable[tuple], beta: float = CHRF_BETA) -> float:
    total = ChrfStats([0] * CHRF_ORDER, [0] * CHRF_ORDER, [0] * CHRF_ORDER)
    for cand, ref in pairs:
        total = total + chrf_stats(cand, ref)
    return total.score(beta)
