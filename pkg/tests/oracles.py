"""Independent reference computations used to check the library."""

import math

import numpy as np

TIE_DECIMALS = 12


def _sparse(values) -> dict[int, float]:
    return {int(i): float(values[i]) for i in np.flatnonzero(values)}


def _cos(a: dict, b: dict) -> float:
    na = math.sqrt(math.fsum(v * v for v in a.values()))
    nb = math.sqrt(math.fsum(v * v for v in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return math.fsum((a[i] / na) * (b[i] / nb) for i in a.keys() & b.keys())


def brute_force_top_k(index, text: str, k: int, min_similarity=None) -> list[str]:
    """Rank every stored vector by exactly-summed cosine; ties (to 12 places) by id."""
    q = _sparse(index.embedder.embed(text).values.astype(np.float32))
    scored = []
    for entry, row in zip(index.entries, index.vectors):
        s = _cos(_sparse(row), q)
        if min_similarity is not None and s < min_similarity:
            continue
        scored.append((-round(s, TIE_DECIMALS), entry.id))
    scored.sort()
    return [i for _, i in scored[:k]]


# -- n-gram metrics -------------------------------------------------------------


def clipped(cand, ref) -> int:
    """Clipped n-gram matches by repeated removal from a list."""
    pool = list(ref)
    hits = 0
    for g in cand:
        if g in pool:
            pool.remove(g)
            hits += 1
    return hits


def grams(seq, n):
    return [tuple(seq[i:i + n]) for i in range(len(seq) - n + 1)]


def recall(cand, ref) -> float:
    if not ref:
        return 1.0 if not cand else 0.0
    return clipped(cand, ref) / len(ref)


def bleu(cand, ref) -> float:
    if not cand:
        return 0.0
    logs = []
    for n in range(1, 5):
        m, t = clipped(grams(cand, n), grams(ref, n)), len(grams(cand, n))
        if n == 1:
            if m == 0:
                return 0.0
            logs.append(math.log(m / t))
        else:
            logs.append(math.log((m + 1) / (t + 1)))
    bp = 1.0 if len(cand) > len(ref) else math.exp(1 - len(ref) / len(cand))
    return min(1.0, bp * math.exp(sum(logs) / 4))


def chrf(cand: str, ref: str, beta: float = 2.0) -> float:
    cand, ref = " ".join(cand.split()), " ".join(ref.split())
    ps, rs = [], []
    for n in range(1, 7):
        cg, rg = grams(cand, n), grams(ref, n)
        if not cg and not rg:
            continue
        m = clipped(cg, rg)
        ps.append(m / len(cg) if cg else 0.0)
        rs.append(m / len(rg) if rg else 0.0)
    if not ps:
        return 1.0
    p, r = sum(ps) / len(ps), sum(rs) / len(rs)
    if p == 0 and r == 0:
        return 0.0
    return (1 + beta ** 2) * p * r / (beta ** 2 * p + r)
