"""Vector knowledge bases for retrieval-augmented translation.

Strategy A keeps three separate stores (Oracle context, PostgreSQL docs,
SME conversion rules); Strategy B keeps a single store of Oracle ->
PostgreSQL pairs. Both are served by :class:`VectorIndex`, an exact cosine
k-NN index over embeddings from a deterministic character-trigram TF-IDF
embedder (or an external HTTP embedding endpoint).
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmbedderMismatch, EmbedderUnavailable, StoreMissing

log = logging.getLogger(__name__)

INDEX_FORMAT_VERSION = 1
DEFAULT_MIN_SIMILARITY_A = 0.15
DEFAULT_MIN_SIMILARITY_B = 0.25
NO_MATCH = "NoMatch"
SCENARIOS = ("ExactMatch", NO_MATCH, "PartialMatch", "MixedFeature", "Ambiguous",
             "SyntaxAlikeSemanticsDiffer")
TIE_DECIMALS = 12


class StoreKind(str, enum.Enum):
    ORACLE_CONTEXT = "oracle_context"
    PG_DOCS = "pg_docs"
    SME_RULES = "sme_rules"
    PAIR_EXAMPLES = "pair_examples"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip()
        aliases = {"OracleContext": "oracle_context", "PgDocs": "pg_docs",
                   "SmeRules": "sme_rules", "PairExamples": "pair_examples"}
        return cls(aliases.get(key, key.lower().replace("-", "_")))


STRATEGY_A_STORES = (StoreKind.ORACLE_CONTEXT, StoreKind.PG_DOCS, StoreKind.SME_RULES)


@dataclass(frozen=True)
class KbEntry:
    id: str
    store: StoreKind
    text: str
    pair_target: str | None = None
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "store", StoreKind.parse(self.store))
        if (self.pair_target is not None) != (self.store is StoreKind.PAIR_EXAMPLES):
            raise ValueError("pair_target must be set exactly for pair_examples entries")

    @classmethod
    def create(cls, store, text, pair_target=None, metadata=None) -> "KbEntry":
        h = hashlib.sha256()
        h.update(text.encode("utf-8"))
        if pair_target is not None:
            h.update(b"\x00" + pair_target.encode("utf-8"))
        return cls(h.hexdigest()[:16], store, text, pair_target, dict(metadata or {}))

    @property
    def feature_tags(self) -> list[str]:
        return list(self.metadata.get("features", ()))

    def to_dict(self) -> dict:
        d = {"id": self.id, "store": self.store.value, "text": self.text}
        if self.pair_target is not None:
            d["pair_target"] = self.pair_target
        d["metadata"] = dict(self.metadata)
        return d

    @classmethod
    def from_dict(cls, d: Mapping, store=None) -> "KbEntry":
        store = d.get("store", store)
        if store is None:
            raise ValueError("entry has no store")
        if d.get("id"):
            return cls(d["id"], store, d["text"], d.get("pair_target"), dict(d.get("metadata") or {}))
        return cls.create(store, d["text"], d.get("pair_target"), d.get("metadata"))


def unique_ids(entries: Iterable[KbEntry]) -> list[KbEntry]:
    """Suffix repeated ids (``-1``, ``-2``...) in input order."""
    seen: Counter = Counter()
    out = []
    for e in entries:
        n = seen[e.id]
        seen[e.id] += 1
        out.append(e if n == 0 else replace(e, id=f"{e.id}-{n}"))
    return out


def read_entries_jsonl(path, store=None) -> list[KbEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                entries.append(KbEntry.from_dict(json.loads(line), store))
    return unique_ids(entries)


def paragraph_entries(text: str, store, source: str = "", max_bytes: int = 2048,
                      metadata: Mapping | None = None) -> list[KbEntry]:
    """Split prose (docs, SME rules) into blank-line delimited entries."""
    paras = [p.strip() for p in text.replace("\r\n", "\n").split("\n\n")]
    pieces = []
    for p in filter(None, paras):
        cur = ""
        for line in p.split("\n"):
            cand = f"{cur}\n{line}" if cur else line
            if cur and len(cand.encode("utf-8")) > max_bytes:
                pieces.append(cur)
                cur = line
            else:
                cur = cand
        pieces.append(cur)
    meta = {"source": source, **(metadata or {})}
    return unique_ids(KbEntry.create(store, p, metadata=meta) for p in pieces)


# -- embedders ----------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    embedder_id: str

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def cosine(a, b) -> float:
    a = np.asarray(getattr(a, "values", a), dtype=np.float64)
    b = np.asarray(getattr(b, "values", b), dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def normalize_text(text: str) -> str:
    return " ".join(text.lower().split())


@lru_cache(maxsize=1 << 16)
def _bucket(gram: str, dim: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


def char_ngrams(text: str, n: int = 3) -> list[str]:
    t = normalize_text(text)
    if not t:
        return []
    if len(t) < n:
        return [t]
    return [t[i:i + n] for i in range(len(t) - n + 1)]


class TrigramEmbedder:
    """Hashed character n-gram TF-IDF, L2-normalised.

    Unfitted, every bucket has IDF 1. :meth:`fit` returns a new embedder whose
    IDF table comes from a corpus; the table is part of ``embedder_id`` so
    vectors from differently fitted embedders are never mixed.
    """

    kind = "char-tfidf"

    def __init__(self, dim: int = 1024, n: int = 3, idf=None):
        self.dim = dim
        self.n = n
        self.idf = None if idf is None else np.asarray(idf, dtype=np.float64)

    @property
    def fitted(self) -> bool:
        return self.idf is not None

    @property
    def embedder_id(self) -> str:
        tag = "raw"
        if self.idf is not None:
            tag = hashlib.sha256(self.idf.astype("<f8").tobytes()).hexdigest()[:12]
        return f"{self.kind}-n{self.n}-d{self.dim}:{tag}"

    def buckets(self, text: str) -> Counter:
        return Counter(_bucket(g, self.dim) for g in char_ngrams(text, self.n))

    def fit(self, texts: Iterable[str]) -> "TrigramEmbedder":
        df = np.zeros(self.dim)
        n_docs = 0
        for t in texts:
            n_docs += 1
            for b in self.buckets(t):
                df[b] += 1
        idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
        return TrigramEmbedder(self.dim, self.n, idf)

    def embed(self, text: str) -> EmbeddingVector:
        v = np.zeros(self.dim)
        for b, count in self.buckets(text).items():
            v[b] = count
        if self.idf is not None:
            v *= self.idf
        norm = np.linalg.norm(v)
        if norm > 0:
            v /= norm
        return EmbeddingVector(v, self.embedder_id)

    def config(self) -> dict:
        cfg = {"kind": self.kind, "dim": self.dim, "n": self.n}
        if self.idf is not None:
            cfg["idf"] = self.idf.tolist()
        return cfg


class HttpEmbedder:
    """External embedding endpoint: POST {"input", "model"} -> {"embedding": [...]}."""

    kind = "http"

    def __init__(self, url: str | None = None, model: str = "", timeout: float = 30.0, dim: int | None = None):
        self.url = url or os.environ.get("MIGRATE_EMBED_URL")
        if not self.url:
            raise EmbedderUnavailable("no embedding endpoint configured (MIGRATE_EMBED_URL)")
        self.model = model
        self.timeout = timeout
        self.dim = dim
        self.fitted = True

    @property
    def embedder_id(self) -> str:
        return f"http:{self.url}#{self.model}"

    def fit(self, texts) -> "HttpEmbedder":
        return self

    def embed(self, text: str) -> EmbeddingVector:
        body = json.dumps({"input": text, "model": self.model}).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
            v = np.asarray(payload["embedding"], dtype=np.float64)
        except (urllib.error.URLError, OSError, KeyError, ValueError) as exc:
            raise EmbedderUnavailable(f"{self.url}: {exc}") from exc
        if self.dim is not None and v.shape != (self.dim,):
            raise EmbedderUnavailable(f"{self.url}: expected {self.dim} dims, got {v.shape}")
        norm = np.linalg.norm(v)
        return EmbeddingVector(v / norm if norm > 0 else v, self.embedder_id)

    def config(self) -> dict:
        return {"kind": self.kind, "url": self.url, "model": self.model, "dim": self.dim}


def embedder_from_config(cfg: Mapping):
    if cfg["kind"] == TrigramEmbedder.kind:
        return TrigramEmbedder(cfg["dim"], cfg["n"], cfg.get("idf"))
    if cfg["kind"] == HttpEmbedder.kind:
        return HttpEmbedder(cfg["url"], cfg.get("model", ""), dim=cfg.get("dim"))
    raise ValueError(f"unknown embedder kind {cfg['kind']!r}")


def embed(text: str, embedder=None) -> EmbeddingVector:
    return (embedder or TrigramEmbedder()).embed(text)


# -- index --------------------------------------------------------------------


@dataclass(frozen=True)
class RetrievalResult:
    entry: KbEntry
    similarity: float
    rank: int

    @property
    def store(self) -> StoreKind:
        return self.entry.store


def _unit_rows(vectors32: np.ndarray) -> np.ndarray:
    m = vectors32.astype(np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


class VectorIndex:
    """Exact cosine k-NN over a single store. Immutable after construction."""

    def __init__(self, store, entries: Sequence[KbEntry], vectors, embedder):
        self.store = StoreKind.parse(store)
        self.entries = tuple(entries)
        self.embedder = embedder
        dim = getattr(embedder, "dim", None) or (vectors.shape[1] if len(vectors) else 0)
        self.vectors = np.asarray(vectors, dtype="<f4").reshape(len(self.entries), dim)
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("entry ids must be unique within a store")
        if any(e.store is not self.store for e in self.entries):
            raise ValueError("all entries of an index must belong to its store")
        self._unit = _unit_rows(self.vectors)
        order = sorted(range(len(ids)), key=ids.__getitem__)
        self._id_rank = np.empty(len(ids), dtype=np.int64)
        self._id_rank[order] = np.arange(len(ids))

    @property
    def embedder_id(self) -> str:
        return self.embedder.embedder_id

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def empty(cls, store, embedder=None) -> "VectorIndex":
        embedder = embedder or TrigramEmbedder()
        return cls(store, (), np.zeros((0, embedder.dim), dtype="<f4"), embedder)

    def similarities(self, text: str) -> np.ndarray:
        q = self.embedder.embed(text).values.astype("<f4").astype(np.float64)
        norm = np.linalg.norm(q)
        if norm == 0 or len(self.entries) == 0:
            return np.zeros(len(self.entries))
        return np.clip(self._unit @ (q / norm), -1.0, 1.0)

    def query(self, text: str, k: int, min_similarity: float | None = None,
              prefer_tags: Iterable[str] = ()) -> list[RetrievalResult]:
        if k < 1:
            raise ValueError("k must be >= 1")
        sims = self.similarities(text)
        # similarities equal to TIE_DECIMALS places are ties, broken by id
        ranked = np.round(sims, TIE_DECIMALS)
        prefer = set(prefer_tags)
        tagless = np.array([0 if prefer & set(e.feature_tags) else 1 for e in self.entries]) \
            if prefer else np.zeros(len(self.entries), dtype=np.int64)
        # lexsort: last key is primary
        order = np.lexsort((self._id_rank, tagless, -ranked))
        out = []
        for i in order:
            if min_similarity is not None and sims[i] < min_similarity:
                break
            out.append(RetrievalResult(self.entries[i], float(sims[i]), len(out) + 1))
            if len(out) == k:
                break
        return out

    def add_vectors(self, entries: Sequence[KbEntry], vectors: Sequence[EmbeddingVector]) -> "VectorIndex":
        """New index with extra pre-computed vectors appended."""
        for v in vectors:
            if v.embedder_id != self.embedder_id:
                raise EmbedderMismatch(f"vector from {v.embedder_id}, index uses {self.embedder_id}")
            if v.dim != self.dim:
                raise EmbedderMismatch(f"vector has {v.dim} dims, index has {self.dim}")
        stacked = np.vstack([self.vectors, *[v.values.astype("<f4")[None, :] for v in vectors]])
        return VectorIndex(self.store, [*self.entries, *entries], stacked, self.embedder)

    def rebuild(self) -> "VectorIndex":
        """Build a fresh index from the same entries (ranking-stability checks)."""
        base = self.embedder
        if isinstance(base, TrigramEmbedder):
            base = TrigramEmbedder(base.dim, base.n)
        return build_index(self.entries, base)

    # persistence: manifest.json + entries.jsonl + vectors.f32 (little-endian)
    def save(self, directory, overwrite: bool = False) -> Path:
        d = Path(directory)
        if (d / "manifest.json").exists() and not overwrite:
            raise FileExistsError(f"{d} already holds an index; indexes are immutable")
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "entries.jsonl", "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")
        (d / "vectors.f32").write_bytes(self.vectors.astype("<f4").tobytes())
        manifest = {"format_version": INDEX_FORMAT_VERSION, "store": self.store.value,
                    "embedder_id": self.embedder_id, "dim": self.dim, "count": len(self),
                    "embedder": self.embedder.config()}
        (d / "manifest.json").write_text(json.dumps(manifest, sort_keys=True) + "\n", encoding="utf-8")
        return d

    @classmethod
    def load(cls, directory) -> "VectorIndex":
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
        if manifest.get("format_version") != INDEX_FORMAT_VERSION:
            raise ValueError(f"{d}: unsupported index format {manifest.get('format_version')}")
        embedder = embedder_from_config(manifest["embedder"])
        if embedder.embedder_id != manifest["embedder_id"]:
            raise EmbedderMismatch(f"{d}: manifest embedder_id does not match stored embedder")
        entries = read_entries_jsonl(d / "entries.jsonl")
        raw = np.frombuffer((d / "vectors.f32").read_bytes(), dtype="<f4")
        if raw.size != manifest["count"] * manifest["dim"] or len(entries) != manifest["count"]:
            raise ValueError(f"{d}: index files are inconsistent with the manifest")
        return cls(manifest["store"], entries, raw.reshape(manifest["count"], manifest["dim"]), embedder)


def build_index(entries: Sequence[KbEntry], embedder=None) -> VectorIndex:
    entries = list(entries)
    if not entries:
        raise ValueError("build_index needs at least one entry")
    stores = {e.store for e in entries}
    if len(stores) != 1:
        raise ValueError(f"entries span several stores: {sorted(s.value for s in stores)}")
    entries = unique_ids(entries)
    embedder = embedder or TrigramEmbedder()
    if not embedder.fitted:
        embedder = embedder.fit(e.text for e in entries)
    vectors = np.vstack([embedder.embed(e.text).values for e in entries]).astype("<f4")
    return VectorIndex(stores.pop(), entries, vectors, embedder)


def query(index: VectorIndex, chunk_text: str, k: int, min_similarity: float | None = None):
    return index.query(chunk_text, k, min_similarity)


class KnowledgeBase:
    """A set of per-store indexes, persisted as one sub-directory per store."""

    def __init__(self, indexes: Mapping | None = None):
        self.indexes: dict[StoreKind, VectorIndex] = {
            StoreKind.parse(k): v for k, v in (indexes or {}).items()
        }

    def __contains__(self, store) -> bool:
        return StoreKind.parse(store) in self.indexes

    def __getitem__(self, store) -> VectorIndex:
        store = StoreKind.parse(store)
        if store not in self.indexes:
            raise StoreMissing(store.value)
        return self.indexes[store]

    def missing(self, stores: Iterable) -> list[str]:
        return [StoreKind.parse(s).value for s in stores if StoreKind.parse(s) not in self.indexes]

    def save(self, directory, overwrite=False) -> Path:
        d = Path(directory)
        for store, index in sorted(self.indexes.items(), key=lambda kv: kv[0].value):
            index.save(d / store.value, overwrite=overwrite)
        return d

    @classmethod
    def load(cls, directory) -> "KnowledgeBase":
        d = Path(directory)
        indexes = {}
        for store in StoreKind:
            if (d / store.value / "manifest.json").exists():
                indexes[store] = VectorIndex.load(d / store.value)
        return cls(indexes)


# -- strategies ---------------------------------------------------------------


def _text_and_tags(chunk):
    if isinstance(chunk, str):
        return chunk, []
    return chunk.text, chunk.features.classes


@dataclass(frozen=True)
class TripleContext:
    oracle_context: list[RetrievalResult]
    pg_docs: list[RetrievalResult]
    sme_rules: list[RetrievalResult]

    def provenance(self) -> dict:
        return {s: [[r.entry.id, round(r.similarity, 12)] for r in getattr(self, s)]
                for s in ("oracle_context", "pg_docs", "sme_rules")}


def retrieve_strategy_a(indexes, chunk, k: int, min_similarity: float = DEFAULT_MIN_SIMILARITY_A) -> TripleContext:
    """Query the three Strategy A stores independently.

    At equal similarity, entries whose feature tags intersect the chunk's
    feature classes rank first.
    """
    kb = indexes if isinstance(indexes, KnowledgeBase) else KnowledgeBase(indexes)
    missing = kb.missing(STRATEGY_A_STORES)
    if missing:
        raise StoreMissing(missing[0])
    text, tags = _text_and_tags(chunk)
    got = [kb[s].query(text, k, min_similarity, prefer_tags=tags) for s in STRATEGY_A_STORES]
    return TripleContext(*got)


@dataclass(frozen=True)
class PairExample:
    oracle: str
    postgres: str
    similarity: float
    rank: int
    entry_id: str


def retrieve_strategy_b(index, chunk, k: int, min_similarity: float = DEFAULT_MIN_SIMILARITY_B) -> list[PairExample]:
    if isinstance(index, KnowledgeBase):
        index = index[StoreKind.PAIR_EXAMPLES]
    if index.store is not StoreKind.PAIR_EXAMPLES:
        raise StoreMissing(StoreKind.PAIR_EXAMPLES.value)
    text, _ = _text_and_tags(chunk)
    return [PairExample(r.entry.text, r.entry.pair_target, r.similarity, r.rank, r.entry.id)
            for r in index.query(text, k, min_similarity)]


# -- gold-standard retrieval validation ---------------------------------------


@dataclass(frozen=True)
class GoldRetrievalCase:
    query_chunk: str
    scenario: str
    expected_ids: tuple[str, ...] = ()
    must_abstain: bool = False
    store: StoreKind | None = None
    case_id: str = ""

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.must_abstain != (self.scenario == NO_MATCH):
            raise ValueError("must_abstain must be true exactly for NoMatch cases")
        object.__setattr__(self, "expected_ids", tuple(self.expected_ids))
        if self.store is not None:
            object.__setattr__(self, "store", StoreKind.parse(self.store))

    @classmethod
    def from_dict(cls, d: Mapping) -> "GoldRetrievalCase":
        return cls(d["query_chunk"], d["scenario"], tuple(d.get("expected_ids", ())),
                   bool(d.get("must_abstain", d["scenario"] == NO_MATCH)), d.get("store"),
                   d.get("id", ""))


def read_gold_jsonl(path) -> list[GoldRetrievalCase]:
    with open(path, encoding="utf-8") as fh:
        return [GoldRetrievalCase.from_dict(json.loads(line)) for line in fh if line.strip()]


@dataclass
class RetrievalScorecard:
    cases: int
    hit_at_k: float | None
    mrr: float | None
    abstention_correctness: float | None
    ranking_stable: bool
    k: int
    per_scenario: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"cases": self.cases, "k": self.k, "hit_at_k": self.hit_at_k, "mrr": self.mrr,
                "abstention_correctness": self.abstention_correctness,
                "ranking_stable": self.ranking_stable, "per_scenario": self.per_scenario}


def _mean(xs):
    return sum(xs) / len(xs) if xs else None


def evaluate_retrieval(indexes, gold: Sequence[GoldRetrievalCase], k: int,
                       min_similarity: float | None = DEFAULT_MIN_SIMILARITY_B,
                       check_stability: bool = True) -> RetrievalScorecard:
    if not gold:
        raise ValueError("gold dataset is empty")
    if isinstance(indexes, VectorIndex):
        indexes = {indexes.store: indexes}
    kb = indexes if isinstance(indexes, KnowledgeBase) else KnowledgeBase(indexes)

    def pick(case, pool):
        if case.store is not None:
            return pool[case.store]
        if len(pool.indexes) != 1:
            raise ValueError("gold case needs a store when several indexes are given")
        return next(iter(pool.indexes.values()))

    rebuilt = KnowledgeBase({s: ix.rebuild() for s, ix in kb.indexes.items()}) if check_stability else None
    hits, rrs, abst = [], [], []
    scen: dict[str, dict[str, list]] = {}
    stable = True
    for case in gold:
        index = pick(case, kb)
        res = index.query(case.query_chunk, k, min_similarity)
        ids = [r.entry.id for r in res]
        bucket = scen.setdefault(case.scenario, {"n": 0, "hit": [], "rr": [], "abstain": []})
        bucket["n"] += 1
        if rebuilt is not None:
            again = [r.entry.id for r in pick(case, rebuilt).query(case.query_chunk, k, min_similarity)]
            stable &= again == ids
        if case.must_abstain:
            ok = 1.0 if not ids else 0.0
            abst.append(ok)
            bucket["abstain"].append(ok)
            continue
        if not case.expected_ids:
            continue
        ranks = [ids.index(e) + 1 for e in case.expected_ids if e in ids]
        hit = 1.0 if ranks else 0.0
        rr = 1.0 / min(ranks) if ranks else 0.0
        hits.append(hit)
        rrs.append(rr)
        bucket["hit"].append(hit)
        bucket["rr"].append(rr)
    per = {s: {"cases": b["n"], "hit_at_k": _mean(b["hit"]),
               "mrr": _mean(b["rr"]), "abstention_correctness": _mean(b["abstain"])}
           for s, b in scen.items()}
    return RetrievalScorecard(len(gold), _mean(hits), _mean(rrs), _mean(abst), stable, k, per)
