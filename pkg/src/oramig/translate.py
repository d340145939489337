"""Translation pipelines: direct conversion, history-aware, RAG Strategy A/B.

Every pipeline chunks each input script, builds one prompt per chunk, sends
it to a :class:`TranslatorBackend` and reassembles the outputs. A file whose
chunk exhausts its retries is recorded as *not converted*; other files are
unaffected.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .chunker import Chunk, ChunkConfig, assemble, chunk
from .errors import BackendFailure, StoreMissing, UnboundPlaceholder
from .kb import (STRATEGY_A_STORES, KnowledgeBase, StoreKind, retrieve_strategy_a,
                 retrieve_strategy_b)
from .lexer import Dialect, is_word, tokenize
from .manifest import RunManifest, corpus_fingerprint, relative_names, stable_id
from .taxonomy import FeatureTaxonomy, SourceScript

log = logging.getLogger(__name__)

NO_CONTEXT = "[no examples retrieved]"


class Pipeline(str, enum.Enum):
    CONVERSION = "conversion"
    HISTORY = "history"
    RAG_A = "rag-a"
    RAG_B = "rag-b"


TEMPLATE_FILES = {
    "StrategyA": "strategy_a.txt",
    "StrategyB": "strategy_b.txt",
    "Direct": "direct.txt",
    "History": "history.txt",
}
_PLACEHOLDER = re.compile(r"\{([A-Z][A-Z_]*)\}")


def load_template(template_id: str, template_dir=None) -> str:
    if template_id not in TEMPLATE_FILES:
        raise ValueError(f"unknown template {template_id!r}")
    name = TEMPLATE_FILES[template_id]
    if template_dir is not None and (Path(template_dir) / name).exists():
        return (Path(template_dir) / name).read_text(encoding="utf-8")
    return resources.files("oramig.prompts").joinpath(name).read_text(encoding="utf-8")


def placeholders(template: str) -> list[str]:
    return list(dict.fromkeys(_PLACEHOLDER.findall(template)))


@dataclass(frozen=True)
class PromptSpec:
    template_id: str
    filled_text: str
    placeholders_bound: Mapping[str, str]


def build_prompt(template_id: str, bindings: Mapping[str, str], template: str | None = None) -> PromptSpec:
    """Substitute ``{NAME}`` placeholders in one pass; bound values are never re-expanded."""
    template = load_template(template_id) if template is None else template
    names = placeholders(template)
    for name in names:
        if name not in bindings:
            raise UnboundPlaceholder(name)
    extra = set(bindings) - set(names)
    if extra:
        raise ValueError(f"bindings for placeholders not in template {template_id}: {sorted(extra)}")
    filled = _PLACEHOLDER.sub(lambda m: bindings[m.group(1)], template)
    return PromptSpec(template_id, filled, dict(bindings))


# -- backends -----------------------------------------------------------------


class EchoBackend:
    """Returns the chunk unchanged."""

    kind = "echo"

    def translate(self, prompt: PromptSpec, chunk: Chunk) -> str:
        return chunk.text

    def config(self) -> dict:
        return {"kind": self.kind}


DEFAULT_REWRITES = {
    "NUMBER": "NUMERIC",
    "VARCHAR2": "VARCHAR",
    "NVARCHAR2": "VARCHAR",
    "SYSDATE": "CURRENT_TIMESTAMP",
    "SYSTIMESTAMP": "CURRENT_TIMESTAMP",
    "NVL": "COALESCE",
    "CLOB": "TEXT",
    "BLOB": "BYTEA",
    "PLS_INTEGER": "INTEGER",
    "BINARY_INTEGER": "INTEGER",
}


class RuleBaselineBackend:
    """Deterministic word-level rewrite table; literals and comments are untouched."""

    kind = "rule"

    def __init__(self, rules: Mapping[str, str] | None = None):
        self.rules = {k.upper(): v for k, v in (rules or DEFAULT_REWRITES).items()}

    def translate(self, prompt: PromptSpec, chunk: Chunk) -> str:
        text = chunk.text
        out = []
        pos = 0
        for tok in tokenize(text, Dialect.ORACLE):
            repl = self.rules.get(tok.text.upper()) if is_word(tok) else None
            if repl is not None:
                out.append(text[pos:tok.start])
                out.append(repl)
                pos = tok.end
        out.append(text[pos:])
        return "".join(out)

    def config(self) -> dict:
        return {"kind": self.kind, "rules": dict(sorted(self.rules.items()))}


_FENCE = re.compile(r"\A\s*```[A-Za-z0-9_+-]*[ \t]*\r?\n(.*?)\r?\n?```\s*\Z", re.S)


def strip_code_fences(text: str) -> str:
    m = _FENCE.match(text)
    return m.group(1) if m else text


class HttpLlmBackend:
    """JSON-over-HTTP completion endpoint.

    Request ``{model, prompt, max_tokens, temperature}``, response ``{text}``.
    URL and key default to ``MIGRATE_LLM_URL`` / ``MIGRATE_LLM_KEY``.
    """

    kind = "http"

    def __init__(self, url: str | None = None, model: str = "", timeout: float = 120.0,
                 max_tokens: int = 4096, temperature: float = 0.0, api_key: str | None = None):
        self.url = url or os.environ.get("MIGRATE_LLM_URL")
        if not self.url:
            raise ValueError("no LLM endpoint configured (MIGRATE_LLM_URL)")
        self.model = model
        self.timeout = timeout
        self.max_tokens = max_tokens
        self.temperature = temperature
        self.api_key = api_key if api_key is not None else os.environ.get("MIGRATE_LLM_KEY")

    def translate(self, prompt: PromptSpec, chunk: Chunk) -> str:
        body = json.dumps({"model": self.model, "prompt": prompt.filled_text,
                           "max_tokens": self.max_tokens, "temperature": self.temperature})
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.url, data=body.encode("utf-8"), headers=headers)
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
            text = payload["text"]
        except (urllib.error.URLError, OSError, KeyError, ValueError, TypeError) as exc:
            raise BackendFailure(f"{self.url}: {exc}") from exc
        if not isinstance(text, str):
            raise BackendFailure(f"{self.url}: response 'text' is not a string")
        return strip_code_fences(text)

    def config(self) -> dict:
        return {"kind": self.kind, "url": self.url, "model": self.model, "timeout": self.timeout,
                "max_tokens": self.max_tokens, "temperature": self.temperature}


def make_backend(kind: str, **options):
    kind = kind.lower()
    if kind == "echo":
        return EchoBackend()
    if kind in ("rule", "rules", "rule-baseline"):
        return RuleBaselineBackend(options.get("rules"))
    if kind in ("http", "llm", "http-llm"):
        return HttpLlmBackend(**{k: v for k, v in options.items() if k != "rules"})
    raise ValueError(f"unknown backend {kind!r}")


# -- runs ---------------------------------------------------------------------


@dataclass(frozen=True)
class MigrationConfig:
    chunk: ChunkConfig = field(default_factory=ChunkConfig)
    history_budget_bytes: int = 16384
    max_attempts: int = 3
    backoff_base: float = 0.5
    k: int = 3
    min_similarity_a: float = 0.15
    min_similarity_b: float = 0.25
    jobs: int = 1
    max_in_flight: int = 4
    template_dir: str | None = None

    def snapshot(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TranslatedChunk:
    source: Chunk
    output_text: str
    prompt: PromptSpec
    retrieval_used: dict | None
    backend_latency: float
    attempt_count: int


@dataclass
class FileResult:
    path: str
    status: str  # "converted" | "not_converted"
    output_text: str | None
    chunks: list[TranslatedChunk]
    error: str | None = None
    size_class: str = "S"

    @property
    def converted(self) -> bool:
        return self.status == "converted"


@dataclass
class MigrationRun:
    run_id: str
    pipeline: Pipeline
    config: dict
    backend: dict
    results: list[FileResult]
    input_fingerprint: str = ""

    @property
    def failures(self) -> list[dict]:
        return [{"path": r.path, "cause": r.error} for r in self.results if not r.converted]

    def result(self, path: str) -> FileResult:
        for r in self.results:
            if r.path == path:
                return r
        raise KeyError(path)


def history_window(previous: Sequence[str], budget: int) -> str:
    """Previous outputs, most recent first, keeping at most ``budget`` bytes.

    The oldest bytes go first: whole older chunks are dropped, and a chunk
    that only partly fits keeps its tail.
    """
    items = []
    remaining = budget
    for out in reversed(previous):
        raw = out.encode("utf-8")
        if len(raw) <= remaining:
            items.append(out)
            remaining -= len(raw)
            continue
        if remaining > 0:
            items.append(raw[len(raw) - remaining:].decode("utf-8", "ignore"))
        break
    return "".join(items)


def _format_results(results) -> str:
    if not results:
        return NO_CONTEXT
    return "\n\n".join(r.entry.text for r in results)


def _format_pairs(pairs) -> str:
    if not pairs:
        return NO_CONTEXT
    return "\n\n".join(
        f"Example {p.rank} (similarity {p.similarity:.3f}):\nOracle:\n{p.oracle}\nPostgreSQL:\n{p.postgres}"
        for p in pairs
    )


class _Engine:
    def __init__(self, backend, pipeline: Pipeline, config: MigrationConfig, kb: KnowledgeBase | None,
                 taxonomy: FeatureTaxonomy | None, sleep: Callable[[float], None]):
        self.backend = backend
        self.pipeline = pipeline
        self.config = config
        self.kb = kb
        self.taxonomy = taxonomy
        self.sleep = sleep
        self.gate = threading.Semaphore(max(1, config.max_in_flight))
        self.templates = {t: load_template(t, config.template_dir) for t in TEMPLATE_FILES}

    def prompt_for(self, c: Chunk, previous: list[str]):
        cfg = self.config
        if self.pipeline is Pipeline.RAG_A:
            triple = retrieve_strategy_a(self.kb, c, cfg.k, cfg.min_similarity_a)
            bindings = {"ORACLE_CONTEXT": _format_results(triple.oracle_context),
                        "POSTGRES_DOCS": _format_results(triple.pg_docs),
                        "CONVERTING_RULES": _format_results(triple.sme_rules),
                        "CURRENT_CHUNK": c.text}
            return build_prompt("StrategyA", bindings, self.templates["StrategyA"]), triple.provenance()
        if self.pipeline is Pipeline.RAG_B:
            pairs = retrieve_strategy_b(self.kb, c, cfg.k, cfg.min_similarity_b)
            bindings = {"RETRIEVED_EXAMPLES": _format_pairs(pairs), "CURRENT_CHUNK": c.text}
            prov = {"pair_examples": [[p.entry_id, round(p.similarity, 12)] for p in pairs]}
            return build_prompt("StrategyB", bindings, self.templates["StrategyB"]), prov
        if self.pipeline is Pipeline.HISTORY and previous:
            history = history_window(previous, cfg.history_budget_bytes)
            return build_prompt("History", {"HISTORY": history, "CURRENT_CHUNK": c.text},
                                self.templates["History"]), None
        return build_prompt("Direct", {"CURRENT_CHUNK": c.text}, self.templates["Direct"]), None

    def call(self, prompt: PromptSpec, c: Chunk):
        last = None
        for attempt in range(1, self.config.max_attempts + 1):
            t0 = time.perf_counter()
            try:
                with self.gate:
                    out = self.backend.translate(prompt, c)
                return out, time.perf_counter() - t0, attempt
            except BackendFailure as exc:
                last = exc
                log.warning("%s chunk %d attempt %d failed: %s", c.script_path, c.index, attempt, exc)
                if attempt < self.config.max_attempts and self.config.backoff_base > 0:
                    self.sleep(self.config.backoff_base * 2 ** (attempt - 1))
        raise BackendFailure(f"chunk {c.index}: {last}")

    def run_file(self, script: SourceScript) -> FileResult:
        chunks = chunk(script, self.config.chunk, self.taxonomy)
        done: list[TranslatedChunk] = []
        previous: list[str] = []
        for c in chunks:
            prompt, prov = self.prompt_for(c, previous)
            try:
                out, latency, attempts = self.call(prompt, c)
            except BackendFailure as exc:
                return FileResult(script.path, "not_converted", None, done, str(exc), script.size_class)
            done.append(TranslatedChunk(c, out, prompt, prov, latency, attempts))
            previous.append(out)
        return FileResult(script.path, "converted", assemble(done), done, None, script.size_class)


def run_pipeline(scripts: Sequence[SourceScript], backend, pipeline, config: MigrationConfig | None = None,
                 kb: KnowledgeBase | Mapping | None = None, taxonomy: FeatureTaxonomy | None = None,
                 sleep: Callable[[float], None] = time.sleep) -> MigrationRun:
    pipeline = Pipeline(pipeline)
    config = config or MigrationConfig()
    if kb is not None and not isinstance(kb, KnowledgeBase):
        kb = KnowledgeBase(kb)
    if pipeline in (Pipeline.RAG_A, Pipeline.RAG_B):
        need = STRATEGY_A_STORES if pipeline is Pipeline.RAG_A else (StoreKind.PAIR_EXAMPLES,)
        missing = need if kb is None else [s for s in need if s not in kb]
        if missing:
            raise StoreMissing(", ".join(StoreKind(s).value for s in missing))
    for s in scripts:
        if s.dialect is not Dialect.ORACLE:
            raise ValueError(f"{s.path}: migration input must be Oracle SQL")
    engine = _Engine(backend, pipeline, config, kb, taxonomy, sleep)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(engine.run_file, scripts))
    else:
        results = [engine.run_file(s) for s in scripts]
    fingerprint = corpus_fingerprint((s.path, s.text) for s in scripts)
    backend_cfg = backend.config() if hasattr(backend, "config") else {"kind": type(backend).__name__}
    snapshot = config.snapshot()
    run_id = stable_id(pipeline.value, snapshot, backend_cfg, fingerprint)
    return MigrationRun(run_id, pipeline, snapshot, backend_cfg, results, fingerprint)


def run_conversion(scripts, backend, config=None, **kw) -> MigrationRun:
    return run_pipeline(scripts, backend, Pipeline.CONVERSION, config, **kw)


def run_history(scripts, backend, config=None, **kw) -> MigrationRun:
    return run_pipeline(scripts, backend, Pipeline.HISTORY, config, **kw)


def run_rag(scripts, backend, kb, strategy: str, k: int | None = None, config=None, **kw) -> MigrationRun:
    config = config or MigrationConfig()
    if k is not None:
        config = MigrationConfig(**{**config.__dict__, "k": k})
    pipeline = Pipeline.RAG_A if str(strategy).upper() in ("A", "RAG-A") else Pipeline.RAG_B
    return run_pipeline(scripts, backend, pipeline, config, kb=kb, **kw)


# -- run directory ------------------------------------------------------------


def write_run(run: MigrationRun, out_dir) -> Path:
    """Write outputs/, manifest.json, prompts.jsonl and timings.jsonl.

    Everything except ``timings.jsonl`` and the manifest timestamps is
    byte-identical across reruns with a deterministic backend.
    """
    out = Path(out_dir)
    (out / "outputs").mkdir(parents=True, exist_ok=True)
    names = relative_names([r.path for r in run.results])
    artifacts = []
    files = []
    for r in run.results:
        entry = {"path": os.path.abspath(r.path), "name": names[r.path], "status": r.status,
                 "size_class": r.size_class, "chunks": len(r.chunks)}
        if r.converted:
            rel = Path("outputs") / names[r.path]
            (out / rel).parent.mkdir(parents=True, exist_ok=True)
            (out / rel).write_text(r.output_text, encoding="utf-8")
            entry["output"] = rel.as_posix()
            artifacts.append(rel.as_posix())
        else:
            entry["cause"] = r.error
        files.append(entry)
    with open(out / "prompts.jsonl", "w", encoding="utf-8") as fh:
        for r in run.results:
            for tc in r.chunks:
                fh.write(json.dumps({"file": names[r.path], "index": tc.source.index,
                                     "template_id": tc.prompt.template_id,
                                     "bindings": tc.prompt.placeholders_bound,
                                     "retrieval": tc.retrieval_used,
                                     "attempts": tc.attempt_count}, sort_keys=True) + "\n")
    with open(out / "timings.jsonl", "w", encoding="utf-8") as fh:
        for r in run.results:
            for tc in r.chunks:
                fh.write(json.dumps({"file": names[r.path], "index": tc.source.index,
                                     "latency_s": tc.backend_latency}) + "\n")
    artifacts += ["prompts.jsonl", "timings.jsonl"]
    manifest = RunManifest(run.run_id, "migrate", {"pipeline": run.pipeline.value, **run.config,
                                                    "backend": run.backend},
                           run.input_fingerprint, artifacts=artifacts,
                           extra={"files": files, "not_converted": run.failures})
    manifest.write(out)
    return out
