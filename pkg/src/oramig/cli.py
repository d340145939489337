"""``oramig`` command line: profile, chunk, kb-build, kb-eval, migrate, evaluate, datasets, gap, yield, report.

Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
Option values come from built-in defaults, then the ``--config`` JSON file
(top-level keys, overridden by a section named after the command), then
explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import errors as E
from .chunker import ChunkConfig, chunk, chunks_jsonl
from .datasets import DEFAULT_TEST_FRACTION, build_datasets, read_dataset_jsonl, train_counts, write_datasets
from .evaluation import EFFICIENCY_COLUMNS, evaluate_run, write_report
from .gap import (GapWeights, estimate_dataset, gap_csv, load_yield_inputs, project_yield,
                  read_metric_report)
from .kb import (KnowledgeBase, StoreKind, TrigramEmbedder, HttpEmbedder, build_index,
                 evaluate_retrieval, paragraph_entries, read_entries_jsonl, read_gold_jsonl)
from .lexer import Dialect
from .manifest import RunManifest, corpus_fingerprint, stable_id, write_kv_metrics
from .taxonomy import (FeatureProfile, SourceScript, default_taxonomy, distribution_csv, load_taxonomy,
                       profile, profile_json)
from .translate import MigrationConfig, Pipeline, make_backend, run_pipeline, write_run

log = logging.getLogger("oramig")

SQL_SUFFIXES = {".sql", ".pls", ".pks", ".pkb", ".plb", ".prc", ".fnc", ".trg", ".ddl", ".pgsql", ".psql", ".rman"}


class UsageError(Exception):
    pass


# -- helpers ------------------------------------------------------------------


def collect_files(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(f for f in p.rglob("*") if f.is_file() and f.suffix.lower() in SQL_SUFFIXES)
        elif p.exists():
            out.append(p)
        else:
            raise FileNotFoundError(f"input not found: {p}")
    if not out:
        raise UsageError("no input files")
    return out


def load_scripts(paths, dialect) -> list[SourceScript]:
    return [SourceScript.load(p, dialect) for p in collect_files(paths)]


class Settings:
    """Flag > command section of --config > top-level --config > default."""

    def __init__(self, args, config: dict):
        self.args = args
        self.config = config
        self.section = config.get(args.command, {}) if isinstance(config.get(args.command), dict) else {}
        self.resolved: dict = {}

    def get(self, name: str, default=None):
        val = getattr(self.args, name, None)
        if val is None:
            val = self.section.get(name, self.config.get(name, default))
        self.resolved[name] = val
        return val


def _out_dir(out: str, default_name: str | None = None) -> tuple[Path, str | None]:
    """Directory and optional file name for an ``--out`` value."""
    p = Path(out)
    if p.suffix:
        return p.parent, p.name
    return p, default_name


def _manifest(settings, command, out_dir, artifacts, fingerprint, extra=None) -> None:
    snapshot = {k: v for k, v in sorted(settings.resolved.items())}
    m = RunManifest(stable_id(command, snapshot, fingerprint), command, snapshot, fingerprint,
                    artifacts=artifacts, extra=extra or {})
    m.write(out_dir)


# -- commands -----------------------------------------------------------------


def cmd_profile(args, s: Settings) -> int:
    dialect = Dialect.parse(s.get("dialect", "oracle"))
    tax_path = s.get("taxonomy")
    taxonomy = load_taxonomy(tax_path) if tax_path else default_taxonomy(dialect)
    if taxonomy.dialect is not dialect:
        raise UsageError(f"taxonomy {tax_path} is for {taxonomy.dialect.value}, not {dialect.value}")
    out, _ = _out_dir(s.get("out", "profile-out"))
    out.mkdir(parents=True, exist_ok=True)
    scripts = load_scripts(args.paths, dialect)
    tests = load_scripts(args.test, dialect) if args.test else []
    lines = []
    train = FeatureProfile.empty(taxonomy)
    for sc in scripts:
        p = profile(sc, taxonomy)
        train = train + p
        lines.append(profile_json(sc, p))
    test = None
    if tests:
        test = FeatureProfile.empty(taxonomy)
        for sc in tests:
            p = profile(sc, taxonomy)
            test = test + p
            lines.append(profile_json(sc, p))
    (out / "distribution.csv").write_text(distribution_csv(train, test), "utf-8")
    (out / "profiles.jsonl").write_text("".join(line + "\n" for line in lines), "utf-8")
    fp = corpus_fingerprint((sc.path, sc.text) for sc in [*scripts, *tests])
    _manifest(s, "profile", out, ["distribution.csv", "profiles.jsonl"], fp)
    print(f"profiled {len(scripts) + len(tests)} files -> {out}")
    return 0


def cmd_chunk(args, s: Settings) -> int:
    dialect = Dialect.parse(s.get("dialect", "oracle"))
    cfg = ChunkConfig(int(s.get("max_chunk_bytes", 8192)))
    out, name = _out_dir(s.get("out", "chunks-out"), "chunks.jsonl")
    out.mkdir(parents=True, exist_ok=True)
    scripts = load_scripts(args.paths, dialect)
    text = "".join(chunks_jsonl(chunk(sc, cfg)) for sc in scripts)
    (out / name).write_text(text, "utf-8")
    _manifest(s, "chunk", out, [name], corpus_fingerprint((sc.path, sc.text) for sc in scripts))
    print(f"{text.count(chr(10))} chunks -> {out / name}")
    return 0


STORE_FLAGS = {"oracle_context": StoreKind.ORACLE_CONTEXT, "pg_docs": StoreKind.PG_DOCS,
               "sme_rules": StoreKind.SME_RULES, "pairs": StoreKind.PAIR_EXAMPLES}


def _store_entries(store: StoreKind, files) -> list:
    entries = []
    for f in files:
        p = Path(f)
        if p.suffix == ".jsonl":
            entries += read_entries_jsonl(p, store)
        elif store is StoreKind.PAIR_EXAMPLES:
            raise UsageError(f"{p}: translation pairs must be given as JSONL")
        else:
            entries += paragraph_entries(p.read_text(encoding="utf-8"), store, source=p.name)
    return entries


def cmd_kb_build(args, s: Settings) -> int:
    out = Path(args.out)
    kind = s.get("embedder", "trigram")
    overwrite = bool(s.get("overwrite", False))
    wanted = {store: getattr(args, flag) for flag, store in STORE_FLAGS.items() if getattr(args, flag)}
    if not wanted:
        raise UsageError("give at least one of --oracle-context, --pg-docs, --sme-rules, --pairs")
    indexes = {}
    texts = []
    for store, files in wanted.items():
        entries = _store_entries(store, files)
        if not entries:
            raise UsageError(f"no entries for store {store.value}")
        if kind == "http":
            emb = HttpEmbedder(s.get("embed_url"), s.get("embed_model", ""))
        else:
            emb = TrigramEmbedder(int(s.get("embed_dim", 1024)))
        indexes[store] = build_index(entries, emb)
        texts += [(f"{store.value}/{e.id}", e.text) for e in entries]
    KnowledgeBase(indexes).save(out, overwrite=overwrite)
    artifacts = [f"{st.value}/{n}" for st in indexes for n in ("manifest.json", "entries.jsonl", "vectors.f32")]
    RunManifest(stable_id("kb-build", s.resolved, corpus_fingerprint(texts)), "kb-build",
                dict(sorted(s.resolved.items())), corpus_fingerprint(texts),
                artifacts=artifacts).write(out)
    print(", ".join(f"{st.value}: {len(ix)} entries" for st, ix in indexes.items()))
    return 0


def cmd_kb_eval(args, s: Settings) -> int:
    kb = KnowledgeBase.load(args.kb)
    if not kb.indexes:
        raise UsageError(f"{args.kb}: no knowledge-base stores found")
    gold = read_gold_jsonl(args.gold)
    k = int(s.get("k", 3))
    min_sim = float(s.get("min_similarity", 0.25))
    card = evaluate_retrieval(kb, gold, k, min_sim)
    out, name = _out_dir(s.get("out", "kb-eval-out"), "scorecard.json")
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(json.dumps(card.to_dict(), indent=2, sort_keys=True) + "\n", "utf-8")
    fp = corpus_fingerprint([(Path(args.gold).name, Path(args.gold).read_text("utf-8"))])
    _manifest(s, "kb-eval", out, [name], fp)
    print(json.dumps(card.to_dict(), sort_keys=True))
    return 0


def cmd_migrate(args, s: Settings) -> int:
    pipeline = Pipeline(s.get("pipeline", "conversion"))
    kb = None
    kb_path = s.get("kb")
    if pipeline in (Pipeline.RAG_A, Pipeline.RAG_B):
        need = ["oracle_context", "pg_docs", "sme_rules"] if pipeline is Pipeline.RAG_A else ["pair_examples"]
        if not kb_path:
            raise UsageError(f"--pipeline {pipeline.value} needs --kb with stores: {', '.join(need)}")
        kb = KnowledgeBase.load(kb_path)
        missing = kb.missing(need)
        if missing:
            raise UsageError(f"knowledge base {kb_path} lacks stores: {', '.join(missing)}")
    backend_kind = s.get("backend", "echo")
    options = {}
    if backend_kind in ("http", "llm", "http-llm"):
        options = {k: v for k, v in {"url": s.get("llm_url"), "model": s.get("model", ""),
                                      "timeout": float(s.get("timeout", 120.0))}.items() if v is not None}
    backend = make_backend(backend_kind, **options)
    cfg = MigrationConfig(
        chunk=ChunkConfig(int(s.get("max_chunk_bytes", 8192))),
        history_budget_bytes=int(s.get("history_budget_bytes", 16384)),
        max_attempts=int(s.get("max_attempts", 3)),
        backoff_base=float(s.get("backoff_base", 0.5)),
        k=int(s.get("k", 3)),
        jobs=int(s.get("jobs") or 1),
        max_in_flight=int(s.get("max_in_flight", 4)),
        template_dir=s.get("template_dir"),
    )
    scripts = load_scripts(args.paths, Dialect.ORACLE)
    run = run_pipeline(scripts, backend, pipeline, cfg, kb=kb)
    write_run(run, s.get("out", "run-out"))
    failed = len(run.failures)
    print(f"run {run.run_id}: {len(run.results) - failed} converted, {failed} not converted")
    return 0


def cmd_evaluate(args, s: Settings) -> int:
    out, _ = _out_dir(s.get("out", str(Path(args.run_dir) / "eval")))
    report = evaluate_run(args.run_dir, s.get("references"), s.get("validator"))
    artifacts = write_report(report, out)
    manifest = json.loads((Path(args.run_dir) / "manifest.json").read_text("utf-8"))
    _manifest(s, "evaluate", out, artifacts, manifest.get("input_fingerprint", ""),
              {"run_id": manifest.get("run_id"), "warnings": report.warnings})
    run = report.run
    print(f"file_efficiency={run['file_efficiency']:.2f} ser_db={run['ser_db']:.2f} "
          f"error_files={run['error_files']} not_converted={run['not_converted']} "
          f"warnings={len(report.warnings)}")
    return 0


def cmd_datasets(args, s: Settings) -> int:
    build = build_datasets(args.manifest, int(s.get("seed", 0)),
                           float(s.get("test_fraction", DEFAULT_TEST_FRACTION)))
    out, _ = _out_dir(s.get("out", "datasets-out"))
    artifacts = write_datasets(build, out)
    src = Path(args.manifest)
    _manifest(s, "datasets", out, artifacts, corpus_fingerprint([(src.name, src.read_text("utf-8"))]),
              {"problems": [str(p) for p in build.problems]})
    for p in build.problems:
        log.warning("%s", p)
    print(f"dataset1={len(build.dataset1)} dataset2={len(build.dataset2)} problems={len(build.problems)}")
    return 0


def _load_counts(paths) -> dict:
    counts: dict = {}
    for p in map(Path, paths):
        if p.suffix == ".jsonl":
            part = train_counts(read_dataset_jsonl(p))
        else:
            part = json.loads(p.read_text("utf-8"))
            part = part.get("train_counts", part)
        for k, v in part.items():
            counts[k] = counts.get(k, 0) + v
    return counts


def cmd_gap(args, s: Settings) -> int:
    counts = _load_counts(args.dataset)
    report: dict = {}
    for m in args.metrics:
        text = Path(m).read_text("utf-8")
        if not text.strip():
            raise UsageError(f"metrics file {m} is empty")
        for pipeline, feats in read_metric_report(json.loads(text)).items():
            report.setdefault(pipeline, {}).update(feats)
    if not any(report.values()):
        raise UsageError("metrics contain no per-feature scores")
    wpath = s.get("weights")
    weights = GapWeights.load(wpath) if wpath else GapWeights()
    decimals = s.get("gap_dict_decimals")
    records = estimate_dataset(counts, report, weights, s.get("features") or (),
                               None if decimals is None else int(decimals))
    out, name = _out_dir(s.get("out", "GAP.csv"), "GAP.csv")
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(gap_csv(records), "utf-8")
    fp = corpus_fingerprint([(str(p), Path(p).read_text("utf-8")) for p in [*args.dataset, *args.metrics]])
    _manifest(s, "gap", out, [name], fp)
    print(gap_csv(records), end="")
    return 0


def cmd_yield(args, s: Settings) -> int:
    data = load_yield_inputs(args.inputs)
    rep = project_yield(data["features"], data.get("baseline", []),
                        float(s.get("samples_per_day", data.get("samples_per_day", 150))),
                        overlap_assumptions=data.get("overlap_assumptions", []))
    out, _ = _out_dir(s.get("out", "yield-out"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "yield.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n", "utf-8")
    (out / "yield.csv").write_text(rep.to_csv(), "utf-8")
    fp = corpus_fingerprint([(Path(args.inputs).name, Path(args.inputs).read_text("utf-8"))])
    _manifest(s, "yield", out, ["yield.json", "yield.csv"], fp)
    print(f"total={rep.total:.2f} baseline={rep.baseline_total:.2f} difference={rep.difference:.2f} "
          f"sme_days={rep.sme_days:.1f}")
    return 0


def cmd_report(args, s: Settings) -> int:
    """Efficiency table with one row per evaluated run."""
    rows = []
    for d in args.eval_dirs:
        m = json.loads((Path(d) / "metrics.json").read_text("utf-8"))
        rows.append([m.get("pipeline", "")] + [m["run"][c] for c in EFFICIENCY_COLUMNS[1:]])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EFFICIENCY_COLUMNS)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    out, name = _out_dir(s.get("out", "report-out"), "efficiency.csv")
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(buf.getvalue(), "utf-8")
    write_kv_metrics(out / "report.kv", {r[0] or f"run{i}": dict(zip(EFFICIENCY_COLUMNS[1:], r[1:]))
                                         for i, r in enumerate(rows)})
    fp = corpus_fingerprint([(str(d), (Path(d) / "metrics.json").read_text("utf-8")) for d in args.eval_dirs])
    _manifest(s, "report", out, [name, "report.kv"], fp)
    print(buf.getvalue(), end="")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oramig", description="Oracle to PostgreSQL migration toolkit")
    p.add_argument("--config", help="JSON config file (top-level keys plus per-command sections)")
    p.add_argument("--jobs", type=int, help="worker threads")
    p.add_argument("--seed", type=int, help="seed for anything randomised")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("profile", help="feature-class profile of a corpus")
    sp.add_argument("paths", nargs="+")
    sp.add_argument("--test", nargs="+", help="second corpus for the test column")
    sp.add_argument("--dialect", choices=["oracle", "postgresql"])
    sp.add_argument("--taxonomy")
    sp.add_argument("--out")

    sp = sub.add_parser("chunk", help="statement-aligned chunks as JSONL")
    sp.add_argument("paths", nargs="+")
    sp.add_argument("--dialect", choices=["oracle", "postgresql"])
    sp.add_argument("--max-chunk-bytes", dest="max_chunk_bytes", type=int)
    sp.add_argument("--out")

    sp = sub.add_parser("kb-build", help="build knowledge-base indexes")
    sp.add_argument("out")
    sp.add_argument("--oracle-context", dest="oracle_context", nargs="+")
    sp.add_argument("--pg-docs", dest="pg_docs", nargs="+")
    sp.add_argument("--sme-rules", dest="sme_rules", nargs="+")
    sp.add_argument("--pairs", nargs="+")
    sp.add_argument("--embedder", choices=["trigram", "http"])
    sp.add_argument("--embed-url", dest="embed_url")
    sp.add_argument("--overwrite", action="store_true", default=None)

    sp = sub.add_parser("kb-eval", help="score retrieval against a gold dataset")
    sp.add_argument("kb")
    sp.add_argument("gold")
    sp.add_argument("--k", type=int)
    sp.add_argument("--min-similarity", dest="min_similarity", type=float)
    sp.add_argument("--out")

    sp = sub.add_parser("migrate", help="run a conversion pipeline")
    sp.add_argument("paths", nargs="+")
    sp.add_argument("--pipeline", choices=[x.value for x in Pipeline])
    sp.add_argument("--backend", choices=["echo", "rule", "http"])
    sp.add_argument("--model")
    sp.add_argument("--llm-url", dest="llm_url")
    sp.add_argument("--kb")
    sp.add_argument("--k", type=int)
    sp.add_argument("--max-chunk-bytes", dest="max_chunk_bytes", type=int)
    sp.add_argument("--history-budget-bytes", dest="history_budget_bytes", type=int)
    sp.add_argument("--template-dir", dest="template_dir")
    sp.add_argument("--out")

    sp = sub.add_parser("evaluate", help="score a run directory")
    sp.add_argument("run_dir")
    sp.add_argument("--references")
    sp.add_argument("--validator", help="external validator command (default: built-in)")
    sp.add_argument("--out")

    sp = sub.add_parser("datasets", help="build Dataset 1/2 JSONL from a pairing manifest")
    sp.add_argument("manifest")
    sp.add_argument("--test-fraction", dest="test_fraction", type=float)
    sp.add_argument("--out")

    sp = sub.add_parser("gap", help="GAP estimation to GAP.csv")
    sp.add_argument("--dataset", nargs="+", required=True, help="counts JSON or dataset JSONL")
    sp.add_argument("--metrics", nargs="+", required=True)
    sp.add_argument("--weights")
    sp.add_argument("--features", nargs="+", help="classes to include even without data")
    sp.add_argument("--gap-dict-decimals", dest="gap_dict_decimals", type=int)
    sp.add_argument("--out")

    sp = sub.add_parser("yield", help="migration-yield projection")
    sp.add_argument("--inputs", required=True)
    sp.add_argument("--samples-per-day", dest="samples_per_day", type=float)
    sp.add_argument("--out")

    sp = sub.add_parser("report", help="combine evaluation outputs into one efficiency table")
    sp.add_argument("eval_dirs", nargs="+")
    sp.add_argument("--out")
    return p


COMMANDS = {"profile": cmd_profile, "chunk": cmd_chunk, "kb-build": cmd_kb_build, "kb-eval": cmd_kb_eval,
            "migrate": cmd_migrate, "evaluate": cmd_evaluate, "datasets": cmd_datasets, "gap": cmd_gap, "yield": cmd_yield,
            "report": cmd_report}

CONFIG_ERRORS = (UsageError, E.TaxonomyError, E.DialectMismatch, E.InvalidWeights, E.EmptyCounts,
                 E.StoreMissing, E.UnboundPlaceholder)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = json.loads(Path(args.config).read_text("utf-8")) if args.config else {}
        if not isinstance(config, dict):
            raise UsageError("--config must hold a JSON object")
    except (OSError, ValueError, UsageError) as exc:
        print(f"oramig: bad --config: {exc}", file=sys.stderr)
        return 2
    settings = Settings(args, config)
    try:
        return COMMANDS[args.command](args, settings)
    except CONFIG_ERRORS as exc:
        print(f"oramig {args.command}: {exc}", file=sys.stderr)
        return 2
    except (E.OramigError, OSError, ValueError) as exc:
        print(f"oramig {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
