"""Backend-agnostic scoring of a migration run.

Per file: lexical metrics against a reference, syntax findings from a
PostgreSQL validator, feature coverage against the profile predicted from
the Oracle source, and error-group counts. Per run: the efficiency table
(file/class/size efficiency, SER_DB, error files, total errors, not
converted), per-feature quality aggregates and expected-vs-generated
correlations.

Run-level numbers are computed only from the per-file rows by
:func:`aggregate_rows`, so the CSV export is enough to recompute them.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .chunker import split_units
from .lexer import Dialect
from .manifest import write_kv_metrics
from .metrics import bleu, chrf, token_recall
from .taxonomy import (FeatureMapping, FeatureProfile, FeatureTaxonomy, default_taxonomy,
                       predict_expected_features, profile_text)
from .validator import ERROR, SyntaxFinding, resolve_validator, ser_metrics

log = logging.getLogger(__name__)

SIZE_CLASSES = ("S", "M", "L")
SEMANTIC_NOTE = "heuristic: profile deviation on syntactically valid files, not an execution check"


# -- feature coverage and correlation ----------------------------------------


def feature_coverage(expected: FeatureProfile, generated: FeatureProfile) -> dict[str, float]:
    """min(generated, expected) / expected per class; classes never expected are left out."""
    out = {}
    for cls, exp in expected.counts.items():
        if exp > 0:
            out[cls] = min(generated.counts.get(cls, 0), exp) / exp
    return out


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) < 2:
        return None
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        return None
    return float(dx @ dy) / math.sqrt(sxx * syy)


def feature_correlation(points: Mapping[str, Sequence[tuple[float, float]]]) -> dict[str, dict]:
    """Pearson r per class over (expected, generated) points; None when a side is constant."""
    return {cls: {"pearson_r": pearson([p[0] for p in pts], [p[1] for p in pts]), "n": len(pts)}
            for cls, pts in points.items()}


def correlation_points_csv(points: Mapping[str, Sequence[tuple]], names: Mapping[str, Sequence[str]] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "file", "expected", "generated"])
    for cls, pts in points.items():
        labels = (names or {}).get(cls) or [""] * len(pts)
        for label, (e, g) in zip(labels, pts):
            w.writerow([cls, label, repr(float(e)), repr(float(g))])
    return buf.getvalue()


# -- error groups -------------------------------------------------------------


@dataclass
class ErrorGroupReport:
    syntax: int = 0
    structural: int = 0
    missing_feature: int = 0
    semantic_flagged: int = 0
    note: str = SEMANTIC_NOTE

    def __add__(self, other: "ErrorGroupReport") -> "ErrorGroupReport":
        return ErrorGroupReport(self.syntax + other.syntax, self.structural + other.structural,
                                self.missing_feature + other.missing_feature,
                                self.semantic_flagged + other.semantic_flagged)

    def counts(self) -> dict[str, int]:
        return {"syntax": self.syntax, "structural": self.structural,
                "missing_feature": self.missing_feature, "semantic_flagged": self.semantic_flagged}


@dataclass(frozen=True)
class Thresholds:
    missing_feature: float = 0.5
    structural_ratio: float = 0.3
    deviation: float = 0.4


@dataclass(frozen=True)
class FileStructure:
    input_statements: int
    output_statements: int
    input_empty: bool
    output_empty: bool


def profile_deviation(expected: FeatureProfile, generated: FeatureProfile) -> float:
    """Total-variation distance between the two class distributions."""
    if expected.total_hits == 0 and generated.total_hits == 0:
        return 0.0
    if expected.total_hits == 0 or generated.total_hits == 0:
        return 1.0
    p, q = expected.percentages, generated.percentages
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))


def categorize_errors(findings: Sequence[SyntaxFinding], coverage: Mapping[str, float],
                      structure: FileStructure, expected: FeatureProfile | None = None,
                      generated: FeatureProfile | None = None,
                      thresholds: Thresholds = Thresholds()) -> ErrorGroupReport:
    syntax = sum(1 for f in findings if f.severity == ERROR)
    missing = sum(1 for v in coverage.values() if v < thresholds.missing_feature)
    structural = 0
    if not structure.input_empty:
        if structure.output_empty:
            structural = 1
        elif structure.output_statements < thresholds.structural_ratio * structure.input_statements:
            structural = 1
    semantic = 0
    if syntax == 0 and expected is not None and generated is not None and not structure.output_empty:
        if profile_deviation(expected, generated) > thresholds.deviation:
            semantic = 1
    return ErrorGroupReport(syntax, structural, missing, semantic)


# -- per-file scoring ---------------------------------------------------------


@dataclass
class EvalInput:
    name: str
    output_text: str | None  # None: file was not converted
    reference_text: str | None = None
    source_text: str | None = None
    size_class: str = "S"


@dataclass
class FileScore:
    name: str
    status: str  # converted | not_converted
    scored: bool
    size_class: str
    valid: bool = False
    recall: float | None = None
    bleu: float | None = None
    chrf: float | None = None
    ser: float = 0.0
    sepl: float = 0.0
    warnings_norm: float = 0.0
    aggregated: float | None = None
    errors: int = 0
    warnings: int = 0
    statements: int = 0
    error_statements: int = 0
    lines: int = 0
    expected: dict = field(default_factory=dict)
    generated: dict = field(default_factory=dict)
    oracle_pct: dict = field(default_factory=dict)
    coverage: dict = field(default_factory=dict)
    groups: ErrorGroupReport = field(default_factory=ErrorGroupReport)
    findings: list = field(default_factory=list)


class Scorer:
    def __init__(self, validator=None, mapping: FeatureMapping | None = None,
                 oracle_taxonomy: FeatureTaxonomy | None = None, pg_taxonomy: FeatureTaxonomy | None = None,
                 thresholds: Thresholds = Thresholds()):
        self.validate = resolve_validator(validator)
        self.mapping = mapping
        self.ora = oracle_taxonomy or default_taxonomy(Dialect.ORACLE)
        self.pg = pg_taxonomy or default_taxonomy(Dialect.POSTGRESQL)
        self.thresholds = thresholds

    def score(self, item: EvalInput) -> FileScore:
        if item.output_text is None:
            return FileScore(item.name, "not_converted", False, item.size_class)
        out = item.output_text
        findings = self.validate(out, item.name)
        sm = ser_metrics(findings, out)
        fs = FileScore(item.name, "converted", item.reference_text is not None, item.size_class,
                       valid=sm.valid, ser=sm.ser, sepl=sm.sepl, warnings_norm=sm.warnings_norm,
                       errors=sm.errors, warnings=sm.warnings, statements=sm.statements,
                       error_statements=sm.error_statements, lines=sm.lines, findings=list(findings))
        if item.reference_text is not None:
            ref = item.reference_text
            fs.recall, fs.bleu, fs.chrf = token_recall(out, ref), bleu(out, ref), chrf(out, ref)
            fs.aggregated = (fs.recall + fs.bleu + fs.chrf + (1 - fs.ser) + (1 - fs.warnings_norm)) / 5
        generated = profile_text(out, self.pg)
        fs.generated = dict(generated.counts)
        expected = None
        if item.source_text is not None:
            src_prof = profile_text(item.source_text, self.ora)
            fs.oracle_pct = src_prof.percentages
            expected = predict_expected_features(src_prof, self.mapping, self.pg.class_names)
            fs.expected = dict(expected.counts)
            fs.coverage = feature_coverage(expected, generated)
            in_stmts = sum(1 for u in split_units(item.source_text, Dialect.ORACLE) if u.tokens)
            structure = FileStructure(in_stmts, sm.statements, not item.source_text.strip(), not out.strip())
        else:
            structure = FileStructure(0, sm.statements, True, not out.strip())
        fs.groups = categorize_errors(findings, fs.coverage, structure, expected, generated, self.thresholds)
        return fs


# -- run-level ----------------------------------------------------------------


def _pct(num: float, den: float) -> float:
    return 100.0 * num / den if den else 0.0


def aggregate_rows(rows: Sequence[FileScore]) -> dict:
    """Run summary computed from per-file rows only."""
    total = len(rows)
    valid = sum(1 for r in rows if r.valid)
    converted = [r for r in rows if r.status == "converted"]
    classes = sorted({c for r in converted for c in r.expected})
    class_cov = []
    for c in classes:
        exp = sum(r.expected.get(c, 0) for r in converted)
        if exp > 0:
            class_cov.append(sum(min(r.generated.get(c, 0), r.expected.get(c, 0)) for r in converted) / exp)
    by_size = defaultdict(list)
    for r in rows:
        by_size[r.size_class].append(r.valid)
    size_eff = [_pct(sum(v), len(v)) for s, v in sorted(by_size.items())]
    scored = [r for r in converted if r.scored]

    def mean(attr):
        vals = [getattr(r, attr) for r in scored]
        return sum(vals) / len(vals) if vals else None

    return {
        "total_files": total,
        "valid_files": valid,
        "file_efficiency": _pct(valid, total),
        "class_efficiency": 100.0 * sum(class_cov) / len(class_cov) if class_cov else 0.0,
        "size_efficiency": sum(size_eff) / len(size_eff) if size_eff else 0.0,
        "ser_db": _pct(sum(r.error_statements for r in converted), sum(r.statements for r in converted)),
        "sepl": (sum(r.errors for r in converted) / sum(r.lines for r in converted)
                 if sum(r.lines for r in converted) else 0.0),
        "error_files": sum(1 for r in converted if r.errors > 0),
        "total_errors": sum(r.errors for r in converted),
        "total_warnings": sum(r.warnings for r in converted),
        "not_converted": total - len(converted),
        "unscored": len(converted) - len(scored),
        "recall": mean("recall"),
        "bleu": mean("bleu"),
        "chrf": mean("chrf"),
        "aggregated": mean("aggregated"),
    }


def feature_quality(rows: Sequence[FileScore]) -> dict[str, dict]:
    """Per Oracle feature class: metrics averaged with the class's share of each file as weight."""
    acc: dict[str, dict[str, float]] = {}
    for r in rows:
        if not r.scored:
            continue
        scores = {"recall": r.recall, "bleu": r.bleu, "chrf": r.chrf,
                  "syntax_correctness": 1 - r.ser, "aggregated": r.aggregated}
        for cls, w in r.oracle_pct.items():
            if w <= 0:
                continue
            a = acc.setdefault(cls, {k: 0.0 for k in [*scores, "weight", "files"]})
            for k, v in scores.items():
                a[k] += w * v
            a["weight"] += w
            a["files"] += 1
    out = {}
    for cls, a in acc.items():
        out[cls] = {k: a[k] / a["weight"] for k in ("recall", "bleu", "chrf", "syntax_correctness", "aggregated")}
        out[cls]["files"] = int(a["files"])
    return out


@dataclass
class MetricReport:
    pipeline: str
    files: list[FileScore]
    run: dict
    features: dict
    groups: ErrorGroupReport
    correlation: dict
    points: dict
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "run": self.run,
            "features": self.features,
            "error_groups": self.groups.counts(),
            "error_groups_note": SEMANTIC_NOTE,
            "correlation": self.correlation,
            "warnings": self.warnings,
            "files": [{k: v for k, v in asdict(f).items() if k != "findings"} for f in self.files],
        }


def evaluate_files(items: Sequence[EvalInput], pipeline: str = "", scorer: Scorer | None = None,
                   **scorer_options) -> MetricReport:
    scorer = scorer or Scorer(**scorer_options)
    rows = [scorer.score(it) for it in items]
    groups = ErrorGroupReport()
    for r in rows:
        groups = groups + r.groups
    points: dict[str, list] = {c: [] for c in scorer.pg.class_names}
    names: dict[str, list] = {c: [] for c in scorer.pg.class_names}
    for r in rows:
        if r.status == "converted" and r.expected:
            for c in points:
                points[c].append((r.expected.get(c, 0.0), r.generated.get(c, 0)))
                names[c].append(r.name)
    warnings = [f"{r.name}: no reference, lexical metrics skipped" for r in rows
                if r.status == "converted" and not r.scored]
    report = MetricReport(pipeline, rows, aggregate_rows(rows), feature_quality(rows), groups,
                          feature_correlation(points), {"points": points, "names": names}, warnings)
    return report


def _find_reference(references, name: str) -> str | None:
    if references is None:
        return None
    root = Path(references)
    for cand in (root / name, root / Path(name).name):
        if cand.is_file():
            return cand.read_text(encoding="utf-8")
    return None


def evaluate_run(run_dir, references=None, validator=None, **scorer_options) -> MetricReport:
    """Score every file listed in a run directory's manifest."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    items = []
    for entry in manifest["extra"]["files"]:
        name = entry["name"]
        out = None
        if entry["status"] == "converted":
            out = (run_dir / entry["output"]).read_text(encoding="utf-8")
        src = Path(entry["path"])
        source_text = src.read_text(encoding="utf-8") if src.is_file() else None
        items.append(EvalInput(name, out, _find_reference(references, name), source_text,
                               entry.get("size_class", "S")))
    pipeline = manifest["config"].get("pipeline", "")
    report = evaluate_files(items, pipeline, validator=validator, **scorer_options)
    for w in report.warnings:
        log.warning(w)
    return report


# -- exports ------------------------------------------------------------------

EFFICIENCY_COLUMNS = ["pipeline", "file_efficiency", "class_efficiency", "size_efficiency", "ser_db",
                      "error_files", "total_errors", "not_converted"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def files_csv(report: MetricReport) -> str:
    classes = sorted({c for f in report.files for c in (*f.expected, *f.generated)})
    cols = ["file", "status", "scored", "size_class", "valid", "recall", "bleu", "chrf", "ser", "sepl",
            "warnings_norm", "aggregated", "errors", "warnings", "statements", "error_statements", "lines"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols + [f"exp_{c}" for c in classes] + [f"gen_{c}" for c in classes])
    for f in report.files:
        row = [f.name, f.status, f.scored, f.size_class, f.valid, f.recall, f.bleu, f.chrf, f.ser, f.sepl,
               f.warnings_norm, f.aggregated, f.errors, f.warnings, f.statements, f.error_statements, f.lines]
        row += [f.expected.get(c, "") if f.expected else "" for c in classes]
        row += [f.generated.get(c, "") if f.generated else "" for c in classes]
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def efficiency_csv(report: MetricReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EFFICIENCY_COLUMNS)
    w.writerow([_fmt(report.pipeline)] + [_fmt(report.run[c]) for c in EFFICIENCY_COLUMNS[1:]])
    return buf.getvalue()


def error_groups_csv(report: MetricReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["file", "syntax", "structural", "missing_feature", "semantic_flagged"])
    for f in report.files:
        w.writerow([f.name, *f.groups.counts().values()])
    w.writerow(["TOTAL", *report.groups.counts().values()])
    return buf.getvalue()


def findings_csv(report: MetricReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["file", "line", "severity", "statement_index", "message"])
    for f in report.files:
        for x in f.findings:
            w.writerow([f.name, x.line, x.severity, x.statement_index, x.message])
    return buf.getvalue()


REPORT_FILES = ("metrics.json", "files.csv", "efficiency.csv", "correlation.csv", "error_groups.csv",
                "findings.csv", "metrics.kv")


def write_report(report: MetricReport, out_dir) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", "utf-8")
    (out / "files.csv").write_text(files_csv(report), "utf-8")
    (out / "efficiency.csv").write_text(efficiency_csv(report), "utf-8")
    (out / "correlation.csv").write_text(
        correlation_points_csv(report.points["points"], report.points["names"]), "utf-8")
    (out / "error_groups.csv").write_text(error_groups_csv(report), "utf-8")
    (out / "findings.csv").write_text(findings_csv(report), "utf-8")
    write_kv_metrics(out / "metrics.kv", {"run": report.run, "features": report.features,
                                          "error_groups": report.groups.counts()})
    return list(REPORT_FILES)
