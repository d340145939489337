"""Dataset-gap estimation and the migration-yield projection.

GAP_Dict measures how under-represented a feature is in the training data,
GAP_Quality how far the model's scores are from perfect, and GAP_Feature
combines both into the percentage that drives the next round of sample
collection. ``estimate_dataset`` turns these into per-feature, per-pipeline
sample requests.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from decimal import ROUND_DOWN, Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EmptyCounts, InvalidWeights, SingularityError

log = logging.getLogger(__name__)

SCORE_FIELDS = ("recall", "bleu", "chrf", "syntax_correctness", "aggregated")


@dataclass(frozen=True)
class GapWeights:
    w_R: float = 0.2
    w_B: float = 0.2
    w_C: float = 0.2
    w_SER: float = 0.2
    w_Agg: float = 0.4
    beta: float = 0.3

    def __post_init__(self):
        ws = (self.w_R, self.w_B, self.w_C, self.w_SER, self.w_Agg)
        if any(w < 0 for w in ws) or self.beta < 0:
            raise InvalidWeights("weights and beta must be non-negative")
        if sum(ws) <= 0:
            raise InvalidWeights("weights must not all be zero")
        if 1 + self.beta ** 2 >= 2:
            raise InvalidWeights(f"beta={self.beta}: (1 + beta^2) must stay below 2")

    @property
    def weight_sum(self) -> float:
        return self.w_R + self.w_B + self.w_C + self.w_SER + self.w_Agg

    @classmethod
    def from_dict(cls, d: Mapping) -> "GapWeights":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidWeights(f"unknown weight names: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    @classmethod
    def load(cls, path) -> "GapWeights":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class FeatureQuality:
    feature: str
    recall: float = 0.0
    bleu: float = 0.0
    chrf: float = 0.0
    syntax_correctness: float = 0.0
    aggregated: float = 0.0
    train_count: int = 0

    def __post_init__(self):
        for name in SCORE_FIELDS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{self.feature}.{name}={v} is outside [0, 1]")

    @classmethod
    def from_dict(cls, feature: str, d: Mapping) -> "FeatureQuality":
        return cls(feature, **{k: float(d[k]) for k in SCORE_FIELDS if d.get(k) is not None})


def truncate(value: float, decimals: int) -> float:
    """Cut (not round) ``value`` to ``decimals`` places."""
    q = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_DOWN))


def gap_dict(train_counts: Mapping[str, float], decimals: int | None = None) -> dict[str, float]:
    """1 - count / max_count per feature. With ``decimals`` the values are truncated."""
    if not train_counts or max(train_counts.values()) <= 0:
        raise EmptyCounts("need at least one positive training count")
    top = max(train_counts.values())
    out = {f: 1.0 - c / top for f, c in train_counts.items()}
    if decimals is not None:
        out = {f: truncate(v, decimals) for f, v in out.items()}
    return out


@dataclass(frozen=True)
class QualityScore:
    q_raw: float
    q_norm: float
    gap_quality: float


def quality_score(q: FeatureQuality, w: GapWeights) -> QualityScore:
    q_raw = (w.w_R * q.recall + w.w_B * q.bleu + w.w_C * q.chrf
             + w.w_SER * q.syntax_correctness + w.w_Agg * q.aggregated)
    q_norm = q_raw / w.weight_sum
    return QualityScore(q_raw, q_norm, 1.0 - q_norm)


def gap_feature(gap_quality: float, gap_dict: float, beta: float) -> float:
    """GAP_Feature in percent: (1 - 1/(2 - x)) * 100 with x = (1+b^2)(1-gq)(1-gd)."""
    x = (1 + beta * beta) * (1 - gap_quality) * (1 - gap_dict)
    if 2 - x <= 0:
        raise SingularityError(f"x={x}: denominator 2 - x is not positive")
    return (1 - 1 / (2 - x)) * 100


def gap_feature_bounds(beta: float) -> tuple[float, float]:
    """(floor, ceiling) of GAP_Feature for scores and gaps in [0, 1]."""
    return gap_feature(0.0, 0.0, beta), gap_feature(1.0, 1.0, beta)


@dataclass(frozen=True)
class GapRecord:
    pipeline: str
    feature: str
    train_count: float
    gap_dict: float
    q_norm: float
    gap_quality: float
    gap_feature_pct: float
    samples_requested: int


def samples_requested(gap_pct: float, max_count: float, count: float) -> int:
    """ceil(gap% x max_count) - count, floored at zero."""
    need = math.ceil(round(gap_pct / 100 * max_count, 9))
    return max(0, int(need - count))


def estimate_dataset(train_counts: Mapping[str, float],
                     metric_report: Mapping[str, Mapping[str, FeatureQuality | Mapping]],
                     weights: GapWeights | None = None, features: Iterable[str] = (),
                     gap_dict_decimals: int | None = None) -> list[GapRecord]:
    """One record per (feature, pipeline), sorted by GAP_Feature descending.

    ``metric_report`` maps pipeline -> feature -> scores. ``features`` can
    name classes absent from both the counts and the report: they get
    gap_dict 1 and all-zero scores, i.e. the formula's ceiling.
    """
    weights = weights or GapWeights()
    universe = list(dict.fromkeys([*train_counts, *features,
                                   *(f for rep in metric_report.values() for f in rep)]))
    counts = {f: train_counts.get(f, 0) for f in universe}
    gd = gap_dict(counts, gap_dict_decimals)
    top = max(counts.values())
    records = []
    for pipeline, rep in metric_report.items():
        for f in universe:
            q = rep.get(f)
            if q is None:
                q = FeatureQuality(f)
            elif not isinstance(q, FeatureQuality):
                q = FeatureQuality.from_dict(f, q)
            qs = quality_score(q, weights)
            pct = gap_feature(qs.gap_quality, gd[f], weights.beta)
            records.append(GapRecord(pipeline, f, counts[f], gd[f], qs.q_norm, qs.gap_quality, pct,
                                     samples_requested(pct, top, counts[f])))
    ceiling = gap_feature_bounds(weights.beta)[1]
    for r in records:
        if counts[r.feature] == 0:
            log.warning("%s/%s: new feature capped at the formula ceiling of %.2f%%",
                        r.pipeline, r.feature, ceiling)
    return sorted(records, key=lambda r: (-r.gap_feature_pct, r.pipeline, r.feature))


GAP_COLUMNS = ["pipeline", "feature", "train_count", "gap_dict", "q_norm", "gap_quality",
               "gap_feature_pct", "samples_requested"]


def gap_csv(records: Sequence[GapRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GAP_COLUMNS)
    for r in records:
        d = asdict(r)
        w.writerow([d["pipeline"], d["feature"], _num(d["train_count"]), f"{d['gap_dict']:.6f}",
                    f"{d['q_norm']:.8f}", f"{d['gap_quality']:.8f}", f"{d['gap_feature_pct']:.4f}",
                    d["samples_requested"]])
    return buf.getvalue()


def _num(v) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def read_metric_report(obj) -> dict[str, dict]:
    """Accept an evaluation ``metrics.json`` or ``{"pipelines": {name: {"features": ...}}}``."""
    if "pipelines" in obj:
        return {p: dict(v.get("features", v)) for p, v in obj["pipelines"].items()}
    if "features" in obj:
        return {obj.get("pipeline") or "default": dict(obj["features"])}
    raise ValueError("metrics file has neither 'features' nor 'pipelines'")


# -- yield projection ---------------------------------------------------------


@dataclass(frozen=True)
class YieldFeature:
    feature: str
    coverage_pct: float
    files: float
    quality_pct: float

    @property
    def success(self) -> float:
        return self.files * (self.coverage_pct / 100) * (self.quality_pct / 100)


@dataclass
class YieldReport:
    rows: list[dict]
    total: float
    baseline_total: float
    difference: float
    samples_per_day: float
    sme_days: float
    sme_weeks: float
    sme_months: float
    overlap_assumptions: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "coverage_pct", "files", "quality_pct", "success_files", "baseline_files"])
        for r in self.rows:
            w.writerow([r["feature"], r["coverage_pct"], _num(r["files"]), r["quality_pct"],
                        f"{r['success_files']:.2f}", _num(r["baseline_files"])])
        w.writerow(["TOTAL", "", "", "", f"{self.total:.2f}", _num(self.baseline_total)])
        return buf.getvalue()


def project_yield(features: Sequence[YieldFeature | Mapping], baseline: Sequence[Mapping | float],
                  samples_per_day: float = 150.0, days_per_week: float = 5.0, days_per_month: float = 21.0,
                  overlap_assumptions: Sequence[str] = ()) -> YieldReport:
    """Expected successfully converted files against a baseline tool.

    File counts must already have overlaps removed; the assumptions used
    for that are carried through to the report verbatim.
    """
    feats = [f if isinstance(f, YieldFeature) else YieldFeature(**f) for f in features]
    base = [float(b["files_converted"]) if isinstance(b, Mapping) else float(b) for b in baseline]
    if base and len(base) != len(feats):
        raise ValueError("baseline must have one entry per feature")
    rows = []
    for i, f in enumerate(feats):
        rows.append({"feature": f.feature, "coverage_pct": f.coverage_pct, "files": f.files,
                     "quality_pct": f.quality_pct, "success_files": f.success,
                     "baseline_files": base[i] if base else 0.0})
    total = sum(r["success_files"] for r in rows)
    btotal = sum(base)
    diff = total - btotal
    days = diff / samples_per_day
    return YieldReport(rows, total, btotal, diff, samples_per_day, days, days / days_per_week,
                       days / days_per_month, list(overlap_assumptions))


def load_yield_inputs(path) -> dict:
    """JSON with ``features`` and ``baseline`` lists plus optional settings."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if "features" not in data:
        raise ValueError(f"{path}: missing 'features'")
    return data
