"""Building the two fine-tuning datasets from a pairing manifest.

Dataset 1 pairs Oracle code with a plain-language description, Dataset 2
pairs Oracle code with its PostgreSQL translation. The manifest is a CSV
with an ``oracle`` column and at least one of ``postgres`` /
``description`` (paths relative to the manifest; ``description`` may also
be inline text). An optional ``id`` column names the sample.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import MissingCounterpart
from .lexer import Dialect
from .taxonomy import FeatureProfile, FeatureTaxonomy, default_taxonomy, distribution_csv, profile_text, size_class_for

DESCRIPTIVE = "descriptive"
PAIR = "pair"
TRAIN = "train"
TEST = "test"
# 30K train / 2K test in the reference dataset
DEFAULT_TEST_FRACTION = 2 / 32


@dataclass
class DatasetSample:
    id: str
    kind: str
    oracle_text: str
    counterpart: str
    feature_tags: list[str]
    split: str
    size_class: str
    feature_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.counterpart.strip():
            raise ValueError(f"{self.id}: empty counterpart")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _hash_key(seed: int, key: str) -> str:
    return hashlib.sha256(f"{seed}:{key}".encode("utf-8")).hexdigest()


def dominant_class(counts: dict) -> str:
    if not counts or not any(counts.values()):
        return ""
    return max(counts, key=lambda c: (counts[c], c))


def assign_splits(samples: Sequence[DatasetSample], seed: int = 0,
                  test_fraction: float = DEFAULT_TEST_FRACTION) -> None:
    """Stratified, hash-ordered split by dominant feature class.

    The test quota is allotted to strata by largest remainder so the total
    is ``round(N * test_fraction)``; inside a stratum the samples with the
    smallest seeded hashes go to test.
    """
    strata: dict[str, list[DatasetSample]] = defaultdict(list)
    for s in samples:
        strata[dominant_class(s.feature_counts)].append(s)
    n = len(samples)
    target = round(n * test_fraction)
    quotas = {k: len(v) * test_fraction for k, v in strata.items()}
    alloc = {k: int(q) for k, q in quotas.items()}
    rest = target - sum(alloc.values())
    for k in sorted(quotas, key=lambda k: (-(quotas[k] - alloc[k]), k))[:max(0, rest)]:
        alloc[k] += 1
    for k, members in strata.items():
        ordered = sorted(members, key=lambda s: _hash_key(seed, s.id))
        for i, s in enumerate(ordered):
            s.split = TEST if i < alloc[k] else TRAIN


@dataclass
class DatasetBuild:
    dataset1: list[DatasetSample]
    dataset2: list[DatasetSample]
    problems: list[MissingCounterpart]

    def distribution(self, samples: Sequence[DatasetSample], taxonomy: FeatureTaxonomy) -> str:
        tr = FeatureProfile.empty(taxonomy)
        te = FeatureProfile.empty(taxonomy)
        for s in samples:
            prof = FeatureProfile(taxonomy.dialect, s.feature_counts)
            if s.split == TRAIN:
                tr = tr + prof
            else:
                te = te + prof
        return distribution_csv(tr, te)


def _read(base: Path, value: str) -> str:
    p = base / value
    if not p.is_file():
        raise FileNotFoundError(str(p))
    return p.read_text(encoding="utf-8")


def build_datasets(manifest_path, seed: int = 0, test_fraction: float = DEFAULT_TEST_FRACTION,
                   taxonomy: FeatureTaxonomy | None = None) -> DatasetBuild:
    """Read the pairing manifest; rows that cannot be paired are collected, not fatal."""
    taxonomy = taxonomy or default_taxonomy(Dialect.ORACLE)
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    d1, d2, problems = [], [], []
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        for n, row in enumerate(csv.DictReader(fh), 2):
            ora = (row.get("oracle") or "").strip()
            sid = (row.get("id") or "").strip() or ora or f"row{n}"
            try:
                oracle_text = _read(base, ora)
            except (FileNotFoundError, IsADirectoryError):
                problems.append(MissingCounterpart(f"line {n}: oracle file {ora!r} not found"))
                continue
            prof = profile_text(oracle_text, taxonomy)
            counts = dict(prof.counts)
            tags = prof.classes
            size = size_class_for(len(oracle_text.splitlines()))
            pg = (row.get("postgres") or "").strip()
            desc = (row.get("description") or "").strip()
            if not pg and not desc:
                problems.append(MissingCounterpart(f"line {n}: {sid} has no postgres or description"))
                continue
            if pg:
                try:
                    pg_text = _read(base, pg)
                except (FileNotFoundError, IsADirectoryError):
                    problems.append(MissingCounterpart(f"line {n}: postgres file {pg!r} not found"))
                else:
                    if pg_text.strip():
                        d2.append(DatasetSample(sid, PAIR, oracle_text, pg_text, tags, TRAIN, size, counts))
                    else:
                        problems.append(MissingCounterpart(f"line {n}: postgres file {pg!r} is empty"))
            if desc:
                p = base / desc
                text = p.read_text(encoding="utf-8") if p.is_file() else desc
                d1.append(DatasetSample(sid, DESCRIPTIVE, oracle_text, text, tags, TRAIN, size, counts))
    assign_splits(d1, seed, test_fraction)
    assign_splits(d2, seed, test_fraction)
    return DatasetBuild(d1, d2, problems)


def write_datasets(build: DatasetBuild, out_dir, taxonomy: FeatureTaxonomy | None = None) -> list[str]:
    taxonomy = taxonomy or default_taxonomy(Dialect.ORACLE)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for label, samples in (("dataset1", build.dataset1), ("dataset2", build.dataset2)):
        (out / f"{label}.jsonl").write_text("".join(s.to_json() + "\n" for s in samples), "utf-8")
        (out / f"{label}_distribution.csv").write_text(build.distribution(samples, taxonomy), "utf-8")
        names += [f"{label}.jsonl", f"{label}_distribution.csv"]
    (out / "problems.json").write_text(json.dumps([str(p) for p in build.problems], indent=2) + "\n", "utf-8")
    return names + ["problems.json"]


def read_dataset_jsonl(path) -> list[DatasetSample]:
    with open(path, encoding="utf-8") as fh:
        return [DatasetSample(**json.loads(line)) for line in fh if line.strip()]


def train_counts(samples: Sequence[DatasetSample]) -> dict[str, float]:
    """Keyword-hit totals per class over the train split, one count per distinct sample id."""
    seen = set()
    totals: dict[str, float] = {}
    for s in samples:
        if s.split != TRAIN or s.id in seen:
            continue
        seen.add(s.id)
        for c, v in s.feature_counts.items():
            totals[c] = totals.get(c, 0) + v
    return totals
