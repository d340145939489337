"""Keyword-level feature profiling of SQL scripts.

A :class:`FeatureTaxonomy` maps keyword patterns to coarse feature classes
(CORE_SQL, PL_SQL, ...). :func:`profile` counts one hit per pattern match in
a script's token stream, so counts are additive across chunks and corpora.

Taxonomies are plain text files (see ``data/oracle.taxonomy``) so the
keyword inventory can be corrected without touching code.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DialectMismatch, TaxonomyError, UnmappedClass
from .lexer import Dialect, Token, is_word, tokenize

__all__ = [
    "FeatureClass", "FeatureTaxonomy", "FeatureProfile", "FeatureMapping",
    "SourceScript", "Hit", "size_class_for", "load_taxonomy", "default_taxonomy",
    "default_mapping", "find_hits", "profile", "profile_text", "profile_corpus",
    "predict_expected_features", "distribution_csv",
]

TAXONOMY_FORMAT_VERSION = 1


def size_class_for(line_count: int) -> str:
    if line_count <= 100:
        return "S"
    if line_count <= 200:
        return "M"
    return "L"


@dataclass
class SourceScript:
    path: str
    dialect: Dialect
    text: str
    line_count: int = field(init=False)
    size_class: str = field(init=False)

    def __post_init__(self):
        self.dialect = Dialect.parse(self.dialect)
        self.line_count = len(self.text.splitlines())
        self.size_class = size_class_for(self.line_count)

    @classmethod
    def load(cls, path, dialect) -> "SourceScript":
        path = Path(path)
        return cls(str(path), dialect, path.read_text(encoding="utf-8"))


@dataclass(frozen=True)
class FeatureClass:
    name: str
    keyword_patterns: tuple[str, ...]
    target_quality: float
    mode: str | None = None
    triggers: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.keyword_patterns:
            raise TaxonomyError(f"class {self.name} has no keyword patterns")
        if not 0.0 <= self.target_quality <= 1.0:
            raise TaxonomyError(f"class {self.name}: target_quality outside [0, 1]")


def _norm_pattern(pattern: str) -> tuple[str, ...]:
    return tuple(w.upper() for w in pattern.split())


@dataclass(frozen=True)
class _Pattern:
    words: tuple[str, ...]
    cls: str
    modal: bool
    order: int

    @property
    def wildcards(self) -> int:
        return sum(w.endswith("*") for w in self.words)

    def matches(self, words: Sequence[str]) -> bool:
        if len(words) < len(self.words):
            return False
        for pat, word in zip(self.words, words):
            if pat.endswith("*"):
                if not word.startswith(pat[:-1]):
                    return False
            elif pat != word:
                return False
        return True


class _Matcher:
    """Longest-match lookup of multi-word patterns over a word sequence."""

    def __init__(self, patterns: Iterable[_Pattern]):
        self.exact: dict[str, list[_Pattern]] = {}
        self.wild: list[_Pattern] = []
        for p in patterns:
            if p.words[0].endswith("*"):
                self.wild.append(p)
            else:
                self.exact.setdefault(p.words[0], []).append(p)
        key = lambda p: (-len(p.words), p.wildcards, not p.modal, p.order)
        for lst in self.exact.values():
            lst.sort(key=key)
        self.wild.sort(key=key)
        self._key = key

    def match(self, words: Sequence[str], active) -> _Pattern | None:
        first = words[0]
        cands = list(self.exact.get(first, ()))
        cands += [p for p in self.wild if first.startswith(p.words[0][:-1])]
        if len(cands) > 1:
            cands.sort(key=self._key)
        for p in cands:
            if active(p) and p.matches(words):
                return p
        return None


@dataclass(frozen=True)
class FeatureTaxonomy:
    dialect: Dialect
    classes: tuple[FeatureClass, ...]
    version: int = TAXONOMY_FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "dialect", Dialect.parse(self.dialect))
        self.validate()
        patterns = []
        for cls in self.classes:
            for pat in cls.keyword_patterns:
                patterns.append(_Pattern(_norm_pattern(pat), cls.name, cls.mode is not None, len(patterns)))
        object.__setattr__(self, "_matcher", _Matcher(patterns))
        triggers = []
        for cls in self.classes:
            for pat in cls.triggers:
                triggers.append(_Pattern(_norm_pattern(pat), cls.mode, True, len(triggers)))
        object.__setattr__(self, "_triggers", _Matcher(triggers))

    def validate(self):
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise TaxonomyError("duplicate class names")
        owner: dict[tuple[str, ...], str] = {}
        for cls in self.classes:
            for pat in cls.keyword_patterns:
                key = _norm_pattern(pat)
                if not key:
                    raise TaxonomyError(f"class {cls.name}: empty pattern")
                prev = owner.get(key)
                if prev is not None and prev != cls.name:
                    raise TaxonomyError(
                        f"pattern {' '.join(key)!r} appears in both {prev} and {cls.name}"
                    )
                owner[key] = cls.name

    @property
    def class_names(self) -> list[str]:
        return [c.name for c in self.classes]

    def __getitem__(self, name: str) -> FeatureClass:
        for c in self.classes:
            if c.name == name:
                return c
        raise KeyError(name)

    def detect_mode(self, words: Sequence[str]) -> str | None:
        if not words:
            return None
        hit = self._triggers.match(words, lambda p: True)
        return hit.cls if hit else None

    def dumps(self) -> str:
        out = [f"[taxonomy]\nformat_version = {self.version}\ndialect = {self.dialect.value}\n"]
        for c in self.classes:
            out.append(f"\n[class {c.name}]\ntarget_quality = {c.target_quality!r}\n")
            if c.mode:
                out.append(f"mode = {c.mode}\ntriggers =\n")
                out.extend(f"    {t}\n" for t in c.triggers)
            out.append("keywords =\n")
            out.extend(f"    {k}\n" for k in c.keyword_patterns)
        return "".join(out)


def _lines(value: str) -> tuple[str, ...]:
    return tuple(line.strip() for line in value.splitlines() if line.strip())


def parse_taxonomy(text: str, source="<string>") -> FeatureTaxonomy:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",))
    try:
        parser.read_string(text, source=str(source))
    except configparser.Error as exc:
        raise TaxonomyError(f"{source}: {exc}") from exc
    if not parser.has_section("taxonomy"):
        raise TaxonomyError(f"{source}: missing [taxonomy] section")
    head = parser["taxonomy"]
    version = head.getint("format_version", fallback=TAXONOMY_FORMAT_VERSION)
    if version != TAXONOMY_FORMAT_VERSION:
        raise TaxonomyError(f"{source}: unsupported format_version {version}")
    try:
        dialect = Dialect.parse(head["dialect"])
    except (KeyError, ValueError) as exc:
        raise TaxonomyError(f"{source}: bad or missing dialect") from exc
    classes = []
    for section in parser.sections():
        if not section.startswith("class "):
            continue
        body = parser[section]
        try:
            classes.append(FeatureClass(
                name=section[len("class "):].strip(),
                keyword_patterns=_lines(body.get("keywords", "")),
                target_quality=body.getfloat("target_quality"),
                mode=body.get("mode") or None,
                triggers=_lines(body.get("triggers", "")),
            ))
        except (TypeError, ValueError) as exc:
            raise TaxonomyError(f"{source} [{section}]: {exc}") from exc
    if not classes:
        raise TaxonomyError(f"{source}: no classes defined")
    return FeatureTaxonomy(dialect, tuple(classes), version)


def load_taxonomy(path) -> FeatureTaxonomy:
    path = Path(path)
    return parse_taxonomy(path.read_text(encoding="utf-8"), path)


def default_taxonomy(dialect) -> FeatureTaxonomy:
    dialect = Dialect.parse(dialect)
    text = resources.files("oramig.data").joinpath(f"{dialect.value}.taxonomy").read_text("utf-8")
    return parse_taxonomy(text, f"{dialect.value}.taxonomy")


# -- profiles ---------------------------------------------------------------


@dataclass(frozen=True)
class FeatureProfile:
    """Keyword-hit counts per feature class.

    ``counts`` is usually integral; profiles produced by
    :func:`predict_expected_features` may carry fractional counts.
    """

    dialect: Dialect
    counts: Mapping[str, float]

    @property
    def total_hits(self) -> float:
        return sum(self.counts.values())

    @property
    def percentages(self) -> dict[str, float]:
        total = self.total_hits
        if total == 0:
            return {k: 0.0 for k in self.counts}
        return {k: v / total for k, v in self.counts.items()}

    @property
    def classes(self) -> list[str]:
        """Classes with at least one hit."""
        return [k for k, v in self.counts.items() if v > 0]

    def to_dict(self, **extra) -> dict:
        return {**extra, "dialect": self.dialect.value, "counts": dict(self.counts),
                "percentages": self.percentages, "total_hits": self.total_hits}

    @classmethod
    def empty(cls, taxonomy: FeatureTaxonomy) -> "FeatureProfile":
        return cls(taxonomy.dialect, {c: 0 for c in taxonomy.class_names})

    def __add__(self, other: "FeatureProfile") -> "FeatureProfile":
        if other.dialect is not self.dialect:
            raise DialectMismatch(f"{self.dialect.value} + {other.dialect.value}")
        keys = list(self.counts) + [k for k in other.counts if k not in self.counts]
        return FeatureProfile(self.dialect, {k: self.counts.get(k, 0) + other.counts.get(k, 0) for k in keys})


@dataclass(frozen=True)
class Hit:
    cls: str
    start: int  # character offsets of the matched words
    end: int


def find_hits(tokens: Sequence[Token], taxonomy: FeatureTaxonomy) -> list[Hit]:
    """All pattern matches in ``tokens``, leftmost-longest, non-overlapping."""
    words: list[str] = []
    runs: list[tuple[int, int]] = []  # (first index, length) of consecutive word runs
    idx = []
    for i, tok in enumerate(tokens):
        if is_word(tok):
            if not idx or idx[-1] != i - 1:
                runs.append((len(words), 0))
            runs[-1] = (runs[-1][0], runs[-1][1] + 1)
            words.append(tok.text.upper())
            idx.append(i)
        # anything else breaks multi-word patterns
    mode = None
    if idx and idx[0] == 0:
        # mode is decided by the script's leading command words
        mode = taxonomy.detect_mode(words[: runs[0][1]])
    active = lambda p: not p.modal or taxonomy[p.cls].mode == mode
    matcher = taxonomy._matcher
    hits = []
    for start, length in runs:
        j = start
        end = start + length
        while j < end:
            p = matcher.match(words[j:end], active)
            if p is None:
                j += 1
                continue
            n = len(p.words)
            hits.append(Hit(p.cls, tokens[idx[j]].start, tokens[idx[j + n - 1]].end))
            j += n
    return hits


def _counts(hits: Iterable[Hit], taxonomy: FeatureTaxonomy) -> dict[str, int]:
    counts = {c: 0 for c in taxonomy.class_names}
    for h in hits:
        counts[h.cls] += 1
    return counts


def profile_text(text: str, taxonomy: FeatureTaxonomy) -> FeatureProfile:
    hits = find_hits(tokenize(text, taxonomy.dialect), taxonomy)
    return FeatureProfile(taxonomy.dialect, _counts(hits, taxonomy))


def profile(script: SourceScript, taxonomy: FeatureTaxonomy) -> FeatureProfile:
    if script.dialect is not taxonomy.dialect:
        raise DialectMismatch(
            f"{script.path} is {script.dialect.value}, taxonomy is {taxonomy.dialect.value}"
        )
    return profile_text(script.text, taxonomy)


def profile_corpus(scripts: Sequence[SourceScript], taxonomy: FeatureTaxonomy) -> FeatureProfile:
    if not scripts:
        raise ValueError("profile_corpus needs at least one script")
    total = FeatureProfile.empty(taxonomy)
    for script in scripts:
        total = total + profile(script, taxonomy)
    return total


# -- Oracle -> PostgreSQL expectation ---------------------------------------


@dataclass(frozen=True)
class FeatureMapping:
    rows: Mapping[str, Mapping[str, float]]

    def __post_init__(self):
        for src, targets in self.rows.items():
            total = sum(targets.values())
            if any(w < 0 for w in targets.values()) or abs(total - 1.0) > 1e-9:
                raise TaxonomyError(f"mapping weights for {src} must be non-negative and sum to 1")

    @property
    def targets(self) -> list[str]:
        seen = []
        for targets in self.rows.values():
            seen += [t for t in targets if t not in seen]
        return seen

    @classmethod
    def parse(cls, text: str) -> "FeatureMapping":
        rows: dict[str, dict[str, float]] = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise TaxonomyError(f"mapping line {n}: expected 'source target weight'")
            src, dst, weight = parts
            rows.setdefault(src, {})
            rows[src][dst] = rows[src].get(dst, 0.0) + float(weight)
        return cls(rows)

    @classmethod
    def load(cls, path) -> "FeatureMapping":
        return cls.parse(Path(path).read_text(encoding="utf-8"))


def default_mapping() -> FeatureMapping:
    return FeatureMapping.parse(
        resources.files("oramig.data").joinpath("default.mapping").read_text("utf-8")
    )


def predict_expected_features(oracle_profile: FeatureProfile, mapping: FeatureMapping | None = None,
                              target_classes: Sequence[str] | None = None) -> FeatureProfile:
    """Redistribute Oracle class counts onto PostgreSQL classes."""
    if oracle_profile.dialect is not Dialect.ORACLE:
        raise DialectMismatch("expected an Oracle profile")
    mapping = mapping or default_mapping()
    targets = list(target_classes) if target_classes is not None else mapping.targets
    out = {t: 0.0 for t in targets}
    for src, count in oracle_profile.counts.items():
        if src not in mapping.rows:
            raise UnmappedClass(src)
        for dst, weight in mapping.rows[src].items():
            out[dst] = out.get(dst, 0.0) + count * weight
    return FeatureProfile(Dialect.POSTGRESQL, out)


def distribution_csv(train: FeatureProfile, test: FeatureProfile | None = None) -> str:
    """Tables I/II-shaped CSV: feature, train_pct, test_pct (percent units)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "train_pct", "test_pct"])
    tr = train.percentages
    te = test.percentages if test is not None else {}
    for name in train.counts:
        w.writerow([name, f"{100 * tr[name]:.6f}", f"{100 * te[name]:.6f}" if name in te else ""])
    return buf.getvalue()


def profile_json(script: SourceScript, prof: FeatureProfile) -> str:
    return json.dumps(
        {"file": script.path, "dialect": prof.dialect.value, "counts": dict(prof.counts),
         "percentages": prof.percentages, "size_class": script.size_class},
        sort_keys=False,
    )
