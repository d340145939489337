"""Run manifests: the JSON record written next to every emitted artifact set."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def corpus_fingerprint(items: Iterable[tuple[str, str]]) -> str:
    """Fingerprint of (name, content) pairs, independent of input order."""
    h = hashlib.sha256()
    for name, text in sorted((str(n), sha256_text(t)) for n, t in items):
        h.update(f"{name}\x00{text}\n".encode("utf-8"))
    return h.hexdigest()


def stable_id(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def now_iso() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def common_root(paths: Iterable[str]) -> str:
    parents = [os.path.dirname(os.path.abspath(p)) for p in paths]
    return os.path.commonpath(parents) if parents else ""


def relative_names(paths: list[str]) -> dict[str, str]:
    """Map each path to a name relative to the common parent directory."""
    root = common_root(paths)
    return {p: os.path.relpath(os.path.abspath(p), root) for p in paths}


@dataclass
class RunManifest:
    run_id: str
    command: str
    config: Mapping
    input_fingerprint: str
    started: str = field(default_factory=now_iso)
    finished: str | None = None
    artifacts: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        self.finished = self.finished or now_iso()
        missing = [a for a in self.artifacts if not (out / a).exists()]
        if missing:
            raise FileNotFoundError(f"manifest lists artifacts that were not written: {missing}")
        path = out / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        p = Path(path)
        if p.is_dir():
            p = p / "manifest.json"
        return cls(**json.loads(p.read_text(encoding="utf-8")))


def write_kv_metrics(path, metrics: Mapping, prefix: str = "") -> None:
    """Flat ``key=value`` export that any experiment tracker can ingest."""
    lines = []

    def walk(obj, key):
        if isinstance(obj, Mapping):
            for k in sorted(obj):
                walk(obj[k], f"{key}.{k}" if key else str(k))
        elif isinstance(obj, (int, float, str, bool)) or obj is None:
            lines.append(f"{key}={obj}")

    walk(metrics, prefix)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
