"""Statement-aligned chunking and reassembly of SQL scripts.

Scripts are first cut into *units*: single statements, PL/SQL blocks
(matched BEGIN ... END, package/procedure bodies, RMAN ``RUN {}`` blocks,
PostgreSQL bodies in dollar quotes) and SQL*Plus/psql line commands. Units
are contiguous and cover the whole text, so the original script is the
concatenation of its units. Chunks are built by greedily packing units up to
``max_chunk_bytes``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DuplicateChunk, MissingChunk
from .lexer import Dialect, Token, is_word, tokenize
from .taxonomy import FeatureProfile, FeatureTaxonomy, SourceScript, default_taxonomy, find_hits

__all__ = ["Unit", "split_units", "ChunkConfig", "Chunk", "chunk", "assemble", "chunks_jsonl"]

STATEMENT = "statement"
BLOCK = "block"
FORCED = "forced"

_SQLPLUS_LINE = {
    "SPOOL", "PROMPT", "PRO", "DEFINE", "DEF", "UNDEFINE", "ACCEPT", "ACC", "VARIABLE", "VAR",
    "PRINT", "WHENEVER", "EXIT", "QUIT", "SHOW", "TTITLE", "BTITLE", "BREAK", "COMPUTE",
    "CLEAR", "HOST", "COLUMN", "COL", "DESC", "DESCRIBE", "EXEC", "STA", "PAUSE", "CONNECT",
    "CONN", "DISCONNECT", "PASSWORD", "RECOVER", "STARTUP", "SHUTDOWN",
}
# SET is a SQL*Plus command unless it starts one of these SQL statements
_SQL_SET = {"TRANSACTION", "ROLE", "CONSTRAINT", "CONSTRAINTS"}
_PL_UNITS = {"PROCEDURE", "FUNCTION", "PACKAGE", "TRIGGER"}
_CREATE_MODIFIERS = {"OR", "REPLACE", "EDITIONABLE", "NONEDITIONABLE", "EDITIONING"}


@dataclass(frozen=True)
class Unit:
    """A contiguous slice of a script holding at most one statement or block."""

    start: int
    end: int
    kind: str
    tokens: tuple[Token, ...]
    terminated: bool = True
    line_command: bool = False


def _is_slash(tok: Token) -> bool:
    return tok.kind == "punctuation" and tok.text == "/"


def _word(tok: Token | None) -> str:
    return tok.text.upper() if tok is not None and is_word(tok) else ""


def _starts_block(tokens: Sequence[Token], i: int, dialect: Dialect) -> bool:
    first = _word(tokens[i])
    if first == "RUN" and i + 1 < len(tokens) and tokens[i + 1].text == "{":
        return True
    if dialect is not Dialect.ORACLE:
        return False
    if first in ("DECLARE", "BEGIN"):
        return True
    if first != "CREATE":
        return False
    j = i + 1
    while j < len(tokens) and _word(tokens[j]) in _CREATE_MODIFIERS:
        j += 1
    obj = _word(tokens[j]) if j < len(tokens) else ""
    if obj in _PL_UNITS:
        return True
    return obj == "TYPE" and j + 2 < len(tokens) and _word(tokens[j + 1]) == "BODY"


def _is_line_command(tokens: Sequence[Token], i: int, dialect: Dialect) -> bool:
    tok = tokens[i]
    if tok.kind == "keyword" and tok.text.startswith("\\"):
        return True
    if dialect is not Dialect.ORACLE:
        return False
    if tok.text in ("@", "@@"):
        return True
    word = _word(tok)
    if word == "SET":
        nxt = _word(tokens[i + 1]) if i + 1 < len(tokens) else ""
        return nxt not in _SQL_SET
    if word == "START" and i + 1 < len(tokens) and _word(tokens[i + 1]) == "WITH":
        return False
    return word in _SQLPLUS_LINE or word == "START"


class _Splitter:
    def __init__(self, text: str, dialect: Dialect, tokens=None):
        self.text = text
        self.dialect = dialect
        self.tokens = tokens if tokens is not None else tokenize(text, dialect)

    def end_of(self, j: int) -> int:
        """Unit end after token ``j``: swallow the rest of the line if it is blank."""
        text = self.text
        pos = self.tokens[j].end
        k = pos
        while k < len(text) and text[k] in " \t\r":
            k += 1
        if k >= len(text):
            return len(text)
        if text[k] == "\n":
            return k + 1
        return pos

    def scan(self, i: int):
        """Find the last token index of the unit starting at token ``i``.

        Returns (last_index, kind, terminated, line_command).
        """
        toks = self.tokens
        n = len(toks)
        first = toks[i]
        if _is_slash(first):
            return i, STATEMENT, True, True
        if _is_line_command(toks, i, self.dialect):
            j = i
            while j + 1 < n and toks[j + 1].line == first.line and toks[j].text != ";":
                j += 1
            return j, STATEMENT, True, True

        block = _starts_block(toks, i, self.dialect)
        kind = BLOCK if block else STATEMENT
        stack: list[str] = []
        pushed = False
        pending_end = False
        header = None
        paren = 0
        dollar = None
        j = i
        while j < n:
            tok = toks[j]
            text = tok.text
            if tok.kind == "punctuation" and text.startswith("$"):
                kind = BLOCK
                if dollar is None:
                    dollar = text
                elif text == dollar:
                    dollar = None
                j += 1
                continue
            if dollar is not None:
                j += 1
                continue
            if j > i and _is_slash(tok):
                # SQL*Plus "/" line ends whatever is open; it belongs to this unit
                return j, kind, True, False
            if text == "(":
                paren += 1
            elif text == ")":
                paren = max(0, paren - 1)
            elif block:
                word = _word(tok)
                if word == "BEGIN":
                    if stack and stack[-1] == "sub":
                        stack[-1] = "block"
                    else:
                        stack.append("block")
                    pushed = True
                elif word == "DECLARE":
                    stack.append("sub")
                    pushed = True
                elif word == "CASE":
                    stack.append("case")
                    pushed = True
                elif word == "END":
                    nxt = _word(toks[j + 1]) if j + 1 < n else ""
                    if nxt not in ("IF", "LOOP"):
                        if stack:
                            stack.pop()
                        if not stack:
                            pending_end = True
                elif word in ("PROCEDURE", "FUNCTION"):
                    header = "sub"
                elif word == "PACKAGE" or (word == "TYPE" and _word(toks[j + 1] if j + 1 < n else None) == "BODY"):
                    header = "decl"
                elif word in ("IS", "AS") and header and paren == 0:
                    stack.append(header)
                    pushed = True
                    header = None
                elif text == "{":
                    stack.append("brace")
                    pushed = True
                elif text == "}":
                    if stack:
                        stack.pop()
                    if not stack:
                        return j, kind, True, False
                elif text == ";" and paren == 0:
                    header = None
                    if not stack and (pending_end or not pushed):
                        return j, kind, True, False
            elif text == ";" and paren == 0:
                return j, kind, True, False
            j += 1
        return n - 1, kind, False, False

    def units(self) -> list[Unit]:
        toks = self.tokens
        units: list[Unit] = []
        pos = 0
        i = 0
        while i < len(toks):
            j, kind, terminated, line_cmd = self.scan(i)
            # a "/" right after a unit re-runs it in SQL*Plus: keep them together
            if j + 1 < len(toks) and _is_slash(toks[j + 1]) and not _is_slash(toks[i]):
                j += 1
            end = self.end_of(j) if terminated else toks[j].end
            units.append(Unit(pos, end, kind, tuple(toks[i:j + 1]), terminated, line_cmd))
            pos = end
            i = j + 1
        if pos < len(self.text):
            if units:
                last = units[-1]
                units[-1] = Unit(last.start, len(self.text), last.kind, last.tokens,
                                 last.terminated, last.line_command)
            else:
                units.append(Unit(0, len(self.text), STATEMENT, (), False))
        return units


def split_units(text: str, dialect=Dialect.ORACLE, tokens=None) -> list[Unit]:
    """Cut ``text`` into contiguous statement/block units covering all of it."""
    return _Splitter(text, Dialect.parse(dialect), tokens).units()


# -- chunks -------------------------------------------------------------------


@dataclass(frozen=True)
class ChunkConfig:
    max_chunk_bytes: int = 8192
    pack: bool = True  # False: one unit per chunk (debugging)

    def __post_init__(self):
        if self.max_chunk_bytes < 1:
            raise ValueError("max_chunk_bytes must be positive")


@dataclass(frozen=True)
class Chunk:
    script_path: str
    index: int
    byte_span: tuple[int, int]
    text: str
    features: FeatureProfile
    boundary_kind: str
    span: tuple[int, int]  # character offsets

    def to_dict(self) -> dict:
        return {"script": self.script_path, "index": self.index, "start": self.byte_span[0],
                "end": self.byte_span[1], "boundary_kind": self.boundary_kind,
                "features": dict(self.features.counts)}


def _nbytes(s: str) -> int:
    return len(s.encode("utf-8"))


def _inner_pieces(splitter: _Splitter, unit: Unit) -> list[tuple[int, int]]:
    """Cut an oversize block after each of its inner ';' tokens."""
    cuts = []
    toks = unit.tokens
    index_of = {id(t): k for k, t in enumerate(splitter.tokens)}
    for tok in toks[:-1]:
        if tok.text == ";":
            cuts.append(splitter.end_of(index_of[id(tok)]))
    cuts = [c for c in cuts if unit.start < c < unit.end]
    bounds = [unit.start, *sorted(set(cuts)), unit.end]
    return list(zip(bounds, bounds[1:]))


def _pack(pieces: Iterable[tuple[int, int, str]], text: str, limit: int, pack: bool):
    out: list[list] = []
    for start, end, kind in pieces:
        size = _nbytes(text[start:end])
        if pack and out and out[-1][2] != FORCED and kind != FORCED and out[-1][3] + size <= limit:
            out[-1][1] = end
            out[-1][2] = kind
            out[-1][3] += size
        else:
            out.append([start, end, kind, size])
    return out


def chunk(script: SourceScript, config: ChunkConfig | None = None,
          taxonomy: FeatureTaxonomy | None = None) -> list[Chunk]:
    config = config or ChunkConfig()
    taxonomy = taxonomy or default_taxonomy(script.dialect)
    text = script.text
    tokens = tokenize(text, script.dialect)
    splitter = _Splitter(text, script.dialect, tokens)
    limit = config.max_chunk_bytes

    pieces: list[tuple[int, int, str]] = []
    for unit in splitter.units():
        if _nbytes(text[unit.start:unit.end]) <= limit:
            pieces.append((unit.start, unit.end, unit.kind))
            continue
        inner = _inner_pieces(splitter, unit) if unit.kind == BLOCK else [(unit.start, unit.end)]
        for start, end, _, _ in _pack(((s, e, STATEMENT) for s, e in inner), text, limit, True):
            pieces.append((start, end, FORCED))

    hits = find_hits(tokens, taxonomy)
    chunks = []
    h = 0
    bpos = 0
    for index, (start, end, kind, size) in enumerate(_pack(pieces, text, limit, config.pack)):
        counts = {c: 0 for c in taxonomy.class_names}
        while h < len(hits) and hits[h].start < end:
            counts[hits[h].cls] += 1
            h += 1
        chunks.append(Chunk(script.path, index, (bpos, bpos + size), text[start:end],
                            FeatureProfile(taxonomy.dialect, counts), kind, (start, end)))
        bpos += size
    return chunks


def chunks_jsonl(chunks: Iterable[Chunk]) -> str:
    return "".join(json.dumps(c.to_dict()) + "\n" for c in chunks)


def assemble(chunks) -> str:
    """Join translated chunks in source order.

    Each item needs ``.source`` (a :class:`Chunk`) and ``.output_text``.
    A newline is inserted between two chunks only when the earlier output
    does not already end with one.
    """
    items = list(chunks)
    if not items:
        return ""
    paths = {c.source.script_path for c in items}
    if len(paths) != 1:
        raise ValueError(f"chunks from several scripts: {sorted(paths)}")
    by_index = {}
    for c in items:
        if c.source.index in by_index:
            raise DuplicateChunk(f"chunk {c.source.index} given twice")
        by_index[c.source.index] = c
    missing = sorted(set(range(len(items))) - set(by_index))
    if missing:
        raise MissingChunk(f"missing chunk indexes {missing}")
    parts = []
    for k in range(len(items)):
        out = by_index[k].output_text
        if parts and not parts[-1].endswith("\n"):
            parts.append("\n")
        parts.append(out)
    return "".join(parts)
