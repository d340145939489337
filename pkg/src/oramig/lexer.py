"""Dialect-aware SQL tokenizer.

The lexer is deliberately shallow: it knows about comments, the different
quoting forms of Oracle and PostgreSQL, SQL*Plus line commands and psql
meta-commands, and nothing about grammar. Everything downstream (profiling,
chunking, metrics, validation) works from its token stream.

Dollar-quoted bodies (``$$ ... $$``) are *not* treated as string literals:
in practice they hold PL/pgSQL function bodies, so their contents are
lexed as code and the delimiters are emitted as punctuation tokens.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, replace
from itertools import accumulate

from .errors import UnterminatedLiteral

log = logging.getLogger(__name__)

__all__ = ["Dialect", "Token", "tokenize", "KEYWORDS", "is_word"]


class Dialect(str, enum.Enum):
    ORACLE = "oracle"
    POSTGRESQL = "postgresql"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"postgres": "postgresql", "pg": "postgresql", "ora": "oracle"}
        return cls(aliases.get(key, key))


KIND_KEYWORD = "keyword"
KIND_IDENTIFIER = "identifier"
KIND_LITERAL = "literal"
KIND_OPERATOR = "operator"
KIND_PUNCT = "punctuation"


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    start: int  # character offsets into the source text
    end: int
    line: int
    byte_start: int
    byte_end: int
    quoted: bool = False

    @property
    def norm(self) -> str:
        """Case-folded text for keywords, verbatim text otherwise."""
        return self.text.upper() if self.kind == KIND_KEYWORD else self.text

    @property
    def byte_span(self) -> tuple[int, int]:
        return (self.byte_start, self.byte_end)


def is_word(tok: Token) -> bool:
    """True for bare words: keywords and unquoted identifiers."""
    return tok.kind in (KIND_KEYWORD, KIND_IDENTIFIER) and not tok.quoted


_COMMON = """
ABORT ACCESS ADD AFTER AGGREGATE ALL ALTER ANALYZE AND ANY ARRAY AS ASC AT
AUTHORIZATION AUTONOMOUS_TRANSACTION BEFORE BEGIN BETWEEN BIGINT BODY BOOLEAN
BOTH BULK BY CALL CASCADE CASE CAST CHAR CHARACTER CHECK CHECKPOINT CLOSE
CLUSTER COLLECT COLUMN COMMENT COMMIT CONCURRENTLY CONNECT CONSTANT CONSTRAINT
CONTINUE COPY CREATE CROSS CUBE CURRENT CURRENT_DATE CURRENT_TIMESTAMP CURSOR
DATABASE DATE DEALLOCATE DEC DECIMAL DECLARE DEFAULT DEFERRABLE DELETE DESC
DISTINCT DO DOUBLE DROP EACH ELSE ELSIF END ESCAPE EXCEPT EXCEPTION EXECUTE
EXISTS EXIT EXPLAIN EXTENSION FALSE FETCH FIRST FLOAT FOR FOREACH FOREIGN FROM
FULL FUNCTION GRANT GROUP GROUPING HAVING IF IMMEDIATE IN INDEX INNER INOUT
INSERT INT INTEGER INTERSECT INTERVAL INTO IS JOIN KEY LANGUAGE LAST LATERAL
LEADING LEFT LIKE LIMIT LOCK LOOP MATERIALIZED MERGE NATURAL NEXT NO NOT NULL
NULLS NUMERIC OF OFFSET ON ONLY OPEN OR ORDER OTHERS OUT OUTER OVER PARTITION
PERFORM PRAGMA PRECISION PRIMARY PRIOR PROCEDURE PUBLIC RAISE RANGE REAL
RECORD REFERENCES REINDEX RELEASE RENAME REPLACE RESET RESTRICT RETURN
RETURNING RETURNS REVOKE RIGHT ROLE ROLLBACK ROLLUP ROW ROWS SAVEPOINT SCHEMA
SELECT SEQUENCE SESSION SET SETOF SHOW SMALLINT SOME START STRICT SYSTEM TABLE
TABLESPACE TEMP TEMPORARY TEXT THEN TIME TIMESTAMP TO TRAILING TRANSACTION
TRIGGER TRUE TRUNCATE TYPE UNION UNIQUE UPDATE USER USING VACUUM VALUES
VARCHAR VARIADIC VIEW WHEN WHERE WHILE WINDOW WITH WITHOUT WORK
"""

_ORACLE = """
ACCEPT ALLOCATE ARCHIVELOG BACKUP BFILE BINARY_INTEGER BLOB BREAK BTITLE
CATALOG CHANNEL CLEAR CLOB COMPUTE CONFIGURE CONNECT_BY_ROOT CROSSCHECK
DBMS_OUTPUT DEFINE DUAL DUPLICATE ECHO ELSIF EXCEPTION_INIT FEEDBACK FORALL
HEADING HOST LEVEL LINESIZE LONG MINUS NOCOPY NOCYCLE NOLOGGING NUMBER
NVARCHAR2 NVL NVL2 OBSOLETE PACKAGE PAGESIZE PLS_INTEGER PRINT PROMPT
RAISE_APPLICATION_ERROR RAW RECOVER REM REMARK REPORT RESTORE ROWID ROWNUM
ROWTYPE RUN SERVEROUTPUT SPOOL SQLCODE SQLERRM SQLERROR START SYNONYM SYSDATE
SYSTIMESTAMP TERMOUT TIMING TRIMSPOOL TTITLE UNDEFINE VARCHAR2 VARIABLE VERIFY
WHENEVER
"""

_POSTGRES = """
BIGSERIAL BYTEA DIAGNOSTICS FOUND GET ILIKE JSON JSONB LISTEN NOTIFY
PLPGSQL QUERY REFRESH ROWTYPE SERIAL SQLSTATE SQLERRM TIMESTAMPTZ UUID
"""

KEYWORDS = {
    Dialect.ORACLE: frozenset((_COMMON + _ORACLE).split()),
    Dialect.POSTGRESQL: frozenset((_COMMON + _POSTGRES).split()),
}

# SQL*Plus commands whose remainder of line is free text, not SQL.
_SQLPLUS_TEXT_COMMANDS = {"PROMPT", "PRO"}
_SQLPLUS_COMMENT_COMMANDS = {"REM", "REMARK"}

_WS = re.compile(r"\s+")
_NUMBER = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_WORD = re.compile(r"[A-Za-z_\u0080-￿][\w$#]*")
_META = re.compile(r"\\[A-Za-z!?+]+")
_DOLLAR = re.compile(r"\$(?:[A-Za-z_][A-Za-z0-9_]*)?\$")
_PARAM = re.compile(r"\$\d+")
_SLASH_LINE = re.compile(r"[ \t]*/[ \t]*(?:\r?\n|$)")
_OPERATORS = sorted(
    [":=", "=>", "||", "<=", ">=", "<>", "!=", "^=", "::", "..", "**", "->>",
     "->", "#>>", "#>", "@>", "<@", "~*", "!~*", "!~", "@@"],
    key=len, reverse=True,
)
_PUNCT = set("(),;.[]{}")
_Q_CLOSERS = {"[": "]", "{": "}", "(": ")", "<": ">"}


def _byte_table(text: str):
    if text.isascii():
        return None
    return [0, *accumulate(len(c.encode("utf-8")) for c in text)]


class _Lexer:
    def __init__(self, text: str, dialect: Dialect, errors):
        self.text = text
        self.dialect = dialect
        self.keywords = KEYWORDS[dialect]
        self.errors = errors
        self.tokens: list[Token] = []
        self.open_tags: list[str] = []  # dollar-quote tags currently open
        self.bytes = _byte_table(text)
        self.line_starts = [0] + [m.end() for m in re.finditer(r"\n", text)]

    def line_of(self, pos: int) -> int:
        lo, hi = 0, len(self.line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.line_starts[mid] <= pos:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1

    def emit(self, kind, start, end, quoted=False):
        b = self.bytes
        bs, be = (start, end) if b is None else (b[start], b[end])
        self.tokens.append(
            Token(kind, self.text[start:end], start, end, self.line_of(start), bs, be, quoted)
        )

    def fail(self, start, kind):
        err = UnterminatedLiteral(self.line_of(start), kind)
        log.debug("%s", err)
        if self.errors is not None:
            self.errors.append(err)

    def at_line_start(self, pos: int) -> bool:
        i = pos - 1
        while i >= 0 and self.text[i] in " \t":
            i -= 1
        return i < 0 or self.text[i] == "\n"

    def line_end(self, pos: int) -> int:
        nl = self.text.find("\n", pos)
        return len(self.text) if nl < 0 else nl

    def quoted(self, pos: int, body_start: int, quote: str, backslash=False) -> int:
        """Scan a quoted run whose body begins at ``body_start``; return end offset."""
        text = self.text
        i = body_start
        n = len(text)
        while i < n:
            c = text[i]
            if backslash and c == "\\":
                i += 2
                continue
            if c == quote:
                if i + 1 < n and text[i + 1] == quote:
                    i += 2
                    continue
                return i + 1
            i += 1
        return -1

    def run(self) -> list[Token]:
        text = self.text
        n = len(text)
        pos = 0
        oracle = self.dialect is Dialect.ORACLE
        while pos < n:
            m = _WS.match(text, pos)
            if m:
                pos = m.end()
                continue
            c = text[pos]
            two = text[pos:pos + 2]

            if two == "--":
                pos = self.line_end(pos)
                continue
            if two == "/*":
                close = text.find("*/", pos + 2)
                if close < 0:
                    self.fail(pos, "block comment")
                    pos = n
                else:
                    pos = close + 2
                continue

            if c == "/" and self.at_line_start(pos) and _SLASH_LINE.match(text, pos):
                self.emit(KIND_PUNCT, pos, pos + 1)
                pos += 1
                continue

            # string literals, including prefixed forms
            lit = self.match_string(pos)
            if lit is not None:
                pos = lit
                continue

            if c == '"':
                end = self.quoted(pos, pos + 1, '"')
                if end < 0:
                    self.fail(pos, "quoted identifier")
                    end = self.line_end(pos)
                self.emit(KIND_IDENTIFIER, pos, end, quoted=True)
                pos = end
                continue

            if c == "$":
                m = _DOLLAR.match(text, pos)
                if m and not oracle:
                    tag = m.group()
                    if tag in self.open_tags:
                        del self.open_tags[self.open_tags.index(tag):]
                    else:
                        self.open_tags.append(tag)
                    self.emit(KIND_PUNCT, pos, m.end())
                    pos = m.end()
                    continue
                m = _PARAM.match(text, pos)
                if m:
                    self.emit(KIND_IDENTIFIER, pos, m.end())
                    pos = m.end()
                    continue

            m = _NUMBER.match(text, pos)
            if m and (c.isdigit() or (c == "." and pos + 1 < n and text[pos + 1].isdigit())):
                self.emit(KIND_LITERAL, pos, m.end())
                pos = m.end()
                continue

            m = _WORD.match(text, pos)
            if m:
                end = m.end()
                for tag in self.open_tags:
                    # "x$f$" inside a $f$ body: the word stops where the closing tag begins
                    cut = text.find(tag, pos, end)
                    if cut > pos:
                        end = cut
                word = text[pos:end].upper()
                kind = KIND_KEYWORD if word in self.keywords else KIND_IDENTIFIER
                self.emit(kind, pos, end)
                pos = end
                if oracle and self.at_line_start(m.start()):
                    if word in _SQLPLUS_COMMENT_COMMANDS:
                        # REMARK: drop the token we just emitted, rest of line is a comment
                        self.tokens.pop()
                        pos = self.line_end(pos)
                    elif word in _SQLPLUS_TEXT_COMMANDS:
                        self.tokens[-1] = replace(self.tokens[-1], kind=KIND_KEYWORD)
                        eol = self.line_end(pos)
                        body = text[pos:eol]
                        if body.strip():
                            s = pos + len(body) - len(body.lstrip())
                            e = pos + len(body.rstrip())
                            self.emit(KIND_LITERAL, s, e)
                        pos = eol
                continue

            if c == "\\":
                m = _META.match(text, pos)
                if m:
                    self.emit(KIND_KEYWORD, pos, m.end())
                    pos = m.end()
                    continue

            if c in _PUNCT:
                self.emit(KIND_PUNCT, pos, pos + 1)
                pos += 1
                continue

            for op in _OPERATORS:
                if text.startswith(op, pos):
                    self.emit(KIND_OPERATOR, pos, pos + len(op))
                    pos += len(op)
                    break
            else:
                self.emit(KIND_OPERATOR, pos, pos + 1)
                pos += 1
        return self.tokens

    def match_string(self, pos: int):
        text = self.text
        c = text[pos]
        start = pos
        prefix = ""
        if c in "nN" and (text[pos + 1:pos + 2] == "'" or text[pos + 1:pos + 3].lower() == "q'"):
            prefix = "n"
            pos += 1
            c = text[pos]
        if c in "qQ" and text[pos + 1:pos + 2] == "'" and self.dialect is Dialect.ORACLE:
            if pos + 2 >= len(text):
                self.fail(start, "string literal")
                self.emit(KIND_LITERAL, start, len(text))
                return len(text)
            delim = text[pos + 2]
            closer = _Q_CLOSERS.get(delim, delim) + "'"
            close = text.find(closer, pos + 3)
            if close < 0:
                return self.recover(start)
            self.emit(KIND_LITERAL, start, close + 2)
            return close + 2
        backslash = False
        if not prefix and c in "eEbBxXuU" and text[pos + 1:pos + 2] == "'":
            backslash = c in "eE" and self.dialect is Dialect.POSTGRESQL
            pos += 1
            c = text[pos]
        if c != "'":
            return None
        end = self.quoted(start, pos + 1, "'", backslash=backslash)
        if end < 0:
            return self.recover(start)
        self.emit(KIND_LITERAL, start, end)
        return end

    def recover(self, start: int) -> int:
        self.fail(start, "string literal")
        end = self.line_end(start)
        self.emit(KIND_LITERAL, start, end)
        return end


def tokenize(text: str, dialect=Dialect.ORACLE, errors: list | None = None) -> list[Token]:
    """Split ``text`` into tokens, skipping whitespace and comments.

    Unterminated quotes do not stop the lexer: the offending literal runs to
    the end of its line and lexing resumes on the next one. Pass a list as
    ``errors`` to collect the corresponding :class:`UnterminatedLiteral`
    instances.
    """
    return _Lexer(text, Dialect.parse(dialect), errors).run()
