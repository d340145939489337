"""PostgreSQL-dialect syntax checking.

The built-in validator covers a documented subset: statement segmentation
(including dollar-quoted bodies and psql meta-commands), leading statement
keywords, parenthesis balance, literal termination, the clause skeleton of
INSERT/UPDATE/DELETE and quoted function bodies. Everything else is only
checked for terminator and block balance. Oracle-only constructs that
PostgreSQL would reject or silently misread are reported as warnings.

Production setups can plug in any external checker that prints one
``severity<TAB>line<TAB>message`` line per finding.
"""

from __future__ import annotations

import bisect
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from typing import Sequence

from .chunker import Unit, split_units
from .errors import UnterminatedLiteral, ValidatorUnavailable
from .lexer import KIND_LITERAL, KIND_PUNCT, Dialect, Token, is_word, tokenize

ERROR = "error"
WARNING = "warning"

STATEMENT_KEYWORDS = frozenset("""
ABORT ALTER ANALYZE BEGIN CALL CHECKPOINT CLOSE CLUSTER COMMENT COMMIT COPY CREATE DEALLOCATE
DECLARE DELETE DISCARD DO DROP END EXECUTE EXPLAIN FETCH GRANT IMPORT INSERT LISTEN LOAD LOCK
MERGE MOVE NOTIFY PREPARE REASSIGN REFRESH REINDEX RELEASE RESET REVOKE ROLLBACK SAVEPOINT
SECURITY SELECT SET SHOW START TABLE TRUNCATE UNLISTEN UPDATE VACUUM VALUES WITH
""".split())

# Oracle spellings with no PostgreSQL meaning (or a different one)
ORACLE_ONLY = frozenset("""
VARCHAR2 NVARCHAR2 NUMBER PLS_INTEGER BINARY_INTEGER CLOB NCLOB SYSDATE SYSTIMESTAMP NVL NVL2
DECODE ROWNUM DUAL MINUS
""".split())

_PL_OBJECTS = {"FUNCTION", "PROCEDURE"}
_CREATE_NOISE = {"OR", "REPLACE"}


@dataclass(frozen=True)
class SyntaxFinding:
    file: str
    line: int
    severity: str
    message: str
    statement_index: int


@dataclass(frozen=True)
class Statement:
    index: int
    unit: Unit
    line: int


def statements(text: str, tokens: Sequence[Token] | None = None) -> list[Statement]:
    """Non-empty statement units of a PostgreSQL script, numbered from 0."""
    tokens = tokenize(text, Dialect.POSTGRESQL) if tokens is None else tokens
    out = []
    for unit in split_units(text, Dialect.POSTGRESQL, tokens):
        if unit.tokens:
            out.append(Statement(len(out), unit, unit.tokens[0].line))
    return out


def _upper(tok: Token) -> str:
    return tok.text.upper() if is_word(tok) else ""


def _check_statement(toks: Sequence[Token], bad_literals: dict[int, UnterminatedLiteral]):
    """First error of one statement as (line, message), or None."""
    for tok in toks:
        if tok.kind == KIND_LITERAL and tok.line in bad_literals:
            err = bad_literals[tok.line]
            return err.line, f"unterminated {err.kind}"
    for tok in toks:
        if tok.kind == KIND_PUNCT and tok.text == "/":
            return tok.line, "SQL*Plus '/' terminator is not valid PostgreSQL"
    first = toks[0]
    head = first.text.upper()
    if not (head.startswith("\\") or head == "(" or _upper(first) in STATEMENT_KEYWORDS):
        return first.line, f"unknown statement keyword {first.text!r}"
    depth = 0
    for tok in toks:
        if tok.kind == KIND_PUNCT and tok.text == "(":
            depth += 1
        elif tok.kind == KIND_PUNCT and tok.text == ")":
            depth -= 1
            if depth < 0:
                return tok.line, "unbalanced ')'"
    if depth:
        return toks[-1].line, "unclosed '('"
    words = [_upper(t) for t in toks]
    required = {"INSERT": "INTO", "UPDATE": "SET", "DELETE": "FROM"}.get(words[0])
    if required and required not in words:
        return first.line, f"{words[0]} without {required}"
    if words[0] == "CREATE":
        k = 1
        while k < len(words) and words[k] in _CREATE_NOISE:
            k += 1
        obj = words[k] if k < len(words) else ""
        if obj in ("PACKAGE", "TYPE") and "BODY" in words[k:k + 2]:
            return first.line, "Oracle package bodies are not PostgreSQL"
        if obj == "PACKAGE":
            return first.line, "Oracle packages are not PostgreSQL"
        if obj in _PL_OBJECTS:
            for j in range(k + 1, len(toks)):
                if words[j] == "IS":
                    return toks[j].line, f"{obj.lower()} body must follow AS as a quoted string"
                if words[j] == "AS":
                    nxt = toks[j + 1] if j + 1 < len(toks) else None
                    if nxt is None or not (nxt.kind == KIND_LITERAL or nxt.text.startswith("$")):
                        return toks[j].line, f"{obj.lower()} body must be a quoted string"
                    break
    return None


def builtin_validate(text: str, file: str = "") -> list[SyntaxFinding]:
    errors: list = []
    tokens = tokenize(text, Dialect.POSTGRESQL, errors)
    bad = {err.line: err for err in errors if isinstance(err, UnterminatedLiteral)}
    findings: list[SyntaxFinding] = []
    stmts = statements(text, tokens)
    for st in stmts:
        toks = st.unit.tokens
        problem = _check_statement(toks, bad)
        if problem is not None:
            findings.append(SyntaxFinding(file, problem[0], ERROR, problem[1], st.index))
        seen = set()
        for tok in toks:
            w = _upper(tok)
            if w in ORACLE_ONLY and w not in seen:
                seen.add(w)
                findings.append(SyntaxFinding(file, tok.line, WARNING, f"Oracle-specific {tok.text}", st.index))
        if st is stmts[-1] and not st.unit.terminated and not st.unit.line_command:
            findings.append(SyntaxFinding(file, toks[-1].line, WARNING, "missing terminating ';'", st.index))
    return findings


class ExternalValidator:
    """Runs ``command <file>`` and parses ``severity<TAB>line<TAB>message`` lines.

    Findings are attributed to the statement whose first line is the
    closest one at or before the reported line.
    """

    def __init__(self, command):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise ValueError("empty validator command")

    def __call__(self, text: str, file: str = "") -> list[SyntaxFinding]:
        stmts = statements(text)
        starts = [s.line for s in stmts]
        nlines = max(1, len(text.splitlines()))
        with tempfile.NamedTemporaryFile("w", suffix=".sql", delete=False, encoding="utf-8") as fh:
            fh.write(text)
            tmp = fh.name
        try:
            proc = subprocess.run([*self.command, tmp], capture_output=True, text=True)
        except OSError as exc:
            raise ValidatorUnavailable(f"{self.command[0]}: {exc}") from exc
        finally:
            os.unlink(tmp)
        findings = []
        for raw in proc.stdout.splitlines():
            parts = raw.split("\t", 2)
            if len(parts) != 3:
                continue
            sev, line, msg = parts
            sev = sev.strip().lower()
            if sev not in (ERROR, WARNING):
                continue
            try:
                ln = min(max(1, int(line)), nlines)
            except ValueError:
                continue
            idx = max(0, bisect.bisect_right(starts, ln) - 1)
            findings.append(SyntaxFinding(file, ln, sev, msg.strip(), idx))
        return findings


def resolve_validator(ref=None):
    """``None``/"builtin" gives the built-in checker; anything else is a command line."""
    if ref is None or ref == "builtin":
        return builtin_validate
    if callable(ref):
        return ref
    return ExternalValidator(ref)


def validate_syntax(script_text: str, validator=None, file: str = "") -> list[SyntaxFinding]:
    return resolve_validator(validator)(script_text, file)


@dataclass(frozen=True)
class SerMetrics:
    ser: float
    sepl: float
    warnings_norm: float
    valid: bool
    statements: int
    errors: int
    warnings: int
    error_statements: int
    lines: int


def ser_metrics(findings: Sequence[SyntaxFinding], script_text: str) -> SerMetrics:
    """Statement-normalised error/warning rates plus errors per line."""
    n_stmt = len(statements(script_text))
    n_lines = len(script_text.splitlines())
    errs = [f for f in findings if f.severity == ERROR]
    warns = [f for f in findings if f.severity == WARNING]
    err_stmts = len({f.statement_index for f in errs})
    warn_stmts = len({f.statement_index for f in warns})
    ser = min(1.0, err_stmts / n_stmt) if n_stmt else 0.0
    wn = min(1.0, warn_stmts / n_stmt) if n_stmt else 0.0
    sepl = len(errs) / n_lines if n_lines else 0.0
    return SerMetrics(ser, sepl, wn, not errs, n_stmt, len(errs), len(warns), err_stmts, n_lines)
