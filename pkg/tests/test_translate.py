import json
import random

import pytest

from oramig.chunker import ChunkConfig
from oramig.errors import BackendFailure, StoreMissing, UnboundPlaceholder
from oramig.kb import KbEntry, build_index
from oramig.taxonomy import SourceScript
from oramig.translate import (NO_CONTEXT, EchoBackend, HttpLlmBackend, MigrationConfig, Pipeline,
                              RuleBaselineBackend, build_prompt, history_window, load_template, placeholders,
                              run_conversion, run_history, run_pipeline, run_rag, strip_code_fences, write_run)

import synth
from httpfake import FakeServer

SMALL = MigrationConfig(ChunkConfig(60), backoff_base=0)


def scripts(n=6, seed=0):
    return [SourceScript(f"s{i}.sql", "oracle", t) for i, t in enumerate(synth.corpus(seed, n))]


class Recorder:
    """Echo backend that records prompts and can fail on request."""

    kind = "recorder"

    def __init__(self, fail=lambda prompt, chunk, n: False):
        self.prompts = []
        self.fail = fail
        self.calls = {}

    def translate(self, prompt, chunk):
        key = (chunk.script_path, chunk.index)
        self.calls[key] = self.calls.get(key, 0) + 1
        self.prompts.append((key, prompt))
        if self.fail(prompt, chunk, self.calls[key]):
            raise BackendFailure("injected")
        return chunk.text

    def config(self):
        return {"kind": self.kind}


def test_templates_have_expected_placeholders():
    assert placeholders(load_template("Direct")) == ["CURRENT_CHUNK"]
    assert placeholders(load_template("History")) == ["HISTORY", "CURRENT_CHUNK"]
    assert placeholders(load_template("StrategyB")) == ["RETRIEVED_EXAMPLES", "CURRENT_CHUNK"]
    assert set(placeholders(load_template("StrategyA"))) == {
        "ORACLE_CONTEXT", "POSTGRES_DOCS", "CONVERTING_RULES", "CURRENT_CHUNK"}


def test_build_prompt_is_single_pass():
    p = build_prompt("History", {"HISTORY": "{CURRENT_CHUNK}", "CURRENT_CHUNK": "SELECT 1;"})
    assert "{CURRENT_CHUNK}" in p.filled_text and p.filled_text.count("SELECT 1;") == 1
    assert p.placeholders_bound == {"HISTORY": "{CURRENT_CHUNK}", "CURRENT_CHUNK": "SELECT 1;"}


def test_build_prompt_binding_errors():
    with pytest.raises(UnboundPlaceholder):
        build_prompt("History", {"CURRENT_CHUNK": "x"})
    with pytest.raises(ValueError):
        build_prompt("Direct", {"CURRENT_CHUNK": "x", "EXTRA": "y"})


def test_history_window_drops_oldest_bytes():
    assert history_window(["aaaa", "bbbb", "cccc"], 100) == "ccccbbbbaaaa"
    assert history_window(["aaaa", "bbbb", "cccc"], 6) == "ccccbb"
    assert history_window(["aaaa", "bbbb", "cccc"], 4) == "cccc"
    assert history_window([], 10) == ""


def test_history_pipeline_uses_previous_outputs():
    text = "SELECT 1 FROM dual;\nSELECT 2 FROM dual;\nSELECT 3 FROM dual;\n"
    rec = Recorder()
    run = run_history([SourceScript("h.sql", "oracle", text)], rec, MigrationConfig(ChunkConfig(20)))
    ids = [p.template_id for _, p in rec.prompts]
    assert ids == ["Direct", "History", "History"]
    last = rec.prompts[-1][1].placeholders_bound["HISTORY"]
    assert last == "SELECT 2 FROM dual;\nSELECT 1 FROM dual;\n"
    assert run.results[0].output_text == text


@pytest.mark.parametrize("pipeline", list(Pipeline))
def test_echo_roundtrip_every_pipeline(pipeline):
    kb = {s: build_index([KbEntry.create(s, "SELECT a FROM t;", "SELECT a FROM t;" if s == "pair_examples" else None)])
          for s in ("oracle_context", "pg_docs", "sme_rules", "pair_examples")}
    docs = scripts(8)
    run = run_pipeline(docs, EchoBackend(), pipeline, SMALL, kb=kb)
    assert [r.output_text for r in run.results] == [s.text for s in docs]


def test_failures_are_isolated_and_retried():
    docs = scripts(5)
    sleeps = []
    # s2 always fails; s3 fails once then succeeds
    rec = Recorder(lambda p, c, n: c.script_path == "s2.sql" or (c.script_path == "s3.sql" and c.index == 0 and n == 1))
    run = run_conversion(docs, rec, MigrationConfig(ChunkConfig(60), max_attempts=3, backoff_base=0.5),
                         sleep=sleeps.append)
    status = {r.path: r.status for r in run.results}
    assert status["s2.sql"] == "not_converted" and list(status.values()).count("converted") == 4
    assert run.result("s3.sql").output_text == docs[3].text
    assert run.result("s3.sql").chunks[0].attempt_count == 2
    assert rec.calls[("s2.sql", 0)] == 3
    assert sleeps[:2] == [0.5, 1.0]
    assert run.failures == [{"path": "s2.sql", "cause": run.result("s2.sql").error}]


def test_parallel_matches_serial():
    docs = scripts(10)
    serial = run_conversion(docs, RuleBaselineBackend(), SMALL)
    par = run_conversion(docs, RuleBaselineBackend(), MigrationConfig(ChunkConfig(60), jobs=4, backoff_base=0))
    assert serial.run_id != par.run_id  # jobs is part of the config snapshot
    assert [r.output_text for r in serial.results] == [r.output_text for r in par.results]


def test_rag_requires_stores():
    with pytest.raises(StoreMissing):
        run_rag(scripts(1), EchoBackend(), {}, "A")
    with pytest.raises(StoreMissing):
        run_rag(scripts(1), EchoBackend(), None, "B")


def test_rag_b_binds_top_k_pairs_with_provenance():
    pairs = [KbEntry(f"p{i}", "pair_examples", f"SELECT c{i} FROM t{i} WHERE x = {i};", f"pg {i}")
             for i in range(5)]
    ix = build_index(pairs)
    text = "SELECT c3 FROM t3 WHERE x = 3;\n"
    rec = Recorder()
    run_rag([SourceScript("q.sql", "oracle", text)], rec, {"pair_examples": ix}, "B", k=2)
    prompt = rec.prompts[0][1]
    expected = [r.entry.id for r in ix.query(text, 2, 0.25)]
    assert expected[0] == "p3"
    assert "Example 1 (similarity 1.000):\nOracle:\nSELECT c3 FROM t3 WHERE x = 3;\nPostgreSQL:\npg 3" \
        in prompt.filled_text
    assert prompt.filled_text.count("Example ") == len(expected)


def test_rag_a_marks_empty_retrieval():
    kb = {s: build_index([KbEntry(f"{s}1", s, "qqqq zzzz")]) for s in ("oracle_context", "pg_docs", "sme_rules")}
    rec = Recorder()
    run_rag([SourceScript("q.sql", "oracle", "SELECT 1 FROM dual;\n")], rec, kb, "A")
    bound = rec.prompts[0][1].placeholders_bound
    assert bound["POSTGRES_DOCS"] == NO_CONTEXT and bound["CURRENT_CHUNK"] == "SELECT 1 FROM dual;\n"


def test_rule_backend_skips_literals():
    rec = RuleBaselineBackend()
    run = run_conversion([SourceScript("r.sql", "oracle", "SELECT NVL(a, 'NVL') FROM t; -- NUMBER\n")], rec)
    assert run.results[0].output_text == "SELECT COALESCE(a, 'NVL') FROM t; -- NUMBER\n"


def test_postgres_input_is_rejected():
    with pytest.raises(ValueError):
        run_conversion([SourceScript("p.sql", "postgresql", "SELECT 1;")], EchoBackend())


def test_write_run_is_deterministic(tmp_path):
    docs = scripts(6, seed=4)
    a = write_run(run_conversion(docs, EchoBackend(), SMALL), tmp_path / "a")
    b = write_run(run_conversion(docs, EchoBackend(), SMALL), tmp_path / "b")
    assert (a / "prompts.jsonl").read_bytes() == (b / "prompts.jsonl").read_bytes()
    for d in docs:
        assert (a / "outputs" / d.path).read_text() == d.text
    ma, mb = (json.loads((x / "manifest.json").read_text()) for x in (a, b))
    assert ma["run_id"] == mb["run_id"] and ma["config"]["pipeline"] == "conversion"
    assert len(ma["extra"]["files"]) == 6


def test_strip_code_fences():
    assert strip_code_fences("```sql\nSELECT 1;\n```") == "SELECT 1;"
    assert strip_code_fences("SELECT 1;") == "SELECT 1;"


def test_http_llm_wire_contract():
    def handler(body, headers):
        assert headers.get("authorization") == "Bearer k1"
        return 200, {"text": "```sql\n" + body["prompt"][-9:] + "\n```"}

    with FakeServer(handler) as srv:
        be = HttpLlmBackend(srv.url, model="m", api_key="k1", max_tokens=99)
        run = run_conversion([SourceScript("w.sql", "oracle", "SELECT 1;")], be, MigrationConfig(backoff_base=0))
        body = srv.requests[0][0]
        assert set(body) == {"model", "prompt", "max_tokens", "temperature"}
        assert body["model"] == "m" and body["max_tokens"] == 99 and body["temperature"] == 0.0
        assert "SELECT 1;" in body["prompt"]
        assert run.results[0].status == "converted"


def test_http_llm_errors_become_not_converted(monkeypatch):
    monkeypatch.delenv("MIGRATE_LLM_URL", raising=False)
    with pytest.raises(ValueError):
        HttpLlmBackend()
    with FakeServer(lambda b, h: (503, {"error": "busy"})) as srv:
        be = HttpLlmBackend(srv.url)
        run = run_conversion([SourceScript("w.sql", "oracle", "SELECT 1;")], be,
                             MigrationConfig(max_attempts=2, backoff_base=0))
        assert run.results[0].status == "not_converted" and len(srv.requests) == 2
    with FakeServer(lambda b, h: (200, {"nope": 1})) as srv:
        with pytest.raises(BackendFailure):
            HttpLlmBackend(srv.url).translate(build_prompt("Direct", {"CURRENT_CHUNK": "x"}), None)


def test_random_failure_injection_isolates_files():
    rng = random.Random(5)
    docs = scripts(30, seed=9)
    bad = {s.path for s in rng.sample(docs, 7)}
    run = run_conversion(docs, Recorder(lambda p, c, n: c.script_path in bad), SMALL)
    assert {r.path for r in run.results if r.status == "not_converted"} == bad
    for s in docs:
        if s.path not in bad:
            assert run.result(s.path).output_text == s.text
