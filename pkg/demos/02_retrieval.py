"""
Knowledge-base retrieval
========================

Build the four stores from a handful of entries, ask for context for a
chunk of Oracle code, and score retrieval against a tiny gold set.
"""

from oramig.kb import (GoldRetrievalCase, KbEntry, StoreKind, build_index, evaluate_retrieval,
                       retrieve_strategy_a, retrieve_strategy_b)

ORACLE_NOTES = [
    "NVL(expr, default) returns default when expr is null.",
    "SYSDATE returns the current date and time of the database server.",
    "ROWNUM numbers the rows returned by a query, starting at 1.",
]
PG_DOCS = [
    "COALESCE returns the first of its arguments that is not null.",
    "CURRENT_TIMESTAMP returns the start time of the current transaction.",
    "LIMIT restricts the number of rows returned by a query.",
]
SME_RULES = [
    "Rewrite NVL(a, b) as COALESCE(a, b).",
    "Replace WHERE ROWNUM <= n with LIMIT n.",
]
PAIRS = [
    ("SELECT NVL(name, 'x') FROM emp;", "SELECT COALESCE(name, 'x') FROM emp;"),
    ("SELECT * FROM emp WHERE ROWNUM <= 5;", "SELECT * FROM emp LIMIT 5;"),
    ("SELECT SYSDATE FROM dual;", "SELECT CURRENT_TIMESTAMP;"),
]

indexes = {
    StoreKind.ORACLE_CONTEXT: build_index([KbEntry.create("oracle_context", t) for t in ORACLE_NOTES]),
    StoreKind.PG_DOCS: build_index([KbEntry.create("pg_docs", t) for t in PG_DOCS]),
    StoreKind.SME_RULES: build_index([KbEntry.create("sme_rules", t) for t in SME_RULES]),
    StoreKind.PAIR_EXAMPLES: build_index([KbEntry.create("pair_examples", o, p) for o, p in PAIRS]),
}

chunk = "SELECT NVL(status, 'open') FROM orders WHERE ROWNUM <= 10;"

# Strategy A: three independent lookups, one per documentation store.
ctx = retrieve_strategy_a(indexes, chunk, k=2, min_similarity=0.05)
for store in ("oracle_context", "pg_docs", "sme_rules"):
    for r in getattr(ctx, store):
        print(f"A {store:<15} {r.similarity:.3f}  {r.entry.text}")

# Strategy B: nearest translated pairs, used as few-shot examples.
for ex in retrieve_strategy_b(indexes[StoreKind.PAIR_EXAMPLES], chunk, k=2):
    print(f"B {ex.similarity:.3f}  {ex.oracle}  ->  {ex.postgres}")

# A two-case gold set: one query that should hit, one that should come back empty.
pairs = indexes[StoreKind.PAIR_EXAMPLES]
target = pairs.entries[0].id
gold = [
    GoldRetrievalCase("SELECT NVL(name, 'x') FROM emp;", "ExactMatch", (target,)),
    GoldRetrievalCase("qqqq zzzz wwww", "NoMatch", must_abstain=True),
]
card = evaluate_retrieval(pairs, gold, k=1, min_similarity=0.25)
print(f"hit@1={card.hit_at_k} mrr={card.mrr} abstention={card.abstention_correctness} stable={card.ranking_stable}")
