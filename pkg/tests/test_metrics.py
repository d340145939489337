import random

import pytest
from hypothesis import given, settings, strategies as st

from oramig.metrics import (bleu, chrf, collapse_ws, corpus_bleu, corpus_chrf, corpus_recall, metric_tokens,
                            token_recall)

import oracles

VOCAB = ["SELECT", "a", "b", "FROM", "t", "WHERE", "=", "1", ";", "(", ")", "JOIN", "u"]




def test_tokens_drop_comments_and_fold_keywords():
    assert metric_tokens("select a -- x\nFROM t;") == ["SELECT", "a", "FROM", "t", ";"]


def test_recall_hand_values():
    assert token_recall("SELECT a", "SELECT a FROM t") == pytest.approx(0.5)
    assert token_recall(["a", "a", "b"], ["a", "b", "b"]) == pytest.approx(2 / 3)
    assert token_recall("", "") == 1.0
    assert token_recall("SELECT", "") == 0.0
    assert token_recall("", "SELECT") == 0.0


def test_bleu_edges():
    assert bleu("SELECT a FROM t WHERE b = 1;", "SELECT a FROM t WHERE b = 1;") == pytest.approx(1.0)
    assert bleu("x y z", "SELECT a FROM t") == 0.0
    assert bleu("", "SELECT a") == 0.0
    assert bleu("SELECT", "SELECT") == pytest.approx(1.0)


def test_chrf_edges():
    assert chrf("abc", "abc") == pytest.approx(1.0)
    assert chrf("", "") == 1.0
    assert chrf("xyz", "abc") == 0.0
    assert chrf("a  b\n", "a b") == pytest.approx(1.0)
    assert collapse_ws(" a \n b ") == "a b"


def test_chrf_hand_value():
    # "ab" vs "abc": order1 p=1 r=2/3; order2 p=1 r=1/2; order3 p=0 r=0
    p, r = (1 + 1 + 0) / 3, (2 / 3 + 1 / 2 + 0) / 3
    assert chrf("ab", "abc") == pytest.approx(5 * p * r / (4 * p + r))


token_lists = st.lists(st.sampled_from(VOCAB), max_size=25)


@settings(max_examples=300, deadline=None)
@given(token_lists, token_lists)
def test_bleu_matches_naive(cand, ref):
    assert bleu(cand, ref) == pytest.approx(oracles.bleu(cand, ref), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="ab c\n", max_size=30), st.text(alphabet="ab c\n", max_size=30))
def test_chrf_matches_naive(cand, ref):
    assert chrf(cand, ref) == pytest.approx(oracles.chrf(cand, ref), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(token_lists, token_lists)
def test_scores_are_bounded(cand, ref):
    for s in (token_recall(cand, ref), bleu(cand, ref)):
        assert 0.0 <= s <= 1.0
    text_c, text_r = " ".join(cand), " ".join(ref)
    assert 0.0 <= chrf(text_c, text_r) <= 1.0


def test_corpus_scores_pool_counts():
    rng = random.Random(2)
    pairs = [([rng.choice(VOCAB) for _ in range(8)], [rng.choice(VOCAB) for _ in range(9)]) for _ in range(10)]
    overlap = sum(oracles.clipped(c, r) for c, r in pairs)
    assert corpus_recall(pairs) == pytest.approx(overlap / sum(len(r) for _, r in pairs))
    same = [(r, r) for _, r in pairs]
    assert corpus_bleu(same) == pytest.approx(1.0)
    assert corpus_chrf([(" ".join(r), " ".join(r)) for _, r in pairs]) == pytest.approx(1.0)
