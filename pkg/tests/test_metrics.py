import itertools
import math
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from miniformer import metrics as Me

FIXTURES = Path(__file__).parent / "fixtures"


def toks(s):
    return s.split()


def brute_force_lcs(a, b):
    """Longest subsequence of the shorter sequence that is also a subsequence of the longer."""
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)

    def is_subseq(sub, seq):
        it = iter(seq)
        return all(x in it for x in sub)

    for k in range(len(short), 0, -1):
        if any(is_subseq(c, long_) for c in itertools.combinations(short, k)):
            return k
    return 0


def test_ngram_counts():
    assert Me.ngram_counts(["a", "b", "a"], 1) == {("a",): 2, ("b",): 1}
    assert Me.ngram_counts(["a", "b", "a"], 2) == {("a", "b"): 1, ("b", "a"): 1}
    assert Me.ngram_counts(["a", "b", "a"], 4) == {}
    with pytest.raises(ValueError):
        Me.ngram_counts(["a"], 0)


def test_modified_precision_cases():
    ref = toks("the cat sat on the mat")
    assert Me.modified_precision([ref], [ref], 2) == (5, 5)
    assert Me.modified_precision([toks("the the the")], [toks("the cat")], 1) == (1, 3)
    assert Me.modified_precision([toks("x y")], [toks("a b")], 1) == (0, 2)
    with pytest.raises(ValueError):
        Me.modified_precision([ref], [], 1)


def test_brevity_penalty():
    assert Me.brevity_penalty(4, 4) == 1.0
    assert Me.brevity_penalty(2, 4) == pytest.approx(math.exp(-1), abs=1e-15)
    assert Me.brevity_penalty(0, 4) == 0.0
    assert Me.brevity_penalty(5, 4) == 1.0


def test_bleu_n_cases():
    ref = [toks("the cat sat on the mat"), toks("a b c d e")]
    for n in range(1, 5):
        assert Me.bleu_n(ref, ref, n) == 1.0
        assert Me.bleu_n(ref, ref, n, cumulative=True) == pytest.approx(1.0, abs=1e-15)
    short = Me.bleu_n([toks("the cat sat")], [toks("the cat sat down")], 1)
    assert short == pytest.approx(math.exp(1 - 4 / 3), abs=1e-15)
    assert round(short, 4) == 0.7165
    assert Me.bleu_n([toks("a b c d")], [toks("a c b d")], 3) == 0.0


def test_lcs_cases():
    assert Me.lcs_length(toks("a b c"), toks("a b c")) == 3
    assert Me.lcs_length(toks("a b"), toks("c d")) == 0
    assert Me.lcs_length(toks("a b c d"), toks("a c b d")) == 3
    assert Me.lcs_length([], toks("a")) == 0


def test_lcs_against_brute_force():
    rnd = random.Random(7)
    for _ in range(100):
        a = [rnd.choice("abcd") for _ in range(rnd.randint(0, 8))]
        b = [rnd.choice("abcd") for _ in range(rnd.randint(0, 8))]
        assert Me.lcs_length(a, b) == brute_force_lcs(a, b)


def test_rouge_cases():
    same = [toks("a b c d")]
    for v in (1, 2, "L"):
        assert Me.rouge(same, same, v) == (1.0, 1.0, 1.0)
    p, r, f = Me.rouge([toks("a b")], [toks("a b c")], 1)
    assert (p, r) == (1.0, 2 / 3) and f == pytest.approx(0.8, abs=1e-15)
    assert Me.rouge([toks("x")], [toks("y")], 1) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        Me.rouge([], [], 1)


def test_fixture_report_matches_hand_counts():
    hyps = [toks(l) for l in (FIXTURES / "score_hyp.txt").read_text().splitlines()]
    refs = [toks(l) for l in (FIXTURES / "score_ref.txt").read_text().splitlines()]
    expected = dict(
        line.split("=") for line in (FIXTURES / "score_expected.txt").read_text().splitlines()
        if line and not line.startswith("#")
    )
    report = Me.evaluate(hyps, refs)
    for key, value in report.items():
        assert f"{value:.4f}" == expected[key], key
    cum = Me.evaluate(hyps, refs, cumulative=True)
    assert cum.bleu[3] == pytest.approx((10 / 12 * 5 / 9 * 3 / 6 * 1 / 3) ** 0.25, abs=1e-12)
    assert cum.bleu[1] == pytest.approx((10 / 12 * 5 / 9) ** 0.5, abs=1e-12)


def test_report_formats():
    r = Me.evaluate([toks("a b c d")], [toks("a b c d")])
    kv = dict(l.split("=") for l in r.to_kv().splitlines())
    assert len(kv) == 13 and set(kv.values()) == {"1.0000"}
    table = r.to_table("Mini-Former")
    assert "BLEU-4" in table and "ROUGE-L" in table and "F:1.0000" in table


def test_sentence_scores_eps_guard():
    s = Me.sentence_scores([], toks("a b"))
    assert s.bleu == (0.0, 0.0, 0.0, 0.0) and s.rouge1 == (0.0, 0.0, 0.0)
    same = Me.sentence_scores(toks("a b c d"), toks("a b c d"))
    assert all(round(v, 4) == 1.0 for _, v in same.items())


sentences = st.lists(st.sampled_from("abcde"), min_size=0, max_size=8)
corpora = st.integers(1, 4).flatmap(lambda n: st.tuples(st.lists(sentences, min_size=n, max_size=n),
                                                        st.lists(sentences, min_size=n, max_size=n)))


@settings(max_examples=150, deadline=None)
@given(corpora)
def test_metric_properties(corpus):
    hyps, refs = corpus
    if any(refs):
        report = Me.evaluate(hyps, refs)
        assert all(0.0 <= v <= 1.0 for _, v in report.items())
        assert report == Me.evaluate(hyps, refs)
    for v in (1, 2, "L"):
        p, r, f = Me.rouge(hyps, refs, v)
        p2, r2, _ = Me.rouge(refs, hyps, v)
        assert p == r2 and r == p2
        assert f == (2 * p * r / (p + r) if p + r else 0.0)
    for h, r in zip(hyps, refs):
        assert Me.lcs_length(h, r) <= min(len(h), len(r))


@settings(max_examples=100, deadline=None)
@given(corpora, st.lists(st.sampled_from("xyz"), min_size=1, max_size=4), st.integers(1, 4))
def test_appending_noise_never_adds_matches(corpus, noise, n):
    hyps, refs = corpus  # references only use "abcde"
    before, total = Me.modified_precision(hyps, refs, n)
    after, total_after = Me.modified_precision([h + noise for h in hyps], refs, n)
    assert after == before and total_after >= total
