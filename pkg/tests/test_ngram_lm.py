import math
import random

import pytest

from pbsmt.bpe import BOS, EOS, UNK
from pbsmt.ngram_lm import (
    conditional_logprob,
    load_arpa,
    perplexity,
    save_arpa,
    sentence_logprob,
    train_lm,
)
from oracles import ngram_backoff_logprob


def toy_corpus():
    return [
        "the cat sat".split(),
        "the cat ran".split(),
        "a dog sat".split(),
        "the dog sat here".split(),
        "a cat".split(),
    ]


def logsum_over_vocab(lm, context):
    return sum(10.0 ** conditional_logprob(lm, context, w) for w in lm.vocab)


def test_witten_bell_hand_computation():
    # one sentence "a b", order 2: padded <s> a b </s>
    # unigrams: 4 tokens, 4 types -> p(b) = 1/8
    # context (a,): one continuation type, one token ->
    #   p(b|a) = (1 + 1*p(b)) / (1 + 1) = 1/2 + p(b)/2 = 0.5625
    lm = train_lm([["a", "b"]], order=2)
    assert 10.0 ** conditional_logprob(lm, (), "b") == pytest.approx(1 / 8)
    assert 10.0 ** conditional_logprob(lm, ("a",), "b") == pytest.approx(0.5625)


def test_normalization_random_contexts():
    lm = train_lm(toy_corpus(), order=3)
    rng = random.Random(1)
    words = sorted(lm.vocab) + ["zzz-oov"]
    for _ in range(100):
        context = tuple(rng.choice(words) for _ in range(rng.randint(0, 2)))
        assert logsum_over_vocab(lm, context) == pytest.approx(1.0, abs=1e-6)


def test_unseen_context_backs_off():
    lm = train_lm(toy_corpus(), order=3)
    # ("ran", "a") never occurs as a bigram context; ("ran",) has no
    # continuations either, so both backoff weights are 1
    for w in lm.vocab:
        direct = conditional_logprob(lm, ("ran", "a"), w)
        assert direct == pytest.approx(
            lm.backoffs.get(("ran", "a"), 0.0) + conditional_logprob(lm, ("a",), w)
        )


def test_matches_recursive_oracle():
    lm = train_lm(toy_corpus(), order=3)
    rng = random.Random(2)
    words = sorted(lm.vocab) + ["never-seen"]
    for _ in range(300):
        ctx = tuple(rng.choice(words) for _ in range(rng.randint(0, 2)))
        w = rng.choice(words)
        got = conditional_logprob(lm, ctx, w)
        want = ngram_backoff_logprob(lm.probs, lm.backoffs, lm.order,
                                     lm.vocab, ctx, w)
        assert got == pytest.approx(want, abs=1e-12)


def test_stored_trigram_is_returned_exactly():
    lm = train_lm(toy_corpus(), order=3)
    gram = (BOS, "the", "cat")
    assert gram in lm.probs
    assert conditional_logprob(lm, gram[:-1], gram[-1]) == lm.probs[gram]


def test_all_logprobs_finite():
    lm = train_lm(toy_corpus(), order=3)
    rng = random.Random(3)
    words = sorted(lm.vocab) + ["x-unseen", "y-unseen"]
    for _ in range(200):
        ctx = tuple(rng.choice(words) for _ in range(rng.randint(0, 4)))
        lp = conditional_logprob(lm, ctx, rng.choice(words))
        assert math.isfinite(lp) and lp <= 0.0


def test_empty_sentence_scores_eos_only():
    lm = train_lm(toy_corpus(), order=3)
    expected = conditional_logprob(lm, (BOS, BOS), EOS)
    assert sentence_logprob(lm, []) == pytest.approx(expected)


def test_oov_tokens_score_identically():
    lm = train_lm(toy_corpus(), order=3)
    assert sentence_logprob(lm, ["qqqq"]) == sentence_logprob(lm, ["wwww"])


def test_sentence_logprob_additivity():
    lm = train_lm(toy_corpus(), order=3)
    sent = ["the", "cat", "sat"]
    padded = (BOS, BOS, *sent, EOS)
    total = 0.0
    for i in range(2, len(padded)):
        total += conditional_logprob(lm, padded[i - 2 : i], padded[i])
    assert sentence_logprob(lm, sent) == pytest.approx(total)


def test_unk_gets_escape_mass():
    lm = train_lm([["a", "b"]], order=2)
    # 4 types out of 8 total mass units
    assert 10.0 ** conditional_logprob(lm, (), UNK) == pytest.approx(0.5)


def test_order1_model():
    lm = train_lm(toy_corpus(), order=1)
    assert logsum_over_vocab(lm, ()) == pytest.approx(1.0, abs=1e-6)
    assert sentence_logprob(lm, ["the", "cat"]) < 0


def test_training_perplexity_improves_with_order():
    corpus = toy_corpus()
    ppl1 = perplexity(train_lm(corpus, order=1), corpus)
    ppl3 = perplexity(train_lm(corpus, order=3), corpus)
    assert ppl3 <= ppl1


def test_arpa_round_trip(tmp_path):
    corpus = toy_corpus()
    lm = train_lm(corpus, order=3)
    path = tmp_path / "model.arpa"
    save_arpa(lm, path)
    loaded = load_arpa(path)
    assert loaded.order == 3
    rng = random.Random(4)
    words = sorted(lm.vocab)
    for _ in range(1000):
        sent = [rng.choice(words) for _ in range(rng.randint(0, 6))]
        assert abs(sentence_logprob(lm, sent)
                   - sentence_logprob(loaded, sent)) < 1e-9


def test_arpa_is_deterministic(tmp_path):
    p1, p2 = tmp_path / "a.arpa", tmp_path / "b.arpa"
    save_arpa(train_lm(toy_corpus(), order=3), p1)
    save_arpa(train_lm(toy_corpus(), order=3), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        train_lm([], order=3)


def test_bad_order_rejected():
    with pytest.raises(ValueError):
        train_lm(toy_corpus(), order=0)
