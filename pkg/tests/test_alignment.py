import random
from collections import defaultdict

import pytest

from pbsmt.alignment import (
    Alignment,
    NULL_TOKEN,
    load_alignments,
    load_table,
    save_alignments,
    save_table,
    symmetrize,
    train_model1,
    viterbi_align,
    TranslationTable,
)
from oracles import model1_em

CLASSIC = [(["the", "house"], ["das", "haus"]), (["the"], ["das"])]


def random_corpus(rng, n_pairs=30):
    src_vocab = [f"s{i}" for i in range(8)]
    tgt_vocab = [f"t{i}" for i in range(8)]
    return [
        (
            [rng.choice(src_vocab) for _ in range(rng.randint(1, 5))],
            [rng.choice(tgt_vocab) for _ in range(rng.randint(1, 5))],
        )
        for _ in range(n_pairs)
    ]


def test_em_matches_naive_oracle():
    table = train_model1(CLASSIC, iterations=20)
    oracle, oracle_lls = model1_em(CLASSIC, 20)
    assert set(table.probs) == set(oracle)
    for k, v in oracle.items():
        assert table.probs[k] == pytest.approx(v, abs=1e-12)
    for a, b in zip(table.log_likelihoods, oracle_lls):
        assert a == pytest.approx(b, abs=1e-9)


def test_em_matches_oracle_on_random_corpus():
    rng = random.Random(9)
    corpus = random_corpus(rng)
    table = train_model1(corpus, iterations=5)
    oracle, _ = model1_em(corpus, 5)
    assert set(table.probs) == set(oracle)
    for k, v in oracle.items():
        assert table.probs[k] == pytest.approx(v, abs=1e-10)


def test_sparse_path_matches_dense():
    rng = random.Random(10)
    corpus = random_corpus(rng)
    dense = train_model1(corpus, iterations=6)
    sparse = train_model1(corpus, iterations=6, dense_cell_limit=0)
    assert set(dense.probs) == set(sparse.probs)
    for k in dense.probs:
        assert dense.probs[k] == pytest.approx(sparse.probs[k], abs=1e-10)


def test_single_pair_one_iteration():
    table = train_model1([(["a"], ["x"])], iterations=1)
    assert table.prob("a", "x") == pytest.approx(1.0)


def test_zero_iterations_returns_uniform_init():
    table = train_model1(CLASSIC, iterations=0)
    # "the" co-occurs with das and haus
    assert table.prob("the", "das") == pytest.approx(0.5)
    assert table.prob("the", "haus") == pytest.approx(0.5)


def test_rows_normalized_each_iteration():
    rng = random.Random(12)
    corpus = random_corpus(rng)
    for iters in (1, 3, 7):
        table = train_model1(corpus, iterations=iters)
        rows = defaultdict(float)
        for (s, _t), p in table.probs.items():
            rows[s] += p
            assert 0.0 < p <= 1.0 + 1e-12
        for s, total in rows.items():
            assert total == pytest.approx(1.0, abs=1e-6)


def test_loglikelihood_monotone():
    rng = random.Random(13)
    corpus = random_corpus(rng, n_pairs=40)
    table = train_model1(corpus, iterations=12)
    lls = table.log_likelihoods
    assert len(lls) == 12
    for a, b in zip(lls, lls[1:]):
        assert b >= a - 1e-9


def test_determinism_bit_identical():
    rng = random.Random(14)
    corpus = random_corpus(rng)
    t1 = train_model1(corpus, iterations=8)
    t2 = train_model1(corpus, iterations=8)
    assert t1.probs == t2.probs
    assert t1.log_likelihoods == t2.log_likelihoods


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        train_model1([], iterations=1)
    with pytest.raises(ValueError):
        train_model1([(["a"], [])], iterations=1)


def test_viterbi_argmax():
    table = TranslationTable(probs={("a", "x"): 0.9, ("b", "x"): 0.1})
    al = viterbi_align(table, ["a", "b"], ["x"])
    assert al.links == frozenset({(0, 0)})


def test_viterbi_null_wins():
    table = TranslationTable(probs={(NULL_TOKEN, "x"): 0.9, ("a", "x"): 0.1})
    al = viterbi_align(table, ["a"], ["x"])
    assert al.links == frozenset()


def test_viterbi_tie_goes_to_lowest_index():
    table = TranslationTable(probs={("a", "x"): 0.5, ("b", "x"): 0.5})
    al = viterbi_align(table, ["a", "b"], ["x"])
    assert al.links == frozenset({(0, 0)})


def test_symmetrize_idempotent_on_agreement():
    a = Alignment(frozenset({(0, 0), (1, 1)}), 2, 2)
    assert symmetrize(a, a).links == a.links


def test_symmetrize_final_and_degenerate():
    empty = Alignment(frozenset(), 1, 1)
    single = Alignment(frozenset({(0, 0)}), 1, 1)
    out = symmetrize(empty, single)
    assert out.links == frozenset({(0, 0)})


def test_symmetrize_grow_diag_adds_diagonal_neighbor():
    f = Alignment(frozenset({(0, 0), (2, 2), (1, 1)}), 3, 3)
    b = Alignment(frozenset({(0, 0), (2, 2)}), 3, 3)
    out = symmetrize(f, b)
    # intersection {(0,0),(2,2)}; union adds (1,1), a diagonal neighbor
    assert out.links == frozenset({(0, 0), (1, 1), (2, 2)})


def test_symmetrize_bounded_by_intersection_and_union():
    rng = random.Random(15)
    for _ in range(200):
        sl, tl = rng.randint(1, 6), rng.randint(1, 6)
        mk = lambda: frozenset(
            (rng.randrange(sl), rng.randrange(tl))
            for _ in range(rng.randint(0, sl * tl))
        )
        f = Alignment(mk(), sl, tl)
        b = Alignment(mk(), sl, tl)
        out = symmetrize(f, b)
        assert f.links & b.links <= out.links <= f.links | b.links


def test_symmetrize_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        symmetrize(Alignment(frozenset(), 2, 2), Alignment(frozenset(), 2, 3))


def test_table_file_round_trip(tmp_path):
    table = train_model1(CLASSIC, iterations=3)
    path = tmp_path / "table.tsv"
    save_table(table, path)
    loaded = load_table(path)
    assert loaded.probs == table.probs
    assert loaded.direction == table.direction


def test_table_file_sorted_by_source_then_prob(tmp_path):
    table = train_model1(CLASSIC, iterations=3)
    path = tmp_path / "table.tsv"
    save_table(table, path)
    rows = [line.split("\t") for line in path.read_text().splitlines()[1:]]
    for (s1, _, p1), (s2, _, p2) in zip(rows, rows[1:]):
        if s1 == s2:
            assert float(p1) >= float(p2)
        else:
            assert s1 < s2


def test_alignment_pharaoh_round_trip(tmp_path):
    aligns = [
        Alignment(frozenset({(0, 0), (1, 2)}), 2, 3),
        Alignment(frozenset(), 1, 1),
    ]
    path = tmp_path / "a.align"
    save_alignments(aligns, path)
    loaded = load_alignments(path, [(2, 3), (1, 1)])
    assert [a.links for a in loaded] == [a.links for a in aligns]
