import unicodedata

import pytest

from pbsmt.corpus import (
    CorpusError,
    ParallelCorpus,
    SentencePair,
    filter_by_length,
    load_parallel,
    save_parallel,
    split,
)


def write(tmp_path, text, name="corpus.tsv"):
    path = tmp_path / name
    path.write_bytes(text.encode("utf-8") if isinstance(text, str) else text)
    return path


def make_corpus(n):
    return ParallelCorpus(
        pairs=tuple(SentencePair(i, f"s{i}", f"t{i}") for i in range(n))
    )


def test_load_basic(tmp_path):
    path = write(tmp_path, "甲\t갑\n乙\t을\n")
    corpus = load_parallel(path)
    assert len(corpus) == 2
    assert [p.id for p in corpus] == [0, 1]
    assert corpus[0].source == "甲"
    assert corpus[1].target == "을"


def test_load_missing_tab_reports_line(tmp_path):
    path = write(tmp_path, "甲\n")
    with pytest.raises(CorpusError, match="line 1"):
        load_parallel(path)


def test_load_empty_file(tmp_path):
    corpus = load_parallel(write(tmp_path, ""))
    assert len(corpus) == 0


def test_load_empty_field_rejected(tmp_path):
    path = write(tmp_path, "a\tb\n\tb\n")
    with pytest.raises(CorpusError, match="line 2"):
        load_parallel(path)


def test_load_invalid_utf8(tmp_path):
    path = write(tmp_path, b"a\tb\n\xff\xfe\tb\n")
    with pytest.raises(CorpusError, match="UTF-8"):
        load_parallel(path)


def test_load_nfc_normalizes(tmp_path):
    decomposed = unicodedata.normalize("NFD", "가")  # hangul syllable
    assert len(decomposed) == 2
    corpus = load_parallel(write(tmp_path, f"x\t{decomposed}\n"))
    assert corpus[0].target == "가"


def test_round_trip_byte_identical(tmp_path):
    text = "甲乙\t갑 을\nfoo\tbar\n"
    path = write(tmp_path, text)
    corpus = load_parallel(path)
    out = tmp_path / "out.tsv"
    save_parallel(corpus, out)
    assert out.read_bytes() == path.read_bytes()
    assert load_parallel(out).pairs == corpus.pairs


def test_filter_boundary_inclusive():
    pair_ok = SentencePair(0, "x" * 128, "y" * 1024)
    pair_long_src = SentencePair(1, "x" * 129, "y")
    corpus = ParallelCorpus(pairs=(pair_ok, pair_long_src))
    kept = filter_by_length(corpus)
    assert kept.pairs == (pair_ok,)


def test_filter_minimal_limits():
    corpus = ParallelCorpus(pairs=(SentencePair(0, "a", "b"),
                                   SentencePair(1, "ab", "b")))
    kept = filter_by_length(corpus, 1, 1)
    assert [p.id for p in kept] == [0]


def test_filter_idempotent():
    corpus = make_corpus(10)
    once = filter_by_length(corpus, 2, 2)
    twice = filter_by_length(once, 2, 2)
    assert once.pairs == twice.pairs


def test_filter_counts_unicode_scalars():
    # astral plane char is one scalar value even though it is 2 UTF-16 units
    corpus = ParallelCorpus(pairs=(SentencePair(0, "\U0001D11E", "t"),))
    assert len(filter_by_length(corpus, 1, 10)) == 1


def test_split_floor_arithmetic():
    train, test = split(make_corpus(10), 0.8, seed=1)
    assert (len(train), len(test)) == (8, 2)


def test_split_partition_and_order():
    corpus = make_corpus(50)
    train, test = split(corpus, 0.7, seed=3)
    assert len(train) + len(test) == 50
    train_ids = [p.id for p in train]
    test_ids = [p.id for p in test]
    assert train_ids == sorted(train_ids)
    assert test_ids == sorted(test_ids)
    assert set(train_ids) | set(test_ids) == set(range(50))
    assert not set(train_ids) & set(test_ids)


def test_split_deterministic():
    corpus = make_corpus(40)
    a = split(corpus, 0.8, seed=7)
    b = split(corpus, 0.8, seed=7)
    assert a[0].pairs == b[0].pairs
    assert a[1].pairs == b[1].pairs
    c = split(corpus, 0.8, seed=8)
    assert c[0].pairs != a[0].pairs  # astronomically unlikely to collide


def test_split_rejects_tiny_corpus():
    with pytest.raises(CorpusError):
        split(make_corpus(1), 0.8, seed=0)


def test_split_rejects_bad_fraction():
    with pytest.raises(ValueError):
        split(make_corpus(10), 1.0, seed=0)
