"""Parallel corpus ingestion, length filtering, and train/test splitting.

The on-disk format is plain TSV: one sentence pair per line,
``source<TAB>target``, UTF-8, LF line endings, no header. All text is
NFC-normalized on load and lengths are counted in Unicode scalar values.
"""

import math
import random
import unicodedata
from dataclasses import dataclass

from .errors import DataError


class CorpusError(DataError):
    """Malformed corpus file or invalid corpus operation."""


@dataclass(frozen=True)
class SentencePair:
    id: int
    source: str
    target: str


@dataclass(frozen=True)
class ParallelCorpus:
    pairs: tuple[SentencePair, ...]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i) -> SentencePair:
        return self.pairs[i]


def load_parallel(path, fmt: str = "tsv", provenance: str | None = None) -> ParallelCorpus:
    """Read a TSV parallel corpus, assigning ids in file order from 0.

    Raises CorpusError on a line without exactly one tab, on an empty
    field, or on invalid UTF-8; the error message carries the 1-based
    line number.
    """
    if fmt != "tsv":
        raise ValueError(f"unsupported corpus format: {fmt!r}")
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise CorpusError(f"cannot read corpus file {path}: {e}") from e
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise CorpusError(f"{path}: invalid UTF-8 at byte {e.start}") from e

    pairs = []
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()  # trailing newline
    for lineno, line in enumerate(lines, start=1):
        fields = line.split("\t")
        if len(fields) != 2:
            raise CorpusError(
                f"{path}: malformed line {lineno}: expected source<TAB>target, "
                f"got {len(fields)} field(s)"
            )
        source = unicodedata.normalize("NFC", fields[0].strip())
        target = unicodedata.normalize("NFC", fields[1].strip())
        if not source or not target:
            raise CorpusError(f"{path}: malformed line {lineno}: empty field")
        pairs.append(SentencePair(id=len(pairs), source=source, target=target))
    return ParallelCorpus(
        pairs=tuple(pairs),
        provenance=provenance if provenance is not None else str(path),
    )


def save_parallel(corpus: ParallelCorpus, path) -> None:
    """Write the corpus back out as TSV (inverse of load_parallel)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for pair in corpus:
            f.write(f"{pair.source}\t{pair.target}\n")


def filter_by_length(
    corpus: ParallelCorpus,
    max_source_chars: int = 128,
    max_target_chars: int = 1024,
) -> ParallelCorpus:
    """Keep pairs whose sides are within the character limits (inclusive)."""
    if max_source_chars < 1 or max_target_chars < 1:
        raise ValueError("length limits must be >= 1")
    kept = tuple(
        p
        for p in corpus
        if len(p.source) <= max_source_chars and len(p.target) <= max_target_chars
    )
    return ParallelCorpus(pairs=kept, provenance=corpus.provenance)


def split(
    corpus: ParallelCorpus, train_fraction: float = 0.8, seed: int = 0
) -> tuple[ParallelCorpus, ParallelCorpus]:
    """Deterministic seeded shuffle, then cut at floor(n * train_fraction).

    Both halves keep their original pair ids, in ascending order, so the
    union of the halves is exactly the input corpus.
    """
    n = len(corpus)
    if n < 2:
        raise CorpusError(f"cannot split a corpus of {n} pair(s)")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    indices = list(range(n))
    random.Random(seed).shuffle(indices)
    # tiny epsilon so exact ratios like 202218/252773 are not floored away
    cut = math.floor(n * train_fraction + 1e-9)
    train_idx = sorted(indices[:cut])
    test_idx = sorted(indices[cut:])
    train = ParallelCorpus(
        pairs=tuple(corpus.pairs[i] for i in train_idx),
        provenance=corpus.provenance,
    )
    test = ParallelCorpus(
        pairs=tuple(corpus.pairs[i] for i in test_idx),
        provenance=corpus.provenance,
    )
    return train, test
