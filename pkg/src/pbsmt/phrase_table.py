"""Alignment-consistent phrase pair extraction and phrase table construction.

A (source span, target span) pair is consistent when at least one alignment
link falls inside it and no link crosses its boundary. Extraction follows
the standard enumeration: for each source span, project its links onto the
target side, check consistency, then extend over unaligned target boundary
words. Each entry carries four log10 features: direct and inverse phrase
relative frequencies and direct and inverse lexical weights, all floored
at -20 so downstream decoder scores stay finite.
"""

import math
import struct
import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass

from .alignment import Alignment, NULL_TOKEN, TranslationTable
from .errors import DataError

LOG_FLOOR = -20.0

_MAGIC = b"PBT1"


@dataclass(frozen=True)
class PhrasePair:
    source: tuple[str, ...]
    target: tuple[str, ...]


@dataclass(frozen=True)
class Extraction:
    """One phrase pair occurrence with its spans and internal links."""
    pair: PhrasePair
    src_span: tuple[int, int]   # inclusive token indices
    tgt_span: tuple[int, int]
    links: frozenset            # reindexed to phrase-local positions


@dataclass
class PhraseTable:
    # source phrase -> [(target phrase, (log phi(t|s), log phi(s|t),
    #                    log lex(t|s), log lex(s|t)))], best-first
    entries: dict
    max_len: int = 7

    def options(self, source_phrase: tuple[str, ...]):
        return self.entries.get(tuple(source_phrase), ())

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())


def extract_phrases(src_tokens, tgt_tokens, alignment: Alignment,
                    max_len: int = 7) -> list[Extraction]:
    src_tokens = list(src_tokens)
    tgt_tokens = list(tgt_tokens)
    if alignment.source_len != len(src_tokens) or alignment.target_len != len(tgt_tokens):
        raise ValueError("alignment does not match the token sequences")
    links = sorted(alignment.links)
    aligned_t = {j for _, j in links}
    out = []
    ls, lt = len(src_tokens), len(tgt_tokens)
    for i1 in range(ls):
        for i2 in range(i1, min(i1 + max_len, ls)):
            inside = [(i, j) for i, j in links if i1 <= i <= i2]
            if not inside:
                continue
            j1 = min(j for _, j in inside)
            j2 = max(j for _, j in inside)
            if any(j1 <= j <= j2 and not i1 <= i <= i2 for i, j in links):
                continue
            jl = j1
            while True:
                jh = j2
                while True:
                    if jh - jl + 1 <= max_len:
                        local = frozenset(
                            (i - i1, j - jl) for i, j in inside if jl <= j <= jh
                        )
                        out.append(Extraction(
                            pair=PhrasePair(
                                source=tuple(src_tokens[i1 : i2 + 1]),
                                target=tuple(tgt_tokens[jl : jh + 1]),
                            ),
                            src_span=(i1, i2),
                            tgt_span=(jl, jh),
                            links=local,
                        ))
                    jh += 1
                    if jh >= lt or jh in aligned_t:
                        break
                jl -= 1
                if jl < 0 or jl in aligned_t:
                    break
    return out


def _lex_weight(tgt, links_by_tgt, lex_table: TranslationTable) -> float:
    """Product over target words of the mean Model 1 prob of their linked
    source words; unlinked words use the NULL column."""
    w = 1.0
    for j, t in enumerate(tgt):
        sources = links_by_tgt.get(j)
        if sources:
            w *= sum(lex_table.prob(s, t) for s in sources) / len(sources)
        else:
            w *= lex_table.prob(NULL_TOKEN, t)
    return w


def build_table(extractions, fwd_table: TranslationTable,
                rev_table: TranslationTable, max_len: int = 7) -> PhraseTable:
    """Score extracted phrase pairs with the four standard features.

    phi features are relative frequencies of the extraction counts. Lexical
    weights are computed per occurrence from that occurrence's links; when
    the same phrase pair is extracted with different internal alignments the
    maximum lexical weight is kept.
    """
    counts: Counter = Counter()
    src_counts: Counter = Counter()
    tgt_counts: Counter = Counter()
    lex_fwd: dict = {}
    lex_rev: dict = {}
    n = 0
    for ex in extractions:
        n += 1
        key = (ex.pair.source, ex.pair.target)
        counts[key] += 1
        src_counts[ex.pair.source] += 1
        tgt_counts[ex.pair.target] += 1
        by_tgt = defaultdict(list)
        by_src = defaultdict(list)
        for i, j in sorted(ex.links):
            by_tgt[j].append(ex.pair.source[i])
            by_src[i].append(ex.pair.target[j])
        lw = _lex_weight(ex.pair.target, by_tgt, fwd_table)
        if lw > lex_fwd.get(key, 0.0):
            lex_fwd[key] = lw
        lw = _lex_weight(ex.pair.source, by_src, rev_table)
        if lw > lex_rev.get(key, 0.0):
            lex_rev[key] = lw
    if n == 0:
        raise ValueError("no phrase extractions to build a table from")

    def log_floor(x: float) -> float:
        if x <= 0.0:
            return LOG_FLOOR
        return max(math.log10(x), LOG_FLOOR)

    entries: dict = defaultdict(list)
    for (src, tgt), c in counts.items():
        feats = (
            log_floor(c / src_counts[src]),
            log_floor(c / tgt_counts[tgt]),
            log_floor(lex_fwd[(src, tgt)]),
            log_floor(lex_rev[(src, tgt)]),
        )
        entries[src].append((tgt, feats))
    for src in entries:
        entries[src].sort(key=lambda e: (-e[1][0], e[0]))
    return PhraseTable(entries=dict(entries), max_len=max_len)


# ---------------------------------------------------------------------------
# persistence


def _w_str(buf: bytearray, s: str) -> None:
    b = s.encode("utf-8")
    buf += struct.pack("<I", len(b))
    buf += b


def save_table_binary(table: PhraseTable, path) -> None:
    """Binary format: magic PBT1, little-endian lengths, crc32 footer."""
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<II", table.max_len, len(table.entries))
    for src in sorted(table.entries):
        buf += struct.pack("<I", len(src))
        for tok in src:
            _w_str(buf, tok)
        opts = table.entries[src]
        buf += struct.pack("<I", len(opts))
        for tgt, feats in opts:
            buf += struct.pack("<I", len(tgt))
            for tok in tgt:
                _w_str(buf, tok)
            buf += struct.pack("<4d", *feats)
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    with open(path, "wb") as f:
        f.write(bytes(buf))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError(f"{self.path}: truncated phrase table")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def s(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def load_table_binary(path) -> PhraseTable:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8 or data[:4] != _MAGIC:
        raise DataError(f"{path}: not a phrase table (bad magic/version)")
    body, footer = data[:-4], data[-4:]
    if struct.unpack("<I", footer)[0] != zlib.crc32(body):
        raise DataError(f"{path}: phrase table checksum mismatch")
    r = _Reader(body, path)
    r.take(4)  # magic
    max_len = r.u32()
    n_src = r.u32()
    entries = {}
    for _ in range(n_src):
        src = tuple(r.s() for _ in range(r.u32()))
        opts = []
        for _ in range(r.u32()):
            tgt = tuple(r.s() for _ in range(r.u32()))
            feats = struct.unpack("<4d", r.take(32))
            opts.append((tgt, feats))
        entries[src] = opts
    return PhraseTable(entries=entries, max_len=max_len)


def save_table_text(table: PhraseTable, path) -> None:
    """Moses-style debug format: src ||| tgt ||| f1 f2 f3 f4."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for src in sorted(table.entries):
            for tgt, feats in table.entries[src]:
                f.write(
                    f"{' '.join(src)} ||| {' '.join(tgt)} ||| "
                    + " ".join(repr(x) for x in feats)
                    + "\n"
                )


def load_table_text(path, max_len: int = 7) -> PhraseTable:
    entries: dict = defaultdict(list)
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ||| ")
            if len(parts) != 3:
                raise DataError(f"{path}: bad phrase table line {lineno}")
            src = tuple(parts[0].split())
            tgt = tuple(parts[1].split())
            feats = tuple(float(x) for x in parts[2].split())
            if len(feats) != 4:
                raise DataError(f"{path}: expected 4 features on line {lineno}")
            entries[src].append((tgt, feats))
    return PhraseTable(entries=dict(entries), max_len=max_len)
