"""IBM Model 1 lexical translation estimation and alignment symmetrization.

train_model1 runs batch EM over tokenized sentence pairs with a NULL source
token at virtual position 0. Expected counts are accumulated with numpy over
a dense type-by-type table when the vocabulary product is small enough,
otherwise with sparse dictionaries; both paths visit pairs in corpus order,
so each is deterministic for a fixed corpus.
"""

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

NULL_TOKEN = "<null>"
PROB_FLOOR = 1e-12

_DENSE_CELL_LIMIT = 20_000_000


@dataclass
class TranslationTable:
    probs: dict[tuple[str, str], float]
    direction: str = "fwd"
    log_likelihoods: tuple[float, ...] = ()

    def prob(self, source: str, target: str, floor: float = PROB_FLOOR) -> float:
        return self.probs.get((source, target), floor)


@dataclass(frozen=True)
class Alignment:
    links: frozenset
    source_len: int
    target_len: int

    def __post_init__(self):
        for i, j in self.links:
            if not (0 <= i < self.source_len and 0 <= j < self.target_len):
                raise ValueError(f"link ({i},{j}) out of range "
                                 f"{self.source_len}x{self.target_len}")

    def transposed(self) -> "Alignment":
        return Alignment(
            links=frozenset((j, i) for i, j in self.links),
            source_len=self.target_len,
            target_len=self.source_len,
        )


def _check_corpus(pairs):
    if not pairs:
        raise ValueError("cannot train Model 1 on an empty corpus")
    for idx, (src, tgt) in enumerate(pairs):
        if not src or not tgt:
            raise ValueError(f"pair {idx} has an empty token sequence")


def train_model1(
    pairs,
    iterations: int = 10,
    direction: str = "fwd",
    dense_cell_limit: int = _DENSE_CELL_LIMIT,
) -> TranslationTable:
    """Estimate p(target token | source token) by EM.

    Initialization is uniform over co-occurring pairs (the NULL source token
    co-occurs with everything). The returned table records the corpus
    log-likelihood measured at the start of each iteration, which is
    non-decreasing for EM.
    """
    pairs = [(list(s), list(t)) for s, t in pairs]
    _check_corpus(pairs)

    src_ids: dict[str, int] = {NULL_TOKEN: 0}
    tgt_ids: dict[str, int] = {}
    for src, tgt in pairs:
        for s in src:
            src_ids.setdefault(s, len(src_ids))
        for t in tgt:
            tgt_ids.setdefault(t, len(tgt_ids))

    if len(src_ids) * len(tgt_ids) <= dense_cell_limit:
        probs, lls = _em_dense(pairs, src_ids, tgt_ids, iterations)
    else:
        probs, lls = _em_sparse(pairs, iterations)
    return TranslationTable(probs=probs, direction=direction,
                            log_likelihoods=tuple(lls))


def _em_dense(pairs, src_ids, tgt_ids, iterations):
    S, T = len(src_ids), len(tgt_ids)
    enc = []
    cooc = np.zeros((S, T), dtype=bool)
    for src, tgt in pairs:
        s = np.fromiter((src_ids[x] for x in [NULL_TOKEN, *src]), dtype=np.intp)
        t = np.fromiter((tgt_ids[x] for x in tgt), dtype=np.intp)
        enc.append((s, t))
        cooc[np.ix_(s, t)] = True
    table = cooc / np.maximum(cooc.sum(axis=1, keepdims=True), 1)

    lls = []
    for _ in range(iterations):
        counts = np.zeros((S, T))
        ll = 0.0
        for s, t in enc:
            sub = table[np.ix_(s, t)]
            z = sub.sum(axis=0)
            ll += float(np.log(z / len(s)).sum())
            np.add.at(counts, np.ix_(s, t), sub / z)
        lls.append(ll)
        rows = counts.sum(axis=1, keepdims=True)
        table = np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)

    src_names = list(src_ids)
    tgt_names = list(tgt_ids)
    probs = {}
    si, ti = np.nonzero(cooc)
    for i, j in zip(si.tolist(), ti.tolist()):
        p = float(table[i, j])
        if p > 0.0:
            probs[(src_names[i], tgt_names[j])] = p
    return probs, lls


def _em_sparse(pairs, iterations):
    cooc = defaultdict(set)
    for src, tgt in pairs:
        for s in [NULL_TOKEN, *src]:
            cooc[s].update(tgt)
    table = {}
    for s, ts in cooc.items():
        u = 1.0 / len(ts)
        for t in ts:
            table[(s, t)] = u

    lls = []
    for _ in range(iterations):
        counts = defaultdict(float)
        totals = defaultdict(float)
        ll = 0.0
        for src, tgt in pairs:
            srcs = [NULL_TOKEN, *src]
            inv_len = 1.0 / len(srcs)
            for t in tgt:
                z = 0.0
                for s in srcs:
                    z += table[(s, t)]
                ll += math.log(z * inv_len)
                for s in srcs:
                    c = table[(s, t)] / z
                    counts[(s, t)] += c
                    totals[s] += c
        lls.append(ll)
        table = {
            (s, t): c / totals[s] for (s, t), c in counts.items() if totals[s] > 0
        }
    return {k: v for k, v in table.items() if v > 0.0}, lls


def viterbi_align(table: TranslationTable, src_tokens, tgt_tokens,
                  floor: float = PROB_FLOOR) -> Alignment:
    """Link each target token to its argmax source token.

    Candidates are scanned NULL first, then source positions left to right,
    and only a strictly greater probability displaces the incumbent, so ties
    resolve to the lowest source index and NULL wins exact ties (producing
    no link for that target token).
    """
    src_tokens = list(src_tokens)
    tgt_tokens = list(tgt_tokens)
    links = set()
    for j, t in enumerate(tgt_tokens):
        best_p = table.prob(NULL_TOKEN, t, floor)
        best_i = None
        for i, s in enumerate(src_tokens):
            p = table.prob(s, t, floor)
            if p > best_p:
                best_p = p
                best_i = i
        if best_i is not None:
            links.add((best_i, j))
    return Alignment(links=frozenset(links),
                     source_len=len(src_tokens), target_len=len(tgt_tokens))


_NEIGHBORS = ((-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


def symmetrize(forward: Alignment, backward: Alignment) -> Alignment:
    """Grow-diag-final-and symmetrization of two alignments over one pair.

    Both inputs must already be in (source index, target index) space; use
    Alignment.transposed() on a table trained with swapped sides. Starting
    from the intersection, union links adjacent (including diagonally) to an
    accepted link are added when they cover a new row or column, scanning
    row-major until fixpoint; then union links with both endpoints still
    uncovered are added in row-major order.
    """
    if (forward.source_len, forward.target_len) != (backward.source_len,
                                                    backward.target_len):
        raise ValueError("alignments cover different sentence lengths")
    sl, tl = forward.source_len, forward.target_len
    union = forward.links | backward.links
    accepted = set(forward.links & backward.links)
    cov_s = {i for i, _ in accepted}
    cov_t = {j for _, j in accepted}

    changed = True
    while changed:
        changed = False
        for i in range(sl):
            for j in range(tl):
                if (i, j) not in accepted:
                    continue
                for di, dj in _NEIGHBORS:
                    ni, nj = i + di, j + dj
                    if (
                        0 <= ni < sl
                        and 0 <= nj < tl
                        and (ni, nj) in union
                        and (ni, nj) not in accepted
                        and (ni not in cov_s or nj not in cov_t)
                    ):
                        accepted.add((ni, nj))
                        cov_s.add(ni)
                        cov_t.add(nj)
                        changed = True

    for i, j in sorted(union):
        if (i, j) not in accepted and i not in cov_s and j not in cov_t:
            accepted.add((i, j))
            cov_s.add(i)
            cov_t.add(j)

    return Alignment(links=frozenset(accepted), source_len=sl, target_len=tl)


def save_table(table: TranslationTable, path) -> None:
    """Text table: source<TAB>target<TAB>prob, by source then descending prob."""
    rows = sorted(table.probs.items(), key=lambda kv: (kv[0][0], -kv[1], kv[0][1]))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"#direction\t{table.direction}\n")
        for (s, t), p in rows:
            f.write(f"{s}\t{t}\t{p!r}\n")


def load_table(path) -> TranslationTable:
    probs = {}
    direction = "fwd"
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#direction\t"):
                direction = line.split("\t")[1]
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}: bad table line {lineno}: {line!r}")
            probs[(parts[0], parts[1])] = float(parts[2])
    return TranslationTable(probs=probs, direction=direction)


def save_alignments(alignments, path) -> None:
    """Pharaoh format: one line per pair, space-separated i-j links."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for a in alignments:
            f.write(" ".join(f"{i}-{j}" for i, j in sorted(a.links)) + "\n")


def load_alignments(path, pair_lengths) -> list[Alignment]:
    """Read Pharaoh lines; pair_lengths supplies (source_len, target_len)."""
    out = []
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != len(pair_lengths):
        raise DataError(f"{path}: {len(lines)} alignment lines for "
                        f"{len(pair_lengths)} pairs")
    for line, (sl, tl) in zip(lines, pair_lengths):
        links = set()
        for item in line.split():
            i, j = item.split("-")
            links.add((int(i), int(j)))
        out.append(Alignment(links=frozenset(links), source_len=sl, target_len=tl))
    return out
