"""Log-linear stack decoder with beam search over source coverage.

Hypotheses live in one stack per count of covered source tokens. An
expansion applies a phrase-table option to a fully uncovered contiguous
span, paying the language model delta, the four phrase features, a
distortion feature -|start - last_covered_end - 1| and a word penalty
-|target phrase|. Source tokens with no table entry are copied through
verbatim for a fixed unweighted penalty, which guarantees every sentence
is decodable. Hypotheses are recombined on (coverage, LM state, last
covered end); recombination losers are kept as arcs so n-best lists can be
recovered exactly. Stacks are pruned to stack_size by score plus an
admissible-leaning future-cost estimate.

To keep every hypothesis completable under a distortion limit, expansions
starting at the first uncovered position are always allowed even when the
jump exceeds the limit (the regular distortion feature is still charged).
"""

import heapq
import math
from dataclasses import dataclass

from .bpe import BOS, EOS
from .ngram_lm import LanguageModel, conditional_logprob
from .phrase_table import PhraseTable

COPY_PENALTY = -10.0

# LM and phrase features are stored base-10 (the ARPA convention) but the
# default weights follow the usual natural-log calibration, so probability
# features are rescaled by ln 10 when they enter the score. Distortion and
# word penalty are plain counts and stay unscaled.
LOG_SCALE = math.log(10.0)

_NEG_INF = float("-inf")


@dataclass(frozen=True)
class DecoderWeights:
    lm: float = 0.5
    phrase: tuple[float, float, float, float] = (0.2, 0.2, 0.2, 0.2)
    distortion: float = 0.3
    word_penalty: float = -1.0

    def scaled(self, factor: float) -> "DecoderWeights":
        return DecoderWeights(
            lm=self.lm * factor,
            phrase=tuple(p * factor for p in self.phrase),
            distortion=self.distortion * factor,
            word_penalty=self.word_penalty * factor,
        )


DEFAULT_WEIGHTS = DecoderWeights()

_ZERO7 = (0.0,) * 7


class Hypothesis:
    """A (possibly partial) translation state in the coverage stacks."""

    __slots__ = (
        "coverage", "output_tail", "last_covered_end", "score", "future_cost",
        "backpointer", "phrase", "output", "dfeats", "arcs",
    )

    def __init__(self, coverage, output_tail, last_covered_end, score,
                 future_cost, backpointer, phrase, output, dfeats):
        self.coverage = coverage
        self.output_tail = output_tail
        self.last_covered_end = last_covered_end
        self.score = score
        self.future_cost = future_cost
        self.backpointer = backpointer
        self.phrase = phrase
        self.output = output
        self.dfeats = dfeats       # feature delta of the best arrival
        self.arcs = None           # [(parent, dscore, dfeats, target)] if kept

    @property
    def features(self) -> tuple[float, ...]:
        """Accumulated 7-feature vector (lm, phi-4, distortion, word penalty)."""
        total = list(_ZERO7)
        node = self
        while node is not None and node.dfeats is not None:
            for k in range(7):
                total[k] += node.dfeats[k]
            node = node.backpointer
        return tuple(total)

    def __repr__(self):
        return (f"Hypothesis(cov={self.coverage:b}, out={' '.join(self.output)!r}, "
                f"score={self.score:.4f})")


@dataclass(frozen=True)
class NBestEntry:
    tokens: tuple[str, ...]
    features: tuple[float, ...]
    score: float

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def _span_options(source, table: PhraseTable, weights: DecoderWeights,
                  copy_penalty: float):
    """All translation options per span: (target, feats4, base score, copy)."""
    n = len(source)
    wp = weights.word_penalty
    wph = tuple(w * LOG_SCALE for w in weights.phrase)
    options = {}
    for i in range(n):
        for j in range(i + 1, min(i + table.max_len, n) + 1):
            opts = []
            for tgt, feats in table.options(tuple(source[i:j])):
                base = (wph[0] * feats[0] + wph[1] * feats[1]
                        + wph[2] * feats[2] + wph[3] * feats[3]
                        + wp * -len(tgt))
                opts.append((tgt, feats, base, False))
            if opts:
                options[(i, j)] = opts
        if (i, i + 1) not in options:
            # copy-through for tokens absent from the table
            tgt = (source[i],)
            options[(i, i + 1)] = [(tgt, (0.0, 0.0, 0.0, 0.0),
                                    copy_penalty + wp * -1.0, True)]
    return options


def estimate_future_cost(source, table: PhraseTable, lm: LanguageModel,
                         weights: DecoderWeights = DEFAULT_WEIGHTS,
                         copy_penalty: float = COPY_PENALTY):
    """Optimistic best score for every source span, combined by max-DP.

    Span cost is the best option's weighted phrase score plus the unigram
    LM score of its target; cost(i,k) = max over j of cost(i,j)+cost(j,k).
    """
    options = _span_options(source, table, weights, copy_penalty)
    return _future_costs(len(source), options, lm, weights)


def _future_costs(n, options, lm, weights):
    w_lm = weights.lm * LOG_SCALE
    uni_cache = {}

    def unigram(tok):
        lp = uni_cache.get(tok)
        if lp is None:
            lp = conditional_logprob(lm, (), tok)
            uni_cache[tok] = lp
        return lp

    fc = {}
    for length in range(1, n + 1):
        for i in range(0, n - length + 1):
            j = i + length
            best = _NEG_INF
            for tgt, _feats, base, _copy in options.get((i, j), ()):
                s = base + w_lm * sum(unigram(t) for t in tgt)
                if s > best:
                    best = s
            for m in range(i + 1, j):
                s = fc[(i, m)] + fc[(m, j)]
                if s > best:
                    best = s
            fc[(i, j)] = best
    return fc


def _search(source, table, lm, weights, stack_size, distortion_limit,
            recombine, copy_penalty, keep_arcs):
    """Run stack decoding; returns the final stack and the LM query memo."""
    source = list(source)
    if not source:
        raise ValueError("cannot decode an empty source")
    if stack_size < 1:
        raise ValueError("stack_size must be >= 1")
    n = len(source)
    dl = distortion_limit if distortion_limit is not None else -1

    options = _span_options(source, table, weights, copy_penalty)
    fc_span = _future_costs(n, options, lm, weights)
    max_span = max((j - i for i, j in options), default=1)

    fc_cov_cache = {}

    def fc_of(cov):
        v = fc_cov_cache.get(cov)
        if v is not None:
            return v
        total = 0.0
        i = 0
        while i < n:
            if cov & (1 << i):
                i += 1
                continue
            j = i
            while j < n and not cov & (1 << j):
                j += 1
            total += fc_span[(i, j)]
            i = j
        fc_cov_cache[cov] = total
        return total

    lm_cache = {}

    def lmq(ctx, tok):
        key = (ctx, tok)
        lp = lm_cache.get(key)
        if lp is None:
            lp = conditional_logprob(lm, ctx, tok)
            lm_cache[key] = lp
        return lp

    ctx_len = lm.order - 1
    init_tail = (BOS,) * ctx_len
    w_lm = weights.lm * LOG_SCALE
    w_dist = weights.distortion

    init = Hypothesis(0, init_tail, -1, 0.0, fc_of(0), None, None, (), None)
    stacks = [dict() for _ in range(n + 1)]
    stacks[0][(0, init_tail, -1)] = init
    serial = 0

    for c in range(n):
        stack = stacks[c]
        if not stack:
            continue
        hyps = list(stack.values())
        if len(hyps) > stack_size:
            hyps.sort(key=lambda h: (-(h.score + h.future_cost), h.output))
            hyps = hyps[:stack_size]
        for hyp in hyps:
            cov = hyp.coverage
            lce = hyp.last_covered_end
            base_score = hyp.score
            tail = hyp.output_tail
            first_gap = 0
            while cov & (1 << first_gap):
                first_gap += 1
            for i in range(n):
                if cov & (1 << i):
                    continue
                if dl >= 0 and abs(i - lce - 1) > dl and i != first_gap:
                    continue
                dist_feat = float(-abs(i - lce - 1))
                dist_score = w_dist * dist_feat
                for j in range(i + 1, min(i + max_span, n) + 1):
                    if cov & (1 << (j - 1)):
                        break
                    opts = options.get((i, j))
                    if not opts:
                        continue
                    new_cov = cov | (((1 << (j - i)) - 1) << i)
                    target_stack = stacks[c + (j - i)]
                    for tgt, feats, base, _copy in opts:
                        lm_delta = 0.0
                        ctx = tail
                        for tok in tgt:
                            lm_delta += lmq(ctx, tok)
                            if ctx_len:
                                ctx = (ctx + (tok,))[-ctx_len:]
                        score = base_score + base + w_lm * lm_delta + dist_score
                        if recombine:
                            key = (new_cov, ctx, j - 1)
                        else:
                            serial += 1
                            key = serial
                        node = target_stack.get(key)
                        if node is None:
                            node = Hypothesis(
                                new_cov, ctx, j - 1, score, fc_of(new_cov),
                                hyp, tgt, hyp.output + tgt,
                                (lm_delta, feats[0], feats[1], feats[2],
                                 feats[3], dist_feat, float(-len(tgt))),
                            )
                            if keep_arcs:
                                node.arcs = []
                            target_stack[key] = node
                        else:
                            out = hyp.output + tgt
                            if score > node.score or (
                                score == node.score and out < node.output
                            ):
                                node.score = score
                                node.output = out
                                node.backpointer = hyp
                                node.phrase = tgt
                                node.dfeats = (
                                    lm_delta, feats[0], feats[1], feats[2],
                                    feats[3], dist_feat, float(-len(tgt)),
                                )
                        if keep_arcs:
                            node.arcs.append((
                                hyp, score - base_score,
                                (lm_delta, feats[0], feats[1], feats[2],
                                 feats[3], dist_feat, float(-len(tgt))),
                                tgt,
                            ))

    if not stacks[n]:
        raise RuntimeError("decoder produced no complete hypothesis")
    return stacks[n], lmq


def _complete(node, lmq, weights):
    """Append the </s> LM transition to a full-coverage hypothesis."""
    lm_delta = lmq(node.output_tail, EOS)
    feats = node.features
    # dfeats of the completed node holds the full accumulated vector
    return Hypothesis(
        node.coverage, node.output_tail, node.last_covered_end,
        node.score + weights.lm * LOG_SCALE * lm_delta, 0.0, None,
        node.phrase, node.output,
        (feats[0] + lm_delta,) + feats[1:],
    )


def decode(source, table: PhraseTable, lm: LanguageModel,
           weights: DecoderWeights = DEFAULT_WEIGHTS, *,
           stack_size: int = 100, distortion_limit: int | None = 6,
           recombine: bool = True,
           copy_penalty: float = COPY_PENALTY) -> Hypothesis:
    """Best translation of source under the log-linear model.

    Ties on the final score prefer the lexicographically smaller output.
    The returned hypothesis includes the closing </s> LM transition in its
    score and feature vector.
    """
    final, lmq = _search(source, table, lm, weights, stack_size,
                         distortion_limit, recombine, copy_penalty, False)
    best = None
    for node in final.values():
        done = _complete(node, lmq, weights)
        if (best is None or done.score > best.score
                or (done.score == best.score and done.output < best.output)):
            best = done
    return best


def nbest(source, table: PhraseTable, lm: LanguageModel,
          weights: DecoderWeights = DEFAULT_WEIGHTS, *,
          n: int = 10, stack_size: int = 100,
          distortion_limit: int | None = 6, recombine: bool = True,
          copy_penalty: float = COPY_PENALTY) -> list[NBestEntry]:
    """Top-n complete hypotheses, distinct by surface form, best first.

    Derivations are enumerated lazily over the recombination arcs, so
    alternatives merged away during search are recovered exactly.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    final, lmq = _search(source, table, lm, weights, stack_size,
                         distortion_limit, recombine, copy_penalty, True)

    streams: dict[int, list] = {}   # id(node) -> [items, heap, seeded]

    def deriv(node, k):
        """k-th best derivation reaching node: (score, output, feats)."""
        st = streams.get(id(node))
        if st is None:
            st = streams[id(node)] = [[], [], False]
        items, heap = st[0], st[1]
        if not st[2]:
            st[2] = True
            if not node.arcs:
                items.append((0.0, (), _ZERO7))
            else:
                for ai, (parent, ds, df, tgt) in enumerate(node.arcs):
                    pd = deriv(parent, 0)
                    if pd is not None:
                        heapq.heappush(heap, (
                            -(pd[0] + ds), pd[1] + tgt, ai, 0,
                            tuple(a + b for a, b in zip(pd[2], df)),
                        ))
        while len(items) <= k and heap:
            neg, output, ai, pr, feats = heapq.heappop(heap)
            items.append((-neg, output, feats))
            parent, ds, df, tgt = node.arcs[ai]
            pd = deriv(parent, pr + 1)
            if pd is not None:
                heapq.heappush(heap, (
                    -(pd[0] + ds), pd[1] + tgt, ai, pr + 1,
                    tuple(a + b for a, b in zip(pd[2], df)),
                ))
        return items[k] if k < len(items) else None

    goal = []
    for idx, node in enumerate(final.values()):
        d = deriv(node, 0)
        if d is None:
            continue
        lm_delta = lmq(node.output_tail, EOS)
        bonus = weights.lm * LOG_SCALE * lm_delta
        heapq.heappush(goal, (
            -(d[0] + bonus), d[1], idx, 0,
            (d[2][0] + lm_delta,) + d[2][1:], node, bonus, lm_delta,
        ))

    results = []
    seen = set()
    while goal and len(results) < n:
        neg, output, idx, rank, feats, node, bonus, lm_delta = heapq.heappop(goal)
        if output not in seen:
            seen.add(output)
            results.append(NBestEntry(tokens=output, features=feats, score=-neg))
        d = deriv(node, rank + 1)
        if d is not None:
            heapq.heappush(goal, (
                -(d[0] + bonus), d[1], idx, rank + 1,
                (d[2][0] + lm_delta,) + d[2][1:], node, bonus, lm_delta,
            ))
    return results


def write_nbest(path, nbest_lists) -> None:
    """One line per entry: sentence_id ||| tokens ||| f1..f7 ||| total."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sid, entries in enumerate(nbest_lists):
            for e in entries:
                feats = " ".join(repr(x) for x in e.features)
                f.write(f"{sid} ||| {e.text} ||| {feats} ||| {e.score!r}\n")
