"""Independent naive implementations used as test oracles.

Everything here is deliberately simple and direct: full-scan merges, plain
dict EM, exhaustive span/segmentation enumeration. These double-check the
optimized library code paths and must stay independent of them.
"""

import math
from collections import Counter, defaultdict

NULL = "<null>"


def bpe_replay_encode(merges, meta, word):
    """Encode one word by replaying the merge list in learned order."""
    syms = [meta, *word]
    for left, right in merges:
        out = []
        i = 0
        while i < len(syms):
            if i + 1 < len(syms) and syms[i] == left and syms[i + 1] == right:
                out.append(left + right)
                i += 2
            else:
                out.append(syms[i])
                i += 1
        syms = out
    return syms


def model1_em(pairs, iterations):
    """Plain dict-based Model 1 EM with a NULL source token.

    Returns (probs dict, per-iteration log-likelihoods).
    """
    cooc = defaultdict(set)
    for src, tgt in pairs:
        for s in [NULL, *src]:
            cooc[s].update(tgt)
    t = {}
    for s, ts in cooc.items():
        for tok in ts:
            t[(s, tok)] = 1.0 / len(ts)
    lls = []
    for _ in range(iterations):
        counts = defaultdict(float)
        totals = defaultdict(float)
        ll = 0.0
        for src, tgt in pairs:
            srcs = [NULL, *src]
            for tok in tgt:
                z = sum(t[(s, tok)] for s in srcs)
                ll += math.log(z / len(srcs))
                for s in srcs:
                    c = t[(s, tok)] / z
                    counts[(s, tok)] += c
                    totals[s] += c
        lls.append(ll)
        t = {k: v / totals[k[0]] for k, v in counts.items() if totals[k[0]] > 0}
    return t, lls


def consistent_spans(src_len, tgt_len, links, max_len):
    """Every consistent (source span, target span) pair, by brute force.

    A pair is consistent when at least one link lies inside it and no link
    has exactly one endpoint inside. Spans are inclusive index pairs.
    """
    out = set()
    for i1 in range(src_len):
        for i2 in range(i1, min(i1 + max_len, src_len)):
            for j1 in range(tgt_len):
                for j2 in range(j1, min(j1 + max_len, tgt_len)):
                    inside = False
                    ok = True
                    for i, j in links:
                        s_in = i1 <= i <= i2
                        t_in = j1 <= j <= j2
                        if s_in and t_in:
                            inside = True
                        elif s_in != t_in:
                            ok = False
                            break
                    if ok and inside:
                        out.add(((i1, i2), (j1, j2)))
    return out


def ngram_backoff_logprob(probs, backoffs, order, vocab, context, token):
    """Recursive textbook backoff over stored log10 probs and weights."""
    w = token if token in vocab else "<unk>"
    ctx = tuple(c if c in vocab else "<unk>" for c in context)[-(order - 1):] \
        if order > 1 else ()
    def q(c, w):
        if c:
            if c + (w,) in probs:
                return probs[c + (w,)]
            return backoffs.get(c, 0.0) + q(c[1:], w)
        return probs.get((w,), probs[("<unk>",)])
    return q(ctx, w)


def bleu_counts(hyp, ref, n):
    """Clipped n-gram matches and the hypothesis n-gram total."""
    def grams(seq):
        return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))
    h = grams(hyp)
    r = grams(ref)
    match = sum(min(c, r[g]) for g, c in h.items())
    return match, max(len(hyp) - n + 1, 0)


def brute_force_decode(source, options, lm_query, weights, copy_penalty,
                       lm_order, bos, eos):
    """Exhaustive search over segmentations x orderings x phrase choices.

    options maps (i, j) spans to (target tuple, feats4, is_copy) lists.
    Probability features (LM, phrase) are base-10 logs and enter the score
    scaled by ln 10, matching the decoder's scoring definition. Returns the
    best (score, output) with the decoder's tie-break (higher score, then
    lexicographically smaller output).
    """
    n = len(source)
    ln10 = math.log(10.0)
    w_lm, w_ph, w_dist, w_wp = (weights.lm * ln10,
                                [w * ln10 for w in weights.phrase],
                                weights.distortion, weights.word_penalty)
    best = [float("-inf"), None]

    def rec(cov, last_end, tail, score, output):
        if cov == (1 << n) - 1:
            total = score + w_lm * lm_query(tail, eos)
            if total > best[0] or (total == best[0] and
                                   (best[1] is None or output < best[1])):
                best[0] = total
                best[1] = output
            return
        for i in range(n):
            if cov & (1 << i):
                continue
            for j in range(i + 1, n + 1):
                if cov & (1 << (j - 1)):
                    break
                for tgt, feats, is_copy in options.get((i, j), ()):
                    s = score
                    ctx = tail
                    for tok in tgt:
                        s += w_lm * lm_query(ctx, tok)
                        if lm_order > 1:
                            ctx = (ctx + (tok,))[-(lm_order - 1):]
                    s += sum(w * f for w, f in zip(w_ph, feats))
                    s += w_dist * -abs(i - last_end - 1)
                    s += w_wp * -len(tgt)
                    if is_copy:
                        s += copy_penalty
                    rec(cov | (((1 << (j - i)) - 1) << i), j - 1, ctx, s,
                        output + tgt)

    rec(0, -1, (bos,) * (lm_order - 1), 0.0, ())
    return best[0], best[1]
