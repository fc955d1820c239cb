"""Backoff n-gram language model with interpolated Witten-Bell smoothing.

Probabilities are log10 throughout, matching the ARPA interchange format.
The model stores probabilities for observed n-grams only; everything else
is reached through the backoff chain. Witten-Bell gives a closed-form
backoff weight: with T(c) distinct continuations of context c and tot(c)
continuation tokens, the escape mass T/(tot+T) is exactly the backoff
weight of c, and the unigram escape mass is assigned to <unk>. This keeps
every conditional distribution normalized over the vocabulary, including
distributions conditioned on unseen contexts.
"""

import math
from collections import Counter
from dataclasses import dataclass, field

from .bpe import BOS, EOS, UNK
from .errors import DataError


@dataclass
class LanguageModel:
    order: int
    probs: dict[tuple[str, ...], float]     # n-gram -> log10 p(last | rest)
    backoffs: dict[tuple[str, ...], float]  # context -> log10 backoff weight
    vocab: frozenset[str] = field(default_factory=frozenset)

    def logprob(self, context: tuple[str, ...], token: str) -> float:
        return conditional_logprob(self, context, token)


def _tokens_of(sentence) -> tuple[str, ...]:
    if hasattr(sentence, "surface"):
        return tuple(sentence.surface)
    return tuple(sentence)


def train_lm(token_corpus, order: int = 3) -> LanguageModel:
    """Count padded n-grams of all orders and smooth with Witten-Bell.

    Each sentence is padded with order-1 <s> markers and a closing </s>.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    counts: list[Counter] = [Counter() for _ in range(order + 1)]  # counts[k]
    n_sentences = 0
    for sentence in token_corpus:
        n_sentences += 1
        padded = (BOS,) * (order - 1) + _tokens_of(sentence) + (EOS,)
        for k in range(1, order + 1):
            grams = counts[k]
            for i in range(len(padded) - k + 1):
                grams[padded[i : i + k]] += 1
    if n_sentences == 0:
        raise ValueError("cannot train a language model on an empty corpus")

    # continuation statistics per context: distinct follower types and total
    followers: list[dict] = [dict() for _ in range(order)]
    cont_total: list[Counter] = [Counter() for _ in range(order)]
    for k in range(2, order + 1):
        f_k = followers[k - 1]
        t_k = cont_total[k - 1]
        for gram, c in counts[k].items():
            ctx = gram[:-1]
            f_k[ctx] = f_k.get(ctx, 0) + 1
            t_k[ctx] += c

    probs: dict[tuple[str, ...], float] = {}
    n_tokens = sum(counts[1].values())
    n_types = len(counts[1])
    denom = n_tokens + n_types
    for gram, c in counts[1].items():
        probs[gram] = math.log10(c / denom)
    probs[(UNK,)] = math.log10(n_types / denom)

    for k in range(2, order + 1):
        f_k = followers[k - 1]
        t_k = cont_total[k - 1]
        for gram, c in counts[k].items():
            ctx = gram[:-1]
            t_types = f_k[ctx]
            tot = t_k[ctx]
            lower = 10.0 ** probs[gram[1:]]
            probs[gram] = math.log10((c + t_types * lower) / (tot + t_types))

    backoffs: dict[tuple[str, ...], float] = {}
    for k in range(1, order):
        f_k = followers[k]
        t_k = cont_total[k]
        for ctx in counts[k]:
            if ctx in f_k:
                backoffs[ctx] = math.log10(f_k[ctx] / (t_k[ctx] + f_k[ctx]))
            # contexts with no observed continuation back off with weight 1

    vocab = frozenset(w for (w,) in counts[1]) | {UNK}
    return LanguageModel(order=order, probs=probs, backoffs=backoffs, vocab=vocab)


def conditional_logprob(lm: LanguageModel, context, token: str) -> float:
    """log10 p(token | context) via the stored probs and backoff chain."""
    vocab = lm.vocab
    w = token if token in vocab else UNK
    ctx = tuple(t if t in vocab else UNK for t in context)
    if len(ctx) > lm.order - 1:
        ctx = ctx[-(lm.order - 1) :]
    probs = lm.probs
    backoffs = lm.backoffs
    acc = 0.0
    while ctx:
        p = probs.get(ctx + (w,))
        if p is not None:
            return acc + p
        acc += backoffs.get(ctx, 0.0)
        ctx = ctx[1:]
    return acc + probs.get((w,), probs[(UNK,)])


def sentence_logprob(lm: LanguageModel, tokens) -> float:
    """Sum of conditional log10 probs over the sentence plus its </s>."""
    toks = _tokens_of(tokens)
    padded = (BOS,) * (lm.order - 1) + toks + (EOS,)
    start = lm.order - 1
    total = 0.0
    for i in range(start, len(padded)):
        ctx = padded[max(0, i - lm.order + 1) : i]
        total += conditional_logprob(lm, ctx, padded[i])
    return total


def perplexity(lm: LanguageModel, token_corpus) -> float:
    total_lp = 0.0
    n_events = 0
    for sentence in token_corpus:
        toks = _tokens_of(sentence)
        total_lp += sentence_logprob(lm, toks)
        n_events += len(toks) + 1  # </s> is predicted too
    return 10.0 ** (-total_lp / n_events)


def save_arpa(lm: LanguageModel, path) -> None:
    """Standard ARPA text export (log10 probs, optional backoff column)."""
    by_order: list[list] = [[] for _ in range(lm.order + 1)]
    for gram in lm.probs:
        by_order[len(gram)].append(gram)
    for grams in by_order:
        grams.sort()
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\\data\\\n")
        for k in range(1, lm.order + 1):
            f.write(f"ngram {k}={len(by_order[k])}\n")
        for k in range(1, lm.order + 1):
            f.write(f"\n\\{k}-grams:\n")
            for gram in by_order[k]:
                line = f"{lm.probs[gram]!r}\t{' '.join(gram)}"
                if k < lm.order and gram in lm.backoffs:
                    line += f"\t{lm.backoffs[gram]!r}"
                f.write(line + "\n")
        f.write("\n\\end\\\n")


def load_arpa(path) -> LanguageModel:
    probs: dict[tuple[str, ...], float] = {}
    backoffs: dict[tuple[str, ...], float] = {}
    order = 0
    with open(path, encoding="utf-8") as f:
        section = None
        for raw in f:
            line = raw.strip()
            if not line:
                continue
            if line == "\\data\\":
                section = "data"
                continue
            if line == "\\end\\":
                break
            if line.endswith("-grams:") and line.startswith("\\"):
                section = int(line[1 : line.index("-")])
                order = max(order, section)
                continue
            if section == "data":
                continue
            if not isinstance(section, int):
                raise DataError(f"{path}: ARPA line outside any section: {line!r}")
            parts = line.split("\t")
            if len(parts) == 2:
                lp, gram_s = parts
                bow = None
            elif len(parts) == 3:
                lp, gram_s, bow = parts
            else:
                raise DataError(f"{path}: bad ARPA line: {line!r}")
            gram = tuple(gram_s.split(" "))
            if len(gram) != section:
                raise DataError(f"{path}: {section}-gram with {len(gram)} tokens: {line!r}")
            probs[gram] = float(lp)
            if bow is not None:
                backoffs[gram] = float(bow)
    if order == 0:
        raise DataError(f"{path}: no n-gram sections found")
    vocab = frozenset(g[0] for g in probs if len(g) == 1)
    return LanguageModel(order=order, probs=probs, backoffs=backoffs, vocab=vocab)
