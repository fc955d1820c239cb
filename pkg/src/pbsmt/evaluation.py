"""BLEU scoring (standard, floor, add-k) and length-bucket analysis.

Scores are on the 0-100 scale. Corpus scoring is micro-averaged: clipped
n-gram matches and totals are summed over the corpus before precisions are
formed, and the brevity penalty uses total lengths. Smoothing:

* none: score is 0 whenever any order-n precision is 0.
* floor(f): an order with zero matches gets precision f / total.
* add_k(k): when some precision is 0, every order n >= 2 is rescored as
  (matches+k) / (total+k); when all precisions are positive the standard
  score is returned unchanged.

Orders for which the hypothesis contains no n-grams at all are excluded
from the geometric mean in every mode (effective-order scoring), so a
hypothesis identical to its reference scores 100 regardless of length.
"""

import csv
import math
import os
import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

MAX_ORDER = 4


@dataclass(frozen=True)
class Smoothing:
    mode: str = "none"          # none | floor | addk
    value: float = 0.0

    @classmethod
    def parse(cls, spec: str) -> "Smoothing":
        """Parse CLI syntax: none | floor=0.1 | addk=1."""
        if spec == "none":
            return cls("none", 0.0)
        if spec.startswith("floor"):
            value = float(spec.split("=", 1)[1]) if "=" in spec else 0.1
            return cls("floor", value)
        if spec.startswith("addk"):
            value = float(spec.split("=", 1)[1]) if "=" in spec else 1.0
            return cls("addk", value)
        raise ValueError(f"unknown smoothing spec: {spec!r}")

    def __str__(self) -> str:
        if self.mode == "none":
            return "none"
        return f"{self.mode}={self.value:g}"


SMOOTH_NONE = Smoothing("none")
SMOOTH_FLOOR = Smoothing("floor", 0.1)
SMOOTH_ADDK = Smoothing("addk", 1.0)


@dataclass(frozen=True)
class BleuResult:
    score: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    smoothing: Smoothing
    matches: tuple[int, ...] = ()
    totals: tuple[int, ...] = ()


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _pair_stats(hyp, ref):
    """Clipped matches and totals for orders 1..MAX_ORDER."""
    matches = []
    totals = []
    for n in range(1, MAX_ORDER + 1):
        hyp_ngrams = _ngram_counts(hyp, n)
        ref_ngrams = _ngram_counts(ref, n)
        m = sum(min(c, ref_ngrams.get(g, 0)) for g, c in hyp_ngrams.items())
        matches.append(m)
        totals.append(max(len(hyp) - n + 1, 0))
    return matches, totals


def _score(matches, totals, hyp_len, ref_len, smoothing: Smoothing) -> BleuResult:
    if hyp_len == 0:
        return BleuResult(0.0, (0.0,) * MAX_ORDER, 0.0, 0, ref_len, smoothing,
                          tuple(matches), tuple(totals))
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    raw = [m / t if t > 0 else 0.0 for m, t in zip(matches, totals)]
    # orders where the hypothesis has no n-grams at all carry no evidence
    # and are excluded from the geometric mean (so bleu(x, x) = 100 always)
    order_in = [t > 0 for t in totals]

    if smoothing.mode == "none" or all(p > 0.0 for p, ok in zip(raw, order_in) if ok):
        precisions = raw
    elif smoothing.mode == "floor":
        f = smoothing.value
        precisions = [
            p if (m > 0 or not ok) else f / t
            for p, m, t, ok in zip(raw, matches, totals, order_in)
        ]
    elif smoothing.mode == "addk":
        k = smoothing.value
        precisions = [raw[0]] + [
            (m + k) / (t + k) if ok else p
            for p, m, t, ok in zip(raw[1:], matches[1:], totals[1:], order_in[1:])
        ]
    else:
        raise ValueError(f"unknown smoothing mode: {smoothing.mode!r}")

    included = [p for p, ok in zip(precisions, order_in) if ok]
    if not included or any(p <= 0.0 for p in included):
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(
            sum(math.log(p) for p in included) / len(included)
        )
    return BleuResult(score, tuple(precisions), bp, hyp_len, ref_len,
                      smoothing, tuple(matches), tuple(totals))


def bleu_sentence(hypothesis, reference, smoothing: Smoothing = SMOOTH_NONE) -> BleuResult:
    """BLEU of one hypothesis/reference token-sequence pair."""
    hyp = list(hypothesis)
    ref = list(reference)
    if not ref:
        raise ValueError("reference must be non-empty")
    matches, totals = _pair_stats(hyp, ref)
    return _score(matches, totals, len(hyp), len(ref), smoothing)


def bleu_corpus(hypotheses, references, smoothing: Smoothing = SMOOTH_NONE) -> BleuResult:
    """Micro-averaged corpus BLEU over aligned hypothesis/reference lists."""
    hyps = [list(h) for h in hypotheses]
    refs = [list(r) for r in references]
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise ValueError("empty corpus")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        if not ref:
            raise ValueError("reference must be non-empty")
        m, t = _pair_stats(hyp, ref)
        for n in range(MAX_ORDER):
            matches[n] += m[n]
            totals[n] += t[n]
        hyp_len += len(hyp)
        ref_len += len(ref)
    return _score(matches, totals, hyp_len, ref_len, smoothing)


@dataclass(frozen=True)
class BucketStats:
    low: float
    high: float
    count: int
    mean: float
    median: float
    frac_near_zero: float
    scores: tuple[float, ...]


@dataclass(frozen=True)
class LengthBucketReport:
    boundaries: tuple[float, ...]
    buckets: tuple[BucketStats, ...]


NEAR_ZERO_SCORE = 1.0  # a sentence BLEU below this counts as "near zero"


def bucket_by_length(test_pairs, sentence_scores, k: int = 5) -> LengthBucketReport:
    """Equal-frequency buckets of source character length vs sentence score.

    test_pairs may be SentencePair-like objects (source length is taken from
    .source) or plain integer lengths.
    """
    if k < 2:
        raise ValueError(f"need at least 2 buckets, got {k}")
    lengths = [p if isinstance(p, int) else len(p.source) for p in test_pairs]
    scores = list(sentence_scores)
    if len(lengths) != len(scores):
        raise ValueError("scores are not aligned to pairs")
    if len(lengths) < k:
        raise ValueError(f"{len(lengths)} pairs is fewer than {k} buckets")

    qs = [i / k for i in range(1, k)]
    boundaries = tuple(float(b) for b in np.quantile(lengths, qs))
    idx = np.searchsorted(boundaries, lengths, side="left")

    buckets = []
    lo = float(min(lengths))
    for b in range(k):
        hi = boundaries[b] if b < k - 1 else float(max(lengths))
        sample = tuple(s for s, g in zip(scores, idx) if g == b)
        if sample:
            arr = np.asarray(sample)
            buckets.append(BucketStats(
                low=lo, high=hi, count=len(sample),
                mean=float(arr.mean()), median=float(np.median(arr)),
                frac_near_zero=float((arr < NEAR_ZERO_SCORE).mean()),
                scores=sample,
            ))
        else:
            buckets.append(BucketStats(low=lo, high=hi, count=0, mean=0.0,
                                       median=0.0, frac_near_zero=0.0, scores=()))
        lo = hi
    if any(b.count == 0 for b in buckets):
        warnings.warn(
            "degenerate length distribution: some buckets are empty",
            stacklevel=2,
        )
    return LengthBucketReport(boundaries=boundaries, buckets=tuple(buckets))


def write_sentence_csv(path, ids, src_lengths, std_scores, floor_scores,
                       addk_scores) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "src_len", "bleu_std", "bleu_floor", "bleu_addk"])
        for row in zip(ids, src_lengths, std_scores, floor_scores, addk_scores):
            w.writerow([row[0], row[1], f"{row[2]:.4f}", f"{row[3]:.4f}",
                        f"{row[4]:.4f}"])


def write_bucket_csv(path, report: LengthBucketReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bucket", "low", "high", "count", "mean_bleu",
                    "median_bleu", "frac_near_zero"])
        for b, st in enumerate(report.buckets):
            w.writerow([b, f"{st.low:.4g}", f"{st.high:.4g}", st.count,
                        f"{st.mean:.4f}", f"{st.median:.4f}",
                        f"{st.frac_near_zero:.4f}"])


def emit_report(ids, src_lengths, std_scores, floor_scores, addk_scores,
                bucket_report: LengthBucketReport | None, out_dir) -> str:
    """Write per-sentence and per-bucket CSVs; returns a text summary."""
    ids = list(ids)
    os.makedirs(out_dir, exist_ok=True)
    write_sentence_csv(os.path.join(out_dir, "sentence_scores.csv"),
                       ids, src_lengths, std_scores, floor_scores, addk_scores)
    lines = [f"sentences: {len(ids)}"]
    if bucket_report is not None:
        write_bucket_csv(os.path.join(out_dir, "length_buckets.csv"),
                         bucket_report)
        for b, st in enumerate(bucket_report.buckets):
            lines.append(
                f"bucket {b} [{st.low:.4g}, {st.high:.4g}]: n={st.count} "
                f"mean={st.mean:.2f} median={st.median:.2f} "
                f"near_zero={st.frac_near_zero:.0%}"
            )
    summary = "\n".join(lines) + "\n"
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8",
              newline="\n") as f:
        f.write(summary)
    return summary
