"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 dependency error.
"""

import argparse
import os
import sys

from . import alignment as al
from . import bpe as bp
from . import decoder as dec
from . import evaluation as ev
from . import ngram_lm as lm_mod
from . import phrase_table as pt
from .config import PipelineConfig, validate_config
from .corpus import load_parallel, save_parallel, filter_by_length, split
from .errors import DataError, DependencyError
from .icl import EndpointConfig, PromptTemplate, build_prompt, run_icl, sample_exemplars
from .pipeline import STAGE_ORDER, run_pipeline


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _read_token_lines(path):
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line.split() for line in lines]


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")


def _load_weights(path) -> dec.DecoderWeights:
    """Weights file: key = value lines (lm, phrase, distortion, word_penalty)."""
    kw = {}
    with open(path, encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            if key == "phrase":
                kw["phrase"] = tuple(float(x) for x in value.split())
            elif key in ("lm", "distortion", "word_penalty"):
                kw[key] = float(value)
            else:
                raise DataError(f"{path}: unknown weight {key!r}")
    return dec.DecoderWeights(**kw)


def cmd_prepare(args):
    corpus = load_parallel(args.corpus)
    corpus = filter_by_length(corpus, args.max_src_chars, args.max_tgt_chars)
    train, test = split(corpus, args.train_fraction, args.seed)
    save_parallel(train, args.out_train)
    save_parallel(test, args.out_test)
    print(f"prepared {len(train)} train / {len(test)} test pairs")


def cmd_train_tokenizer(args):
    lines = []
    for path in args.input:
        with open(path, encoding="utf-8") as f:
            for raw in f:
                line = raw.rstrip("\n")
                # TSV corpora contribute both sides to the unified vocabulary
                lines.extend(line.split("\t") if "\t" in line else [line])
    if args.char_mode:
        model = bp.train_char_tokenizer(lines)
    else:
        model = bp.train_bpe(lines, vocab_size=args.vocab_size)
    bp.save_bpe(model, args.out)
    print(f"trained tokenizer: {len(model.vocab)} tokens, "
          f"{len(model.merges)} merges -> {args.out}")


def cmd_tokenize(args):
    model = bp.load_bpe(args.model)
    out = []
    with open(args.input, encoding="utf-8") as f:
        for raw in f:
            out.append(" ".join(bp.encode(model, raw.rstrip("\n")).surface))
    _write_lines(args.out, out)


def cmd_train_lm(args):
    sentences = _read_token_lines(args.input)
    lm = lm_mod.train_lm(sentences, order=args.order)
    lm_mod.save_arpa(lm, args.out)
    print(f"trained {args.order}-gram LM over {len(sentences)} sentences -> {args.out}")


def cmd_align(args):
    src = _read_token_lines(args.src)
    tgt = _read_token_lines(args.tgt)
    if len(src) != len(tgt):
        raise DataError(f"{len(src)} source lines vs {len(tgt)} target lines")
    pairs = list(zip(src, tgt))
    if args.dir in ("fwd", "both"):
        fwd = al.train_model1(pairs, iterations=args.iters, direction="fwd")
        if args.fwd_table:
            al.save_table(fwd, args.fwd_table)
    if args.dir in ("rev", "both"):
        rev = al.train_model1([(t, s) for s, t in pairs],
                              iterations=args.iters, direction="rev")
        if args.rev_table:
            al.save_table(rev, args.rev_table)
    if args.out:
        if args.dir == "both":
            aligns = [
                al.symmetrize(
                    al.viterbi_align(fwd, s, t),
                    al.viterbi_align(rev, t, s).transposed(),
                )
                for s, t in pairs
            ]
        elif args.dir == "fwd":
            aligns = [al.viterbi_align(fwd, s, t) for s, t in pairs]
        else:
            aligns = [al.viterbi_align(rev, t, s).transposed() for s, t in pairs]
        al.save_alignments(aligns, args.out)
    print(f"aligned {len(pairs)} pairs ({args.dir})")


def cmd_extract_phrases(args):
    src = _read_token_lines(args.src)
    tgt = _read_token_lines(args.tgt)
    aligns = al.load_alignments(
        args.align, [(len(s), len(t)) for s, t in zip(src, tgt)]
    )
    fwd = al.load_table(args.fwd_table)
    rev = al.load_table(args.rev_table)

    def extractions():
        for s, t, a in zip(src, tgt, aligns):
            yield from pt.extract_phrases(s, t, a, max_len=args.max_len)

    table = pt.build_table(extractions(), fwd, rev, max_len=args.max_len)
    pt.save_table_binary(table, args.out)
    if args.text_out:
        pt.save_table_text(table, args.text_out)
    print(f"phrase table with {len(table)} entries -> {args.out}")


def cmd_decode(args):
    table = pt.load_table_binary(args.table)
    lm = lm_mod.load_arpa(args.lm)
    weights = _load_weights(args.weights) if args.weights else dec.DEFAULT_WEIGHTS
    dl = args.dl if args.dl >= 0 else None
    sources = _read_token_lines(args.input)
    outputs = []
    nbest_lists = []
    for src in sources:
        if args.nbest > 0:
            entries = dec.nbest(src, table, lm, weights, n=args.nbest,
                                stack_size=args.stack, distortion_limit=dl)
            nbest_lists.append(entries)
            best_tokens = entries[0].tokens
        else:
            best_tokens = dec.decode(src, table, lm, weights,
                                     stack_size=args.stack,
                                     distortion_limit=dl).output
        if args.detokenize:
            outputs.append(bp.detokenize(best_tokens))
        else:
            outputs.append(" ".join(best_tokens))
    _write_lines(args.output, outputs)
    if args.nbest > 0 and args.nbest_out:
        dec.write_nbest(args.nbest_out, nbest_lists)
    print(f"decoded {len(sources)} sentences -> {args.output}")


def _split_lines(path):
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def cmd_score(args):
    hyps = _split_lines(args.hyp)
    refs = _split_lines(args.ref)
    if len(hyps) != len(refs):
        raise DataError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    smoothing = ev.Smoothing.parse(args.smoothing)
    res = ev.bleu_corpus([h.split() for h in hyps],
                         [r.split() for r in refs], smoothing)
    sent = [ev.bleu_sentence(h.split(), r.split(), smoothing).score
            for h, r in zip(hyps, refs)]
    mean_sent = sum(sent) / len(sent)
    print(f"corpus BLEU ({smoothing}): {res.score:.4f}")
    print(f"mean sentence BLEU ({smoothing}): {mean_sent:.4f}")
    print("precisions: " + " ".join(f"{p:.4f}" for p in res.precisions)
          + f"  BP={res.brevity_penalty:.4f}")


def cmd_analyze(args):
    hyps = _split_lines(args.hyp)
    refs = _split_lines(args.ref)
    srcs = _split_lines(args.src)
    if not len(hyps) == len(refs) == len(srcs):
        raise DataError("hyp/ref/src line counts differ")
    std, floor, addk = [], [], []
    for h, r in zip(hyps, refs):
        ht, rt = h.split(), r.split()
        std.append(ev.bleu_sentence(ht, rt, ev.SMOOTH_NONE).score)
        floor.append(ev.bleu_sentence(ht, rt, ev.SMOOTH_FLOOR).score)
        addk.append(ev.bleu_sentence(ht, rt, ev.SMOOTH_ADDK).score)
    lengths = [len(s) for s in srcs]
    report = ev.bucket_by_length(lengths, std, k=args.buckets)
    summary = ev.emit_report(range(len(hyps)), lengths, std, floor, addk,
                             report, args.out_dir)
    print(summary, end="")


def cmd_icl(args):
    train = load_parallel(args.train)
    with open(args.template, encoding="utf-8") as f:
        pattern = f.read().rstrip("\n")
    template = PromptTemplate(pattern=pattern, separator=args.separator)
    exemplars = sample_exemplars(train, k=args.k, seed=args.seed)
    srcs = _split_lines(args.src)
    prompts = [build_prompt(template, exemplars, s) for s in srcs[: args.limit]]
    config = EndpointConfig(base_url=args.endpoint, model=args.model,
                            auth_env=args.auth_env,
                            concurrency=args.concurrency)
    hyps = run_icl(config, prompts, test_limit=args.limit,
                   audit_path=args.audit)
    _write_lines(args.out, [h.replace("\n", " ") for h in hyps])
    print(f"collected {len(hyps)} hypotheses -> {args.out}")


def cmd_run(args):
    cfg = validate_config(args.config) if args.config else PipelineConfig()
    if args.workdir:
        cfg.workdir = args.workdir
    if args.seed is not None:
        cfg.seed = args.seed
    stages = args.stages.split(",") if args.stages else None
    manifest = run_pipeline(cfg, stages=stages, jobs=args.jobs)
    for stage, rec in manifest["stages"].items():
        state = "cached" if rec.get("cached") else f"{rec['wall_time_s']:.2f}s"
        print(f"{stage}: {state}")


def build_parser() -> _Parser:
    p = _Parser(prog="pbsmt", description=__doc__)
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--seed", type=int, default=None, help="global random seed")
    p.add_argument("--workdir", help="pipeline work directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prepare", help="load, filter, and split a corpus")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out-train", required=True)
    sp.add_argument("--out-test", required=True)
    sp.add_argument("--max-src-chars", type=int, default=128)
    sp.add_argument("--max-tgt-chars", type=int, default=1024)
    sp.add_argument("--train-fraction", type=float, default=0.8)
    sp.add_argument("--seed", type=int, default=13)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train-tokenizer", help="learn a joint BPE vocabulary")
    sp.add_argument("--vocab-size", type=int, default=10000)
    sp.add_argument("--input", nargs="+", required=True,
                    help="text or TSV files; TSV contributes both sides")
    sp.add_argument("--out", required=True)
    sp.add_argument("--char-mode", action="store_true")
    sp.set_defaults(func=cmd_train_tokenizer)

    sp = sub.add_parser("tokenize", help="apply a tokenizer model to text")
    sp.add_argument("--model", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_tokenize)

    sp = sub.add_parser("train-lm", help="train the target n-gram LM")
    sp.add_argument("--order", type=int, default=3)
    sp.add_argument("--in", dest="input", required=True,
                    help="tokenized sentences, one per line")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train_lm)

    sp = sub.add_parser("align", help="train Model 1 and write alignments")
    sp.add_argument("--iters", type=int, default=10)
    sp.add_argument("--dir", choices=("fwd", "rev", "both"), default="both")
    sp.add_argument("--src", required=True, help="tokenized source file")
    sp.add_argument("--tgt", required=True, help="tokenized target file")
    sp.add_argument("--fwd-table")
    sp.add_argument("--rev-table")
    sp.add_argument("--out", help="Pharaoh alignment output")
    sp.set_defaults(func=cmd_align)

    sp = sub.add_parser("extract-phrases", help="build the phrase table")
    sp.add_argument("--max-len", type=int, default=7)
    sp.add_argument("--src", required=True)
    sp.add_argument("--tgt", required=True)
    sp.add_argument("--align", required=True)
    sp.add_argument("--fwd-table", required=True)
    sp.add_argument("--rev-table", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--text-out", help="also write the Moses-style debug table")
    sp.set_defaults(func=cmd_extract_phrases)

    sp = sub.add_parser("decode", help="translate tokenized sentences")
    sp.add_argument("--table", required=True)
    sp.add_argument("--lm", required=True)
    sp.add_argument("--weights", help="key = value weights file")
    sp.add_argument("--nbest", type=int, default=0)
    sp.add_argument("--nbest-out")
    sp.add_argument("--stack", type=int, default=100)
    sp.add_argument("--dl", type=int, default=6,
                    help="distortion limit; -1 for unlimited")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--detokenize", action="store_true")
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("score", help="corpus BLEU of hypotheses vs references")
    sp.add_argument("--smoothing", default="none",
                    help="none | floor=0.1 | addk=1")
    sp.add_argument("--buckets", type=int, default=5)
    sp.add_argument("--hyp", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--src")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("analyze", help="length-bucket score distribution")
    sp.add_argument("--hyp", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--src", required=True)
    sp.add_argument("--buckets", type=int, default=5)
    sp.add_argument("--out-dir", default="reports")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("icl", help="k-shot prompting against an endpoint")
    sp.add_argument("--endpoint", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--k", type=int, default=20)
    sp.add_argument("--limit", type=int, default=1000)
    sp.add_argument("--template", required=True,
                    help="file holding the prompt pattern with {src} and {tgt}")
    sp.add_argument("--separator", default="\n")
    sp.add_argument("--train", required=True, help="exemplar TSV corpus")
    sp.add_argument("--src", required=True, help="test source sentences")
    sp.add_argument("--out", required=True)
    sp.add_argument("--audit")
    sp.add_argument("--auth-env")
    sp.add_argument("--concurrency", type=int, default=4)
    sp.add_argument("--seed", type=int, default=13)
    sp.set_defaults(func=cmd_icl)

    sp = sub.add_parser("run", help="run pipeline stages from a config")
    sp.add_argument("--stages", help="comma-separated subset, e.g. prepare,decode")
    sp.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and not args.config:
        parser.error("run requires --config")
    try:
        args.func(args)
    except DependencyError as e:
        print(f"pbsmt: dependency error: {e}", file=sys.stderr)
        return 3
    except DataError as e:
        print(f"pbsmt: data error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"pbsmt: data error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
