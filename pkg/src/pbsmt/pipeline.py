"""Pipeline orchestration: stage graph, content-hash caching, run manifests.

Stages run in dependency order inside a locked work directory. Every stage
records the hashes of its inputs, its stage-relevant parameters and its
outputs in manifest.json; a stage is skipped on re-run only when all three
still match, so stale artifacts are never silently reused, and iterating on
decoder weights does not retrigger alignment.
"""

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor

from . import alignment as al
from . import bpe as bp
from . import decoder as dec
from . import evaluation as ev
from . import ngram_lm as lm_mod
from . import phrase_table as pt
from .config import PipelineConfig, config_text
from .corpus import load_parallel, save_parallel, filter_by_length, split
from .errors import DataError, DependencyError
from .icl import EndpointConfig, PromptTemplate, build_prompt, run_icl, sample_exemplars

STAGE_ORDER = (
    "prepare", "train-tokenizer", "train-lm", "align",
    "extract-phrases", "decode", "score", "analyze", "icl",
)

# stage -> (workdir-relative inputs, outputs, config attributes in its hash)
_STAGES = {
    "prepare": ((), ("train.tsv", "test.tsv"),
                ("max_src_chars", "max_tgt_chars", "train_fraction", "seed")),
    "train-tokenizer": (("train.tsv",), ("tokenizer.bpe",),
                        ("vocab_size", "char_mode")),
    "train-lm": (("train.tsv", "tokenizer.bpe"), ("lm.arpa",), ("lm_order",)),
    "align": (("train.tsv", "tokenizer.bpe"),
              ("fwd_table.tsv", "rev_table.tsv", "sym.align"),
              ("align_iterations",)),
    "extract-phrases": (("train.tsv", "tokenizer.bpe", "fwd_table.tsv",
                         "rev_table.tsv", "sym.align"),
                        ("phrase_table.bin",), ("phrase_max_len",)),
    "decode": (("test.tsv", "tokenizer.bpe", "phrase_table.bin", "lm.arpa"),
               ("hypotheses.txt",),
               ("stack_size", "distortion_limit", "nbest", "weight_lm",
                "weight_phrase", "weight_distortion", "weight_word_penalty")),
    "score": (("hypotheses.txt", "test.tsv"),
              (os.path.join("reports", "sentence_scores.csv"),
               os.path.join("reports", "corpus_bleu.txt")),
              ("smoothing",)),
    "analyze": (("hypotheses.txt", "test.tsv"),
                (os.path.join("reports", "length_buckets.csv"),),
                ("buckets",)),
    "icl": (("train.tsv", "test.tsv"),
            ("icl_hypotheses.txt", "icl_audit.jsonl"),
            ("icl_endpoint", "icl_model", "icl_k", "icl_limit",
             "icl_template", "icl_separator", "seed")),
}


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _params_of(cfg: PipelineConfig, stage: str) -> dict:
    params = {}
    for attr in _STAGES[stage][2]:
        v = getattr(cfg, attr)
        params[attr] = list(v) if isinstance(v, tuple) else v
    return params


def _hash_params(params: dict) -> str:
    return hashlib.sha256(
        json.dumps(params, sort_keys=True).encode("utf-8")
    ).hexdigest()


def _encode_lines(model, lines):
    return [bp.encode(model, line).surface for line in lines]


# ---------------------------------------------------------------------------
# stage implementations


def _run_prepare(cfg, wd):
    corpus = load_parallel(cfg.corpus)
    corpus = filter_by_length(corpus, cfg.max_src_chars, cfg.max_tgt_chars)
    train, test = split(corpus, cfg.train_fraction, cfg.seed)
    save_parallel(train, os.path.join(wd, "train.tsv"))
    save_parallel(test, os.path.join(wd, "test.tsv"))


def _run_train_tokenizer(cfg, wd):
    train = load_parallel(os.path.join(wd, "train.tsv"))
    lines = [p.source for p in train] + [p.target for p in train]
    if cfg.char_mode:
        model = bp.train_char_tokenizer(lines)
    else:
        model = bp.train_bpe(lines, vocab_size=cfg.vocab_size)
    bp.save_bpe(model, os.path.join(wd, "tokenizer.bpe"))


def _run_train_lm(cfg, wd):
    train = load_parallel(os.path.join(wd, "train.tsv"))
    model = bp.load_bpe(os.path.join(wd, "tokenizer.bpe"))
    tgt_tokens = _encode_lines(model, [p.target for p in train])
    lm = lm_mod.train_lm(tgt_tokens, order=cfg.lm_order)
    lm_mod.save_arpa(lm, os.path.join(wd, "lm.arpa"))


def _run_align(cfg, wd):
    train = load_parallel(os.path.join(wd, "train.tsv"))
    model = bp.load_bpe(os.path.join(wd, "tokenizer.bpe"))
    src = _encode_lines(model, [p.source for p in train])
    tgt = _encode_lines(model, [p.target for p in train])
    pairs = list(zip(src, tgt))
    fwd = al.train_model1(pairs, iterations=cfg.align_iterations, direction="fwd")
    rev = al.train_model1([(t, s) for s, t in pairs],
                          iterations=cfg.align_iterations, direction="rev")
    al.save_table(fwd, os.path.join(wd, "fwd_table.tsv"))
    al.save_table(rev, os.path.join(wd, "rev_table.tsv"))
    sym = []
    for s, t in pairs:
        f_al = al.viterbi_align(fwd, s, t)
        b_al = al.viterbi_align(rev, t, s).transposed()
        sym.append(al.symmetrize(f_al, b_al))
    al.save_alignments(sym, os.path.join(wd, "sym.align"))


def _run_extract_phrases(cfg, wd):
    train = load_parallel(os.path.join(wd, "train.tsv"))
    model = bp.load_bpe(os.path.join(wd, "tokenizer.bpe"))
    src = _encode_lines(model, [p.source for p in train])
    tgt = _encode_lines(model, [p.target for p in train])
    fwd = al.load_table(os.path.join(wd, "fwd_table.tsv"))
    rev = al.load_table(os.path.join(wd, "rev_table.tsv"))
    aligns = al.load_alignments(
        os.path.join(wd, "sym.align"),
        [(len(s), len(t)) for s, t in zip(src, tgt)],
    )
    def all_extractions():
        for s, t, a in zip(src, tgt, aligns):
            yield from pt.extract_phrases(s, t, a, max_len=cfg.phrase_max_len)
    table = pt.build_table(all_extractions(), fwd, rev, max_len=cfg.phrase_max_len)
    pt.save_table_binary(table, os.path.join(wd, "phrase_table.bin"))


def _decode_chunk(args):
    table_path, lm_path, sources, weights_tuple, stack_size, dl, n_best, meta = args
    table = pt.load_table_binary(table_path)
    lm = lm_mod.load_arpa(lm_path)
    weights = dec.DecoderWeights(
        lm=weights_tuple[0], phrase=tuple(weights_tuple[1]),
        distortion=weights_tuple[2], word_penalty=weights_tuple[3],
    )
    out = []
    for src in sources:
        if n_best > 0:
            entries = dec.nbest(src, table, lm, weights, n=n_best,
                                stack_size=stack_size, distortion_limit=dl)
            text = bp.detokenize(entries[0].tokens, meta)
            out.append((text, [(e.tokens, e.features, e.score) for e in entries]))
        else:
            hyp = dec.decode(src, table, lm, weights,
                             stack_size=stack_size, distortion_limit=dl)
            out.append((bp.detokenize(hyp.output, meta), None))
    return out


def _run_decode(cfg, wd, jobs=1):
    test = load_parallel(os.path.join(wd, "test.tsv"))
    model = bp.load_bpe(os.path.join(wd, "tokenizer.bpe"))
    sources = _encode_lines(model, [p.source for p in test])
    dl = cfg.distortion_limit if cfg.distortion_limit >= 0 else None
    weights_tuple = (cfg.weight_lm, list(cfg.weight_phrase),
                     cfg.weight_distortion, cfg.weight_word_penalty)
    table_path = os.path.join(wd, "phrase_table.bin")
    lm_path = os.path.join(wd, "lm.arpa")

    if jobs > 1 and len(sources) > 1:
        chunks = [sources[i::jobs] for i in range(jobs)]
        args = [(table_path, lm_path, chunk, weights_tuple, cfg.stack_size,
                 dl, cfg.nbest, model.meta_symbol) for chunk in chunks]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk_results = list(pool.map(_decode_chunk, args))
        results = [None] * len(sources)
        for lane, res in enumerate(chunk_results):
            for k, item in enumerate(res):
                results[lane + k * jobs] = item
    else:
        results = _decode_chunk((table_path, lm_path, sources, weights_tuple,
                                 cfg.stack_size, dl, cfg.nbest,
                                 model.meta_symbol))

    with open(os.path.join(wd, "hypotheses.txt"), "w", encoding="utf-8",
              newline="\n") as f:
        for text, _ in results:
            f.write(text + "\n")
    if cfg.nbest > 0:
        lists = [
            [dec.NBestEntry(tokens=t, features=ft, score=s) for t, ft, s in entries]
            for _text, entries in results
        ]
        dec.write_nbest(os.path.join(wd, "nbest.txt"), lists)


def _load_hyp_ref(wd):
    test = load_parallel(os.path.join(wd, "test.tsv"))
    with open(os.path.join(wd, "hypotheses.txt"), encoding="utf-8") as f:
        hyps = f.read().split("\n")
    if hyps and hyps[-1] == "":
        hyps.pop()
    if len(hyps) != len(test):
        raise DataError(f"{len(hyps)} hypotheses for {len(test)} test pairs")
    return test, hyps


def _sentence_scores(hyps, refs):
    per = {"std": [], "floor": [], "addk": []}
    for h, r in zip(hyps, refs):
        ht, rt = h.split(), r.split()
        per["std"].append(ev.bleu_sentence(ht, rt, ev.SMOOTH_NONE).score)
        per["floor"].append(ev.bleu_sentence(ht, rt, ev.SMOOTH_FLOOR).score)
        per["addk"].append(ev.bleu_sentence(ht, rt, ev.SMOOTH_ADDK).score)
    return per


def _run_score(cfg, wd):
    test, hyps = _load_hyp_ref(wd)
    refs = [p.target for p in test]
    reports = os.path.join(wd, "reports")
    os.makedirs(reports, exist_ok=True)
    per = _sentence_scores(hyps, refs)
    ev.write_sentence_csv(
        os.path.join(reports, "sentence_scores.csv"),
        [p.id for p in test], [len(p.source) for p in test],
        per["std"], per["floor"], per["addk"],
    )
    selected = ev.Smoothing.parse(cfg.smoothing)  # validates the config value
    lines = [f"configured smoothing: {selected}"]
    for label, smoothing, key in (("standard", ev.SMOOTH_NONE, "std"),
                                  ("floor=0.1", ev.SMOOTH_FLOOR, "floor"),
                                  ("addk=1", ev.SMOOTH_ADDK, "addk")):
        corpus_res = ev.bleu_corpus([h.split() for h in hyps],
                                    [r.split() for r in refs], smoothing)
        mean_sent = sum(per[key]) / len(per[key])
        lines.append(f"{label}: corpus={corpus_res.score:.4f} "
                     f"mean_sentence={mean_sent:.4f}")
    with open(os.path.join(reports, "corpus_bleu.txt"), "w",
              encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _run_analyze(cfg, wd):
    test, hyps = _load_hyp_ref(wd)
    refs = [p.target for p in test]
    std = [ev.bleu_sentence(h.split(), r.split(), ev.SMOOTH_NONE).score
           for h, r in zip(hyps, refs)]
    report = ev.bucket_by_length(list(test), std, k=cfg.buckets)
    reports = os.path.join(wd, "reports")
    os.makedirs(reports, exist_ok=True)
    ev.write_bucket_csv(os.path.join(reports, "length_buckets.csv"), report)


def _run_icl(cfg, wd):
    if not cfg.icl_endpoint:
        raise DataError("icl stage requested but [icl] endpoint is not set")
    train = load_parallel(os.path.join(wd, "train.tsv"))
    test = load_parallel(os.path.join(wd, "test.tsv"))
    template = PromptTemplate(pattern=cfg.icl_template,
                              separator=cfg.icl_separator)
    exemplars = sample_exemplars(train, k=cfg.icl_k, seed=cfg.seed)
    prompts = [build_prompt(template, exemplars, p.source)
               for p in test[: cfg.icl_limit]]
    endpoint = EndpointConfig(
        base_url=cfg.icl_endpoint, model=cfg.icl_model,
        auth_env=cfg.icl_auth_env or None, concurrency=cfg.icl_concurrency,
    )
    hyps = run_icl(endpoint, prompts, test_limit=cfg.icl_limit,
                   audit_path=os.path.join(wd, "icl_audit.jsonl"))
    with open(os.path.join(wd, "icl_hypotheses.txt"), "w", encoding="utf-8",
              newline="\n") as f:
        for h in hyps:
            f.write(h.replace("\n", " ") + "\n")


_RUNNERS = {
    "prepare": _run_prepare,
    "train-tokenizer": _run_train_tokenizer,
    "train-lm": _run_train_lm,
    "align": _run_align,
    "extract-phrases": _run_extract_phrases,
    "decode": _run_decode,
    "score": _run_score,
    "analyze": _run_analyze,
    "icl": _run_icl,
}


def run_pipeline(cfg: PipelineConfig, stages=None, jobs: int | None = None) -> dict:
    """Execute the requested stages in dependency order; returns the manifest."""
    if stages is None:
        requested = [s for s in STAGE_ORDER if s != "icl"]
    else:
        requested = list(stages)
        unknown = [s for s in requested if s not in _STAGES]
        if unknown:
            raise DataError(f"unknown stage(s): {', '.join(unknown)}")
        requested = [s for s in STAGE_ORDER if s in requested]
    jobs = jobs if jobs is not None else cfg.jobs

    wd = cfg.workdir
    os.makedirs(wd, exist_ok=True)
    lock_path = os.path.join(wd, ".lock")
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DependencyError(
            f"work directory {wd} is locked by another run ({lock_path})"
        ) from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)

    manifest_path = os.path.join(wd, "manifest.json")
    try:
        previous = {}
        if os.path.exists(manifest_path):
            with open(manifest_path, encoding="utf-8") as f:
                previous = json.load(f).get("stages", {})

        manifest = {
            "config_hash": _hash_params({"config": config_text(cfg)}),
            "seed": cfg.seed,
            "stages": {},
        }
        produced = set()
        for stage in requested:
            rel_inputs, rel_outputs, _attrs = _STAGES[stage]
            inputs = {}
            if stage == "prepare":
                if not cfg.corpus or not os.path.exists(cfg.corpus):
                    raise DependencyError(
                        f"stage prepare: corpus file {cfg.corpus!r} not found"
                    )
                inputs[cfg.corpus] = file_hash(cfg.corpus)
            for rel in rel_inputs:
                path = os.path.join(wd, rel)
                if not os.path.exists(path):
                    raise DependencyError(
                        f"stage {stage}: missing input artifact {rel} "
                        f"(produce it with an earlier stage)"
                    )
                inputs[rel] = file_hash(path)
            params = _params_of(cfg, stage)
            params_hash = _hash_params(params)

            prev = previous.get(stage)
            out_paths = {rel: os.path.join(wd, rel) for rel in rel_outputs}
            cached = (
                prev is not None
                and prev.get("params_hash") == params_hash
                and prev.get("inputs") == inputs
                and all(os.path.exists(p) for p in out_paths.values())
                and all(
                    file_hash(p) == prev.get("outputs", {}).get(rel)
                    for rel, p in out_paths.items()
                )
            )
            t0 = time.perf_counter()
            if not cached:
                if stage == "decode":
                    _RUNNERS[stage](cfg, wd, jobs=jobs)
                else:
                    _RUNNERS[stage](cfg, wd)
            wall = time.perf_counter() - t0
            outputs = {rel: file_hash(p) for rel, p in out_paths.items()
                       if os.path.exists(p)}
            manifest["stages"][stage] = {
                "params": params,
                "params_hash": params_hash,
                "inputs": inputs,
                "outputs": outputs,
                "wall_time_s": round(wall, 6),
                "cached": cached,
            }
            produced.update(rel_outputs)
            # carry earlier stages' records forward so later reruns can reuse them
            previous[stage] = manifest["stages"][stage]

        merged = dict(previous)
        merged.update(manifest["stages"])
        manifest["stages"] = merged
        with open(manifest_path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
        return manifest
    finally:
        os.unlink(lock_path)
