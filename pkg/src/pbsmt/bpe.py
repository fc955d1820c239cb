"""Byte-pair-encoding subword tokenizer with a shared source+target vocabulary.

Words are marked SentencePiece-style: every whitespace-delimited word gets a
leading word-boundary symbol (default U+2581) as its own initial symbol, so
detokenization is unambiguous. Training starts from full character coverage
(reserved tokens + every distinct input character) and then applies the
highest-frequency adjacent-pair merge until the vocabulary target is reached
or no pair occurs at least twice. Ties between equally frequent pairs are
broken by lexicographic order of (left, right) so training is deterministic.
"""

from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .errors import DataError

UNK = "<unk>"
BOS = "<s>"
EOS = "</s>"
RESERVED = (UNK, BOS, EOS)
META = "▁"


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple[int, ...]
    surface: tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.surface):
            raise ValueError("tokens and surface must have equal length")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class BpeModel:
    merges: tuple[tuple[str, str], ...]
    vocab: dict[str, int]
    meta_symbol: str = META
    vocab_size_target: int = 0
    _ranks: dict[tuple[str, str], int] = field(init=False, repr=False)
    _id_to_token: tuple[str, ...] = field(init=False, repr=False)
    _word_cache: dict[str, tuple[str, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        inv = {i: tok for tok, i in self.vocab.items()}
        self._id_to_token = tuple(inv[i] for i in range(len(inv)))
        self._word_cache = {}


def _word_symbols(word: str, meta: str) -> list[str]:
    return [meta, *word]


def train_bpe(
    unified_text,
    vocab_size: int = 10000,
    meta_symbol: str = META,
) -> BpeModel:
    """Learn a BPE model from text lines drawn from both corpus sides.

    Args:
        unified_text: iterable of text lines (source and target mixed).
        vocab_size: total vocabulary budget, reserved tokens included.
    """
    word_freq = Counter()
    for line in unified_text:
        word_freq.update(line.split())
    if not word_freq:
        raise ValueError("cannot train BPE on empty input")

    chars = set(meta_symbol)
    for word in word_freq:
        chars.update(word)
    base_size = len(RESERVED) + len(chars)
    if vocab_size <= base_size:
        raise ValueError(
            f"vocab_size {vocab_size} too small for character coverage: "
            f"need > {base_size} ({len(RESERVED)} reserved + {len(chars)} characters)"
        )

    vocab: dict[str, int] = {tok: i for i, tok in enumerate(RESERVED)}
    for ch in sorted(chars):
        vocab[ch] = len(vocab)

    # indexed pair statistics, updated incrementally as merges are applied
    words = [(_word_symbols(w, meta_symbol), f) for w, f in sorted(word_freq.items())]
    pair_counts: Counter = Counter()
    pair_words: dict[tuple[str, str], set[int]] = defaultdict(set)
    for idx, (syms, freq) in enumerate(words):
        for a, b in zip(syms, syms[1:]):
            pair_counts[(a, b)] += freq
            pair_words[(a, b)].add(idx)

    merges: list[tuple[str, str]] = []
    while len(vocab) < vocab_size and pair_counts:
        best, best_count = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if best_count < 2:
            break
        merges.append(best)
        new_tok = best[0] + best[1]
        if new_tok not in vocab:
            vocab[new_tok] = len(vocab)
        for idx in sorted(pair_words.pop(best, ())):
            syms, freq = words[idx]
            for a, b in zip(syms, syms[1:]):
                pair_counts[(a, b)] -= freq
                if pair_counts[(a, b)] <= 0:
                    del pair_counts[(a, b)]
                pair_words[(a, b)].discard(idx)
            merged = _merge_once(syms, best, new_tok)
            words[idx] = (merged, freq)
            for a, b in zip(merged, merged[1:]):
                pair_counts[(a, b)] += freq
                pair_words[(a, b)].add(idx)

    return BpeModel(
        merges=tuple(merges),
        vocab=vocab,
        meta_symbol=meta_symbol,
        vocab_size_target=vocab_size,
    )


def train_char_tokenizer(unified_text, meta_symbol: str = META) -> BpeModel:
    """Character-level degenerate tokenizer: full coverage, zero merges."""
    chars = set(meta_symbol)
    seen = False
    for line in unified_text:
        for word in line.split():
            seen = True
            chars.update(word)
    if not seen:
        raise ValueError("cannot train tokenizer on empty input")
    vocab = {tok: i for i, tok in enumerate(RESERVED)}
    for ch in sorted(chars):
        vocab[ch] = len(vocab)
    return BpeModel(
        merges=(),
        vocab=vocab,
        meta_symbol=meta_symbol,
        vocab_size_target=len(vocab),
    )


def _merge_once(syms: list[str], pair: tuple[str, str], new_tok: str) -> list[str]:
    """Replace every left-to-right occurrence of pair in a symbol list."""
    out = []
    i = 0
    a, b = pair
    while i < len(syms):
        if i + 1 < len(syms) and syms[i] == a and syms[i + 1] == b:
            out.append(new_tok)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return out


def _encode_word(model: BpeModel, word: str) -> tuple[str, ...]:
    cached = model._word_cache.get(word)
    if cached is not None:
        return cached
    ranks = model._ranks
    syms = _word_symbols(word, model.meta_symbol)
    # repeatedly apply the earliest-learned merge present; equivalent to
    # replaying the merge list in order, but skips merges that cannot fire
    while len(syms) > 1:
        best_rank = None
        best_pos = -1
        for i in range(len(syms) - 1):
            r = ranks.get((syms[i], syms[i + 1]))
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
                best_pos = i
        if best_rank is None:
            break
        syms[best_pos : best_pos + 2] = [syms[best_pos] + syms[best_pos + 1]]
    surface = tuple(s if s in model.vocab else UNK for s in syms)
    model._word_cache[word] = surface
    return surface


def encode(model: BpeModel, text: str) -> TokenSeq:
    """Tokenize text; characters unseen in training become <unk>."""
    surface: list[str] = []
    for word in text.split():
        surface.extend(_encode_word(model, word))
    vocab = model.vocab
    return TokenSeq(
        tokens=tuple(vocab[s] for s in surface),
        surface=tuple(surface),
    )


def decode(model: BpeModel, tokens) -> str:
    """Invert encode: concatenate surfaces, boundary symbols become spaces."""
    if isinstance(tokens, TokenSeq):
        ids = tokens.tokens
    else:
        ids = tuple(tokens)
    n = len(model._id_to_token)
    for i in ids:
        if not 0 <= i < n:
            raise ValueError(f"token id {i} out of range [0, {n})")
    joined = "".join(model._id_to_token[i] for i in ids)
    return joined.replace(model.meta_symbol, " ").removeprefix(" ")


def detokenize(surface, meta_symbol: str = META) -> str:
    """Turn a sequence of surface tokens back into plain text."""
    return "".join(surface).replace(meta_symbol, " ").removeprefix(" ").rstrip()


def save_bpe(model: BpeModel, path) -> None:
    """Text format: header, vocab entries, '#merges' sentinel, merge list."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{model.vocab_size_target}\t{model.meta_symbol}\n")
        for tok, i in sorted(model.vocab.items(), key=lambda kv: kv[1]):
            f.write(f"{tok}\t{i}\n")
        f.write("#merges\n")
        for left, right in model.merges:
            f.write(f"{left}\t{right}\n")


def load_bpe(path) -> BpeModel:
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataError(f"{path}: empty tokenizer model file")
    head = lines[0].split("\t")
    if len(head) != 2:
        raise DataError(f"{path}: bad tokenizer model header")
    vocab_size_target = int(head[0])
    meta_symbol = head[1]
    vocab: dict[str, int] = {}
    merges: list[tuple[str, str]] = []
    in_merges = False
    for line in lines[1:]:
        if line == "#merges":
            in_merges = True
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}: bad tokenizer model line: {line!r}")
        if in_merges:
            merges.append((parts[0], parts[1]))
        else:
            vocab[parts[0]] = int(parts[1])
    return BpeModel(
        merges=tuple(merges),
        vocab=vocab,
        meta_symbol=meta_symbol,
        vocab_size_target=vocab_size_target,
    )
