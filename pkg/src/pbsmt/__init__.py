"""Phrase-based statistical MT with a joint source-target subword vocabulary.

The toolkit covers the full low-resource translation workflow: parallel
corpus preparation, joint BPE tokenization, Model 1 EM word alignment,
phrase extraction and scoring, n-gram language modeling, stack decoding
with n-best output, smoothed BLEU evaluation with length-bucket analysis,
and an in-context-learning client for comparing against LLM endpoints.
"""

from .corpus import (
    CorpusError,
    ParallelCorpus,
    SentencePair,
    filter_by_length,
    load_parallel,
    save_parallel,
    split,
)
from .bpe import (
    BOS,
    EOS,
    META,
    UNK,
    BpeModel,
    TokenSeq,
    decode as bpe_decode,
    detokenize,
    encode,
    load_bpe,
    save_bpe,
    train_bpe,
    train_char_tokenizer,
)
from .ngram_lm import (
    LanguageModel,
    conditional_logprob,
    load_arpa,
    perplexity,
    save_arpa,
    sentence_logprob,
    train_lm,
)
from .alignment import (
    Alignment,
    NULL_TOKEN,
    TranslationTable,
    symmetrize,
    train_model1,
    viterbi_align,
)
from .phrase_table import (
    Extraction,
    PhrasePair,
    PhraseTable,
    build_table,
    extract_phrases,
    load_table_binary,
    load_table_text,
    save_table_binary,
    save_table_text,
)
from .decoder import (
    DEFAULT_WEIGHTS,
    DecoderWeights,
    Hypothesis,
    NBestEntry,
    decode,
    estimate_future_cost,
    nbest,
    write_nbest,
)
from .evaluation import (
    BleuResult,
    LengthBucketReport,
    SMOOTH_ADDK,
    SMOOTH_FLOOR,
    SMOOTH_NONE,
    Smoothing,
    bleu_corpus,
    bleu_sentence,
    bucket_by_length,
    emit_report,
)
from .icl import (
    EndpointConfig,
    Exemplar,
    IclAuthError,
    PromptTemplate,
    build_prompt,
    run_icl,
    sample_exemplars,
)
from .config import ConfigError, PipelineConfig, parse_config, validate_config
from .errors import DataError, DependencyError
from .pipeline import run_pipeline

__version__ = "0.1.0"
