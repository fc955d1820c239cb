"""Line-oriented pipeline configuration: [section] headers, key = value lines.

validate_config parses the whole file and reports every problem at once
(unknown sections and keys, type mismatches, out-of-range values); unknown
keys come with a nearest-valid-key suggestion.
"""

import difflib
from dataclasses import dataclass

from .decoder import DecoderWeights
from .errors import DataError


class ConfigError(DataError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class PipelineConfig:
    corpus: str = ""
    workdir: str = "work"
    max_src_chars: int = 128
    max_tgt_chars: int = 1024
    train_fraction: float = 0.8
    seed: int = 13
    vocab_size: int = 10000
    char_mode: bool = False
    lm_order: int = 3
    align_iterations: int = 10
    phrase_max_len: int = 7
    stack_size: int = 100
    distortion_limit: int = 6
    nbest: int = 0
    weight_lm: float = 0.5
    weight_phrase: tuple = (0.2, 0.2, 0.2, 0.2)
    weight_distortion: float = 0.3
    weight_word_penalty: float = -1.0
    smoothing: str = "none"
    buckets: int = 5
    icl_endpoint: str = ""
    icl_model: str = ""
    icl_k: int = 20
    icl_limit: int = 1000
    icl_template: str = "{src} = {tgt}"
    icl_separator: str = "\n"
    icl_auth_env: str = ""
    icl_concurrency: int = 4
    jobs: int = 1

    def weights(self) -> DecoderWeights:
        return DecoderWeights(
            lm=self.weight_lm,
            phrase=tuple(self.weight_phrase),
            distortion=self.weight_distortion,
            word_penalty=self.weight_word_penalty,
        )


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "yes", "1", "on"):
        return True
    if s.lower() in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> tuple:
    vals = tuple(float(x) for x in s.split())
    if len(vals) != 4:
        raise ValueError(f"expected 4 numbers, got {len(vals)}")
    return vals


def _parse_escaped(s: str) -> str:
    return s.replace("\\n", "\n").replace("\\t", "\t")


# section -> key -> (config attribute, parser, range predicate or None)
_SCHEMA = {
    "paths": {
        "corpus": ("corpus", str, None),
        "workdir": ("workdir", str, None),
    },
    "split": {
        "max_src_chars": ("max_src_chars", int, lambda v: v >= 1),
        "max_tgt_chars": ("max_tgt_chars", int, lambda v: v >= 1),
        "train_fraction": ("train_fraction", float, lambda v: 0 < v < 1),
        "seed": ("seed", int, None),
    },
    "tokenizer": {
        "vocab_size": ("vocab_size", int, lambda v: v >= 4),
        "char_mode": ("char_mode", _parse_bool, None),
    },
    "lm": {
        "order": ("lm_order", int, lambda v: v >= 1),
    },
    "align": {
        "iterations": ("align_iterations", int, lambda v: v >= 0),
    },
    "phrases": {
        "max_len": ("phrase_max_len", int, lambda v: v >= 1),
    },
    "decoder": {
        "stack_size": ("stack_size", int, lambda v: v >= 1),
        "distortion_limit": ("distortion_limit", int, lambda v: v >= -1),
        "nbest": ("nbest", int, lambda v: v >= 0),
        "weight_lm": ("weight_lm", float, None),
        "weight_phrase": ("weight_phrase", _parse_floats, None),
        "weight_distortion": ("weight_distortion", float, None),
        "weight_word_penalty": ("weight_word_penalty", float, None),
    },
    "evaluation": {
        "smoothing": ("smoothing", str, None),
        "buckets": ("buckets", int, lambda v: v >= 2),
    },
    "icl": {
        "endpoint": ("icl_endpoint", str, None),
        "model": ("icl_model", str, None),
        "k": ("icl_k", int, lambda v: v >= 0),
        "limit": ("icl_limit", int, lambda v: v >= 1),
        "template": ("icl_template", str, None),
        "separator": ("icl_separator", _parse_escaped, None),
        "auth_env": ("icl_auth_env", str, None),
        "concurrency": ("icl_concurrency", int, lambda v: v >= 1),
    },
    "run": {
        "jobs": ("jobs", int, lambda v: v >= 1),
    },
}

_ALL_KEYS = sorted({k for sec in _SCHEMA.values() for k in sec})


def validate_config(path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError([f"cannot read config {path}: {e}"]) from e
    return parse_config(text, origin=str(path))


def parse_config(text: str, origin: str = "<config>") -> PipelineConfig:
    cfg = PipelineConfig()
    problems = []
    section = None
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                hint = difflib.get_close_matches(section, _SCHEMA, n=1)
                extra = f" (did you mean [{hint[0]}]?)" if hint else ""
                problems.append(f"{origin}:{lineno}: unknown section [{section}]{extra}")
                section = None
            continue
        if "=" not in line:
            problems.append(f"{origin}:{lineno}: expected key = value, got {line!r}")
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if section is None:
            problems.append(f"{origin}:{lineno}: key {key!r} outside any [section]")
            continue
        if section not in _SCHEMA:
            continue  # already reported
        schema = _SCHEMA[section]
        if key not in schema:
            hint = difflib.get_close_matches(key, _ALL_KEYS, n=1)
            extra = f" (did you mean {hint[0]!r}?)" if hint else ""
            problems.append(f"{origin}:{lineno}: unknown key {key!r} in [{section}]{extra}")
            continue
        attr, parser, check = schema[key]
        try:
            parsed = parser(value)
        except ValueError as e:
            problems.append(f"{origin}:{lineno}: bad value for {key}: {e}")
            continue
        if check is not None and not check(parsed):
            problems.append(f"{origin}:{lineno}: {key} = {value} out of range")
            continue
        setattr(cfg, attr, parsed)
    if problems:
        raise ConfigError(problems)
    return cfg


def config_text(cfg: PipelineConfig) -> str:
    """Serialize a config back to its file syntax (canonical section order)."""
    lines = []
    for section, schema in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (attr, _parser, _check) in schema.items():
            v = getattr(cfg, attr)
            if isinstance(v, tuple):
                v = " ".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            v = str(v).replace("\n", "\\n").replace("\t", "\\t")
            lines.append(f"{key} = {v}")
        lines.append("")
    return "\n".join(lines)
