"""Flat run configuration shared by every CLI subcommand.

Keys can come from a ``key=value`` file and be overridden on the command line.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

from .corpus import DEFAULT_MAX_SIZE, DEFAULT_SUBSAMPLE_THRESHOLD, TokenizerConfig
from .synthgen import SynthSpec
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


def _opt(default, help_text, **kw):
    return field(default=default, metadata={"help": help_text, **kw})


@dataclass
class RunConfig:
    # corpus
    lowercase: bool = _opt(True, "lowercase text before tokenizing")
    split_sentences: bool = _opt(False, "split records into sentences on [.!?]")
    max_size: int = _opt(DEFAULT_MAX_SIZE, "vocabulary size (most frequent words)")
    subsample: bool = _opt(True, "randomly drop frequent tokens before training")
    subsample_threshold: float = _opt(DEFAULT_SUBSAMPLE_THRESHOLD, "subsampling threshold t in sqrt(t/f)")
    # taxonomy
    min_node_size: int = _opt(0, "merge leaves with fewer sentences into their parent")
    taxonomy_file: str = _opt("", "optional file of node paths to declare")
    # model
    dim: int = _opt(100, "embedding dimension K")
    window: int = _opt(4, "context window w on each side")
    negatives: int = _opt(10, "negative samples per positive")
    sigma: float = _opt(10.0, "std of the parent-child embedding prior")
    global_prior_std: float = _opt(1.0, "std of the zero-mean prior on the root table and context vectors")
    negative_distribution: str = _opt("uniform", "noise distribution", choices=("uniform", "unigram"))
    context_mean: bool = _opt(False, "average context vectors instead of summing them")
    propagate_data_to_ancestors: bool = _opt(False, "also score each sentence at its non-root ancestors")
    # training
    variant: str = _opt("hierarchical", "model variant", choices=("global", "grouped", "hierarchical"))
    learning_rate: float = _opt(0.05, "step size")
    optimizer: str = _opt("adagrad", "update rule", choices=("sgd", "adagrad"))
    epochs: int = _opt(5, "passes over the corpus")
    minibatch: int = _opt(64, "sentences per update")
    init_std: float = _opt(0.1, "std of the initial root table and context vectors")
    threads: int = _opt(1, "worker threads (1 = deterministic)")
    checkpoint_every: int = _opt(0, "write a checkpoint every N epochs (0 = off)")
    lr_decay: bool = _opt(False, "decay the step size linearly to zero")
    seed: int = _opt(0, "random seed")
    # queries
    node: str = _opt("", "taxonomy node path")
    word: str = _opt("", "query word")
    k: int = _opt(10, "number of results")
    exclude_self: bool = _opt(True, "leave the query word out of its neighbour list")
    alpha: bool = _opt(False, "export the context vectors instead of a node table")
    # synthetic data
    vocab_size: int = _opt(500, "synthetic vocabulary size")
    branching: str = _opt("3,2", "children per node at each level")
    sentences_per_node: int = _opt(2000, "sentences per leaf domain")
    sentence_length: int = _opt(12, "background sentence length")
    n_planted: int = _opt(5, "planted words")
    partner_size: int = _opt(4, "partner words per planted domain")
    zipf_exponent: float = _opt(1.0, "Zipf exponent of the background")
    shift_strength: float = _opt(0.3, "probability a sentence carries a planted run")
    background_drift: float = _opt(0.5, "fraction of Zipf ranks reshuffled per level")
    heldout_fraction: float = _opt(0.0, "fraction of records written to heldout.jsonl")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def replace(self, **updates) -> "RunConfig":
        unknown = set(updates) - set(self.keys())
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **updates)

    def tokenizer(self) -> TokenizerConfig:
        return TokenizerConfig(lowercase=self.lowercase, split_sentences=self.split_sentences)

    def train_config(self) -> TrainConfig:
        names = TrainConfig.__dataclass_fields__
        return TrainConfig(**{k: getattr(self, k) for k in names if hasattr(self, k)})

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(
            vocab_size=self.vocab_size,
            branching=parse_branching(self.branching),
            sentences_per_node=self.sentences_per_node,
            sentence_length=self.sentence_length,
            n_planted=self.n_planted,
            partner_size=self.partner_size,
            zipf_exponent=self.zipf_exponent,
            shift_strength=self.shift_strength,
            background_drift=self.background_drift,
            window=self.window,
            seed=self.seed,
        )


def parse_branching(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"branching must be comma-separated integers, got {text!r}") from None


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_value(key: str, raw: str):
    f = RunConfig.__dataclass_fields__[key]
    kind = f.type if isinstance(f.type, type) else {"bool": bool, "int": int, "float": float, "str": str}[f.type]
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in _TRUE:
            return True
        if raw.lower() in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        value = kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from None
    choices = f.metadata.get("choices")
    if choices and value not in choices:
        raise ConfigError(f"{key}: must be one of {', '.join(choices)}")
    return value


def load_config_file(path, base: RunConfig | None = None) -> RunConfig:
    """Read ``key=value`` lines; ``#`` starts a comment.  Unknown keys are errors."""
    updates = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in RunConfig.__dataclass_fields__:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            updates[key] = parse_value(key, raw)
    return (base or RunConfig()).replace(**updates)
