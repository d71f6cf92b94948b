"""Corpus ingestion: tokenization, vocabulary, subsampling and encoding."""
from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .taxonomy import Taxonomy, split_path

DEFAULT_MAX_SIZE = 50_000
DEFAULT_SUBSAMPLE_THRESHOLD = 1e-5

_SPLIT = re.compile(r"[\W_]+")
_SENTENCE_END = re.compile(r"[.!?]+")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    split_sentences: bool = False


@dataclass(frozen=True)
class RawRecord:
    node_path: str
    text: str = ""
    tokens: tuple[str, ...] | None = None

    def __post_init__(self):
        split_path(self.node_path)


def tokenize(text: str, rules: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters.

    >>> tokenize("Great LENS, sharp!")
    ['great', 'lens', 'sharp']
    """
    if rules.lowercase:
        text = text.lower()
    return [t for t in _SPLIT.split(text) if t]


def record_sentences(record: RawRecord, rules: TokenizerConfig = TokenizerConfig()) -> list[list[str]]:
    """Token lists for each sentence of a record (one sentence unless splitting is on)."""
    if record.tokens is not None:
        toks = [t.lower() for t in record.tokens] if rules.lowercase else list(record.tokens)
        return [toks]
    if not rules.split_sentences:
        return [tokenize(record.text, rules)]
    return [tokenize(chunk, rules) for chunk in _SENTENCE_END.split(record.text)]


def read_jsonl(path) -> Iterator[RawRecord]:
    """Yield records from a JSON Lines corpus.

    Each object carries ``node`` (a path, or a list of paths for
    multi-category items, which are duplicated once per path) and either
    ``text`` or a pre-tokenized ``tokens`` array.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                nodes = obj["node"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad record ({exc})") from None
            if isinstance(nodes, str):
                nodes = [nodes]
            tokens = obj.get("tokens")
            for node in nodes:
                yield RawRecord(
                    node_path=node,
                    text=obj.get("text", ""),
                    tokens=tuple(tokens) if tokens is not None else None,
                )


def write_jsonl(records: Iterable[RawRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            obj = {"node": r.node_path}
            if r.tokens is not None:
                obj["tokens"] = list(r.tokens)
            else:
                obj["text"] = r.text
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


@dataclass
class Vocabulary:
    words: list[str]
    count: np.ndarray
    total_tokens: int
    id_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.count = np.asarray(self.count, dtype=np.int64)
        self.id_of = {w: i for i, w in enumerate(self.words)}
        if len(self.id_of) != len(self.words):
            raise CorpusError("duplicate words in vocabulary")

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.id_of

    @property
    def freq(self) -> np.ndarray:
        """Relative frequency over the full (pre-truncation) token stream."""
        return self.count / float(self.total_tokens)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for w, c in zip(self.words, self.count):
                fh.write(f"{w}\t{int(c)}\n")

    @classmethod
    def load(cls, path, total_tokens: int | None = None) -> "Vocabulary":
        """Read ``word<TAB>count`` lines.

        The file does not record tokens discarded by truncation, so pass
        ``total_tokens`` from the corpus when exact frequencies matter;
        otherwise the kept counts are taken as the whole stream.
        """
        words, counts = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    w, c = line.split("\t")
                    counts.append(int(c))
                except ValueError:
                    raise CorpusError(f"{path}:{lineno}: expected word<TAB>count") from None
                words.append(w)
        total = sum(counts) if total_tokens is None else int(total_tokens)
        return cls(words, np.array(counts, dtype=np.int64), total)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for w, c in zip(self.words, self.count):
            h.update(f"{w}\t{int(c)}\n".encode("utf-8"))
        return h.hexdigest()


def build_vocab(
    records: Iterable[RawRecord],
    max_size: int = DEFAULT_MAX_SIZE,
    rules: TokenizerConfig = TokenizerConfig(),
) -> Vocabulary:
    """Keep the ``max_size`` most frequent tokens (ties broken lexicographically)."""
    if max_size < 1:
        raise CorpusError("max_size must be >= 1")
    counts = Counter()
    for rec in records:
        for sent in record_sentences(rec, rules):
            counts.update(sent)
    total = sum(counts.values())
    if total == 0:
        raise CorpusError("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    return Vocabulary([w for w, _ in ranked], np.array([c for _, c in ranked]), total)


def subsample_keep_prob(f_v, threshold: float = DEFAULT_SUBSAMPLE_THRESHOLD):
    """Probability of keeping a token of relative frequency ``f_v``.

    One minus the removal probability ``1 - sqrt(threshold / f_v)``, clamped
    to [0, 1].  Accepts scalars or arrays (broadcast against each other).
    """
    f = np.asarray(f_v, dtype=np.float64)
    t = np.asarray(threshold, dtype=np.float64)
    if np.any(~(t > 0)):
        raise CorpusError("subsampling threshold must be positive")
    if np.any(~(f > 0)):
        raise CorpusError("invalid frequency")
    keep = np.minimum(1.0, np.sqrt(t / f))
    return float(keep) if keep.ndim == 0 else keep


@dataclass(frozen=True)
class EncodedSentence:
    tokens: np.ndarray
    node_id: int

    def __len__(self):
        return len(self.tokens)


@dataclass
class EncodedCorpus:
    sentences: list[EncodedSentence]

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    @property
    def n_positions(self) -> int:
        return sum(len(s) for s in self.sentences)

    def decode(self, vocab: Vocabulary) -> list[list[str]]:
        return [[vocab.words[t] for t in s.tokens] for s in self.sentences]


def encode_corpus(
    records: Iterable[RawRecord],
    vocab: Vocabulary,
    tax: Taxonomy,
    subsample: bool = False,
    threshold: float = DEFAULT_SUBSAMPLE_THRESHOLD,
    seed: int = 0,
    rules: TokenizerConfig = TokenizerConfig(),
) -> EncodedCorpus:
    """Map records to word-id sequences tagged with their resolved node.

    Subsampling draws from a generator seeded by ``(seed, record index)`` so
    the result does not depend on how the stream is sharded.
    """
    keep_prob = subsample_keep_prob(np.maximum(vocab.freq, 1e-300), threshold) if subsample else None
    sentences = []
    for index, rec in enumerate(records):
        node_id = tax.resolve(rec.node_path)
        rng = np.random.default_rng([seed, index]) if subsample else None
        for sent in record_sentences(rec, rules):
            ids = np.fromiter(
                (vocab.id_of[t] for t in sent if t in vocab.id_of), dtype=np.int64
            )
            if subsample and len(ids):
                ids = ids[rng.random(len(ids)) < keep_prob[ids]]
            if len(ids):
                sentences.append(EncodedSentence(ids, node_id))
    return EncodedCorpus(sentences)


def count_paths(records: Iterable[RawRecord], rules: TokenizerConfig = TokenizerConfig()) -> Counter:
    """Sentences per node path, the unit used for leaf merging."""
    counts = Counter()
    for rec in records:
        counts[rec.node_path] += len(record_sentences(rec, rules))
    return counts


def split_records(records: Sequence[RawRecord], heldout_fraction: float, seed: int):
    """Seeded random train/held-out split; returns (train, heldout)."""
    if not 0 <= heldout_fraction < 1:
        raise CorpusError("heldout_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    is_heldout = rng.random(len(records)) < heldout_fraction
    train = [r for r, h in zip(records, is_heldout) if not h]
    heldout = [r for r, h in zip(records, is_heldout) if h]
    return train, heldout

