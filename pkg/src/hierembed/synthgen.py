"""Synthetic taxonomy-tagged corpora with planted domain-specific word usage.

Leaves of a regular tree emit sentences of Zipf-distributed background words.
Each node sees the Zipf ranks of its parent with a fraction of them shuffled
(``background_drift``), so word frequencies drift gradually down the tree and
sibling domains differ less than distant ones.

A planted word is given two domains.  In ``node_a`` a sentence is, with
probability ``shift_strength``, extended by a run of words drawn from
``partner_set_a`` (``run_length``, default twice the sentence length) spliced
in at a random point.  The planted word sits inside the run at least one
window width from either end, so all its window-mates are partners while many
partner occurrences see only other partners.  ``node_b`` works the same way
with ``partner_set_b``; a sentence hit by several planted words gets one run
per word.  Planted and partner words keep their global Zipf rank so their
background usage is identical everywhere.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import RawRecord, write_jsonl
from .taxonomy import ROOT_NAME


class SynthSpecError(ValueError):
    pass


@dataclass
class PlantedWord:
    word: str
    node_a: str
    partner_set_a: list[str]
    node_b: str
    partner_set_b: list[str]


@dataclass
class SynthSpec:
    vocab_size: int = 500
    branching: tuple[int, ...] = (3, 2)
    sentences_per_node: int = 2000
    sentence_length: int = 12
    planted: list[PlantedWord] | None = None
    n_planted: int = 5
    partner_size: int = 4
    zipf_exponent: float = 1.0
    shift_strength: float = 0.3
    background_drift: float = 0.5
    window: int = 4
    run_length: int | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branching"] = list(self.branching)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        d["branching"] = tuple(d["branching"])
        if d.get("planted") is not None:
            d["planted"] = [PlantedWord(**p) for p in d["planted"]]
        return cls(**d)


def word_name(rank: int) -> str:
    return f"w{rank:04d}"


def leaf_paths(branching) -> list[str]:
    if not branching:
        return [ROOT_NAME]
    out = []
    for combo in itertools.product(*(range(b) for b in branching)):
        parts = [f"dom{combo[0]}"] + [f"sub{'_'.join(map(str, combo[: k + 1]))}" for k in range(1, len(combo))]
        out.append("/".join(parts))
    return out


def _node_paths(branching) -> list[str]:
    """All non-root paths, parents first."""
    seen = []
    for leaf in leaf_paths(branching):
        if leaf == ROOT_NAME:
            continue
        parts = leaf.split("/")
        for k in range(1, len(parts) + 1):
            p = "/".join(parts[:k])
            if p not in seen:
                seen.append(p)
    return sorted(seen, key=lambda p: (p.count("/"), p))


def _auto_planted(spec: SynthSpec, rng) -> list[PlantedWord]:
    leaves = leaf_paths(spec.branching)
    if spec.n_planted and len(leaves) < 2:
        raise SynthSpecError("planting needs at least two leaf domains")
    need = spec.n_planted * (1 + 2 * spec.partner_size)
    lo, hi = spec.vocab_size // 10, spec.vocab_size // 2
    if hi - lo < need:
        raise SynthSpecError(
            f"vocab_size {spec.vocab_size} too small for {spec.n_planted} planted words "
            f"with {spec.partner_size} partners each"
        )
    pool = [word_name(r) for r in lo + rng.permutation(hi - lo)[:need]]
    out = []
    for k in range(spec.n_planted):
        chunk = pool[k * (1 + 2 * spec.partner_size) : (k + 1) * (1 + 2 * spec.partner_size)]
        out.append(
            PlantedWord(
                word=chunk[0],
                node_a=leaves[k % len(leaves)],
                partner_set_a=sorted(chunk[1 : 1 + spec.partner_size]),
                node_b=leaves[(k + 1) % len(leaves)],
                partner_set_b=sorted(chunk[1 + spec.partner_size :]),
            )
        )
    return out


def validate(spec: SynthSpec) -> None:
    if spec.vocab_size < 2:
        raise SynthSpecError("vocab_size must be >= 2")
    if any(b < 1 for b in spec.branching):
        raise SynthSpecError("branching factors must be >= 1")
    if spec.sentences_per_node < 0 or spec.sentence_length < 1:
        raise SynthSpecError("sentences_per_node must be >= 0 and sentence_length >= 1")
    if not 0.0 <= spec.shift_strength <= 1.0:
        raise SynthSpecError("shift_strength must be in [0, 1]")
    if not 0.0 <= spec.background_drift <= 1.0:
        raise SynthSpecError("background_drift must be in [0, 1]")
    if spec.window < 1:
        raise SynthSpecError("window must be >= 1")
    if spec.run_length is not None and spec.run_length < 2 * spec.window + 1:
        raise SynthSpecError("run_length must leave room for a full window on both sides")
    if spec.planted is None:
        return
    known = {word_name(r) for r in range(spec.vocab_size)}
    leaves = set(leaf_paths(spec.branching))
    partners_all = set()
    for p in spec.planted:
        a, b = set(p.partner_set_a), set(p.partner_set_b)
        if not a or not b:
            raise SynthSpecError(f"{p.word}: partner sets must be non-empty")
        if a & b:
            raise SynthSpecError(f"{p.word}: partner sets overlap: {sorted(a & b)}")
        partners_all |= a | b
        for w in [p.word, *a, *b]:
            if w not in known:
                raise SynthSpecError(f"unknown word {w!r}")
        for node in (p.node_a, p.node_b):
            if node not in leaves:
                raise SynthSpecError(f"{p.word}: {node!r} is not a leaf domain")
    planted_words = {p.word for p in spec.planted}
    if planted_words & partners_all:
        raise SynthSpecError(f"planted words used as partners: {sorted(planted_words & partners_all)}")


def _drifted(ranking: np.ndarray, movable: np.ndarray, drift: float, rng) -> np.ndarray:
    """Shuffle the words at a random ``drift`` fraction of the movable rank slots."""
    out = ranking.copy()
    n = int(round(drift * len(movable)))
    if n >= 2:
        slots = np.sort(rng.choice(movable, size=n, replace=False))
        out[slots] = out[rng.permutation(slots)]
    return out


def _planted_block(word: str, partners: list[str], length: int, w: int, rng) -> list[str]:
    """Partner words with ``word`` inserted at least ``w`` slots from either end."""
    n = max(length, 2 * w + 1)
    block = [partners[k] for k in rng.integers(0, len(partners), size=n)]
    block[int(rng.integers(w, n - w))] = word
    return block


@dataclass
class SynthCorpus:
    records: list[RawRecord]
    truth: dict[str, list[str]]
    spec: SynthSpec
    node_rankings: dict[str, list[str]] = field(default_factory=dict)

    def write(self, out_dir, heldout_fraction: float = 0.0) -> None:
        from pathlib import Path

        from .corpus import split_records

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_jsonl(self.records, out / "corpus.jsonl")
        if heldout_fraction > 0:
            train, heldout = split_records(self.records, heldout_fraction, self.spec.seed)
            write_jsonl(train, out / "train.jsonl")
            write_jsonl(heldout, out / "heldout.jsonl")
        with open(out / "truth.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.truth, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / "synth_spec.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.spec.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def generate(spec: SynthSpec) -> SynthCorpus:
    """Generate the corpus; the returned spec has its planted records filled in."""
    validate(spec)
    rng = np.random.default_rng([spec.seed, 0])
    planted = spec.planted if spec.planted is not None else _auto_planted(spec, rng)
    spec = SynthSpec(**{**spec.__dict__, "planted": planted})
    validate(spec)

    V = spec.vocab_size
    rank_of = {word_name(r): r for r in range(V)}
    protected = set()
    for p in planted:
        protected |= {rank_of[w] for w in [p.word, *p.partner_set_a, *p.partner_set_b]}
    movable = np.array([r for r in range(V) if r not in protected], dtype=np.int64)

    rankings = {ROOT_NAME: np.arange(V)}
    for path in _node_paths(spec.branching):
        parent = path.rsplit("/", 1)[0] if "/" in path else ROOT_NAME
        rankings[path] = _drifted(rankings[parent], movable, spec.background_drift, rng)

    zipf = (np.arange(V) + 1.0) ** -spec.zipf_exponent
    zipf /= zipf.sum()
    w = spec.window
    records = []
    truth = {path: [] for path in _node_paths(spec.branching)} or {ROOT_NAME: []}
    for leaf_idx, leaf in enumerate(leaf_paths(spec.branching)):
        relevant = []
        for p in planted:
            if p.node_a == leaf:
                relevant.append((p.word, p.partner_set_a))
            if p.node_b == leaf:
                relevant.append((p.word, p.partner_set_b))
        if spec.shift_strength > 0:
            truth[leaf] = sorted({word for word, _ in relevant})
        lrng = np.random.default_rng([spec.seed, 1, leaf_idx])
        ranking = rankings[leaf]
        n, L = spec.sentences_per_node, spec.sentence_length
        run = spec.run_length or 2 * L
        background = ranking[lrng.choice(V, size=(n, L), p=zipf)]
        fire = lrng.random((n, len(relevant))) < spec.shift_strength
        for s in range(n):
            sentence = [word_name(r) for r in background[s]]
            blocks = [_planted_block(word, partners, run, w, lrng)
                      for (word, partners), on in zip(relevant, fire[s]) if on]
            if blocks:
                cut = int(lrng.integers(0, L + 1))
                sentence = sentence[:cut] + [tok for block in blocks for tok in block] + sentence[cut:]
            records.append(RawRecord(node_path=leaf, text=" ".join(sentence)))
    node_rankings = {k: [word_name(r) for r in v] for k, v in rankings.items()}
    return SynthCorpus(records, truth, spec, node_rankings)
