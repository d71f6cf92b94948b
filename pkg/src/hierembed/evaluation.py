"""Held-out likelihood, parent-deviation ranking and nearest neighbours."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import EncodedCorpus, Vocabulary
from .model import (
    DataTerm,
    ModelConfig,
    ModelParams,
    NegativeSampler,
    data_loglik,
    draw_negatives,
)
from .taxonomy import Taxonomy

LL_DEFINITION = (
    "mean over held-out positions of log p(x=1 | context) for the observed word "
    "plus the sum of log p(x=0 | context) over seeded negative draws"
)


class EvalError(ValueError):
    pass


@dataclass
class LLReport:
    per_observation_ll: float
    positive_ll: float
    negative_ll: float
    n_positions: int
    negatives: int
    seed: int
    variant: str = ""
    definition: str = LL_DEFINITION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


@dataclass
class RankedWords:
    items: list[tuple[str, float]]

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.items]

    @property
    def scores(self) -> list[float]:
        return [s for _, s in self.items]

    def to_tsv(self) -> str:
        return "".join(f"{i}\t{w}\t{s:.6g}\n" for i, (w, s) in enumerate(self.items, 1))


def heldout_ll(
    params: ModelParams,
    corpus: EncodedCorpus,
    tax: Taxonomy,
    cfg: ModelConfig,
    seed: int,
    sampler: NegativeSampler | None = None,
    variant: str = "",
) -> LLReport:
    """Negative-sampled pseudo log-likelihood per held-out position.

    Each sentence is scored with its node's table, or the nearest ancestor's
    when the model was trained on a flattened taxonomy.  Negatives are drawn
    from ``default_rng(seed)`` in position order, so repeated calls agree bit
    for bit and different models see the same negatives.
    """
    if len(corpus) == 0 or corpus.n_positions == 0:
        raise EvalError("empty held-out corpus")
    if sampler is None:
        sampler = NegativeSampler(params.vocab_size, "uniform")
    terms = [DataTerm(s.tokens, params.row_for(s.node_id, tax)) for s in corpus]
    negs = draw_negatives(terms, sampler, cfg.negatives, np.random.default_rng(seed))
    pos, neg, n = data_loglik(params, terms, negs, cfg)
    return LLReport(
        per_observation_ll=(pos + neg) / n,
        positive_ll=pos / n,
        negative_ll=neg / n,
        n_positions=n,
        negatives=cfg.negatives,
        seed=seed,
        variant=variant,
    )


def _top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest scores, ties by ascending index."""
    order = np.lexsort((np.arange(len(scores)), -scores))
    return order[:k]


def deviation_ranking(
    params: ModelParams, vocab: Vocabulary, node_id: int, k: int = 10, tax: Taxonomy | None = None
) -> RankedWords:
    """Words whose embedding at ``node_id`` moved furthest from the parent's."""
    row = params.row_for(node_id, tax)
    parent = int(params.parent_rows[row])
    if parent < 0:
        raise EvalError("root has no parent")
    dev = np.linalg.norm(params.rho[row] - params.rho[parent], axis=1)
    return RankedWords([(vocab.words[i], float(dev[i])) for i in _top_k(dev, k)])


def nearest_neighbors(
    params: ModelParams,
    vocab: Vocabulary,
    node_id: int,
    word: str,
    k: int = 10,
    exclude_self: bool = True,
    tax: Taxonomy | None = None,
) -> RankedWords:
    """k nearest words by euclidean distance inside one node's table.

    Scores are negated distances so the ranking reads best-first.
    """
    if word not in vocab:
        raise EvalError(f"unknown word: {word!r}")
    table = params.rho[params.row_for(node_id, tax)]
    v = vocab.id_of[word]
    dist = np.sqrt(np.sum((table - table[v]) ** 2, axis=1))
    scores = -dist
    if exclude_self:
        scores[v] = -np.inf
        k = min(k, len(vocab) - 1)
    return RankedWords([(vocab.words[i], float(scores[i])) for i in _top_k(scores, k)])
