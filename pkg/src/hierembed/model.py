"""Bernoulli embedding model with parent-tied embedding tables.

Every taxonomy node ``d`` owns an embedding table ``rho[d]`` (V x K); a single
context table ``alpha`` (V x K) is shared by all nodes.  The log-odds of word
``v`` at position ``i`` of a sentence assigned to node ``d`` is

    eta = rho[d, v] . sum(alpha[x_j] for j in window(i))

Each node's table is tied to its parent's by an isotropic Gaussian with
standard deviation ``sigma``; the root table and ``alpha`` get zero-mean
Gaussian priors with ``global_prior_std``.  Gaussian normalizing constants are
dropped throughout.

Parameters live in one (n_nodes, V, K) array; ``node_ids[r]`` is the taxonomy
id of table row ``r`` and tables are ordered parents before children.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import EncodedCorpus, Vocabulary
from .taxonomy import Taxonomy

NEGATIVE_DISTRIBUTIONS = ("uniform", "unigram")
UNIGRAM_POWER = 0.75


class NumericalBlowup(FloatingPointError):
    pass


@dataclass
class ModelConfig:
    dim: int = 100
    window: int = 4
    negatives: int = 10
    sigma: float = 10.0
    global_prior_std: float = 1.0
    negative_distribution: str = "uniform"
    context_mean: bool = False
    propagate_data_to_ancestors: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not self.global_prior_std > 0:
            raise ValueError("global_prior_std must be > 0")
        if self.negative_distribution not in NEGATIVE_DISTRIBUTIONS:
            raise ValueError(
                f"negative_distribution must be one of {NEGATIVE_DISTRIBUTIONS}"
            )


@dataclass
class ModelParams:
    alpha: np.ndarray
    rho: np.ndarray
    node_ids: tuple[int, ...]
    parent_rows: np.ndarray
    row_of: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.node_ids = tuple(int(i) for i in self.node_ids)
        self.parent_rows = np.asarray(self.parent_rows, dtype=np.int64)
        self.row_of = {n: r for r, n in enumerate(self.node_ids)}
        if self.rho.shape[0] != len(self.node_ids) or self.rho.shape[1:] != self.alpha.shape:
            raise ValueError(
                f"shape mismatch: alpha {self.alpha.shape}, rho {self.rho.shape}, "
                f"{len(self.node_ids)} nodes"
            )

    @classmethod
    def zeros(cls, tax: Taxonomy, vocab_size: int, dim: int) -> "ModelParams":
        ids = tax.node_ids()
        row = {n: r for r, n in enumerate(ids)}
        parents = [row[tax.parent(n)] if tax.parent(n) is not None else -1 for n in ids]
        return cls(
            np.zeros((vocab_size, dim)),
            np.zeros((len(ids), vocab_size, dim)),
            ids,
            np.array(parents),
        )

    @property
    def dim(self) -> int:
        return self.alpha.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.alpha.shape[0]

    def table(self, node_id: int) -> np.ndarray:
        return self.rho[self.row_of[node_id]]

    def row_for(self, node_id: int, tax: Taxonomy | None = None) -> int:
        """Table row for ``node_id``, falling back to its nearest ancestor that has one."""
        if node_id in self.row_of:
            return self.row_of[node_id]
        if tax is not None and node_id in tax:
            for anc in tax.ancestors(node_id):
                if anc in self.row_of:
                    return self.row_of[anc]
        raise KeyError(f"node {node_id} has no embedding table")

    def copy(self) -> "ModelParams":
        return ModelParams(self.alpha.copy(), self.rho.copy(), self.node_ids, self.parent_rows.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.alpha).all() and np.isfinite(self.rho).all())

    def checksum(self) -> str:
        """SHA-256 of the little-endian float32 tables as stored on disk."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.alpha, dtype="<f4").tobytes())
        for r in range(len(self.node_ids)):
            h.update(np.ascontiguousarray(self.rho[r], dtype="<f4").tobytes())
        return h.hexdigest()


# -- scalar building blocks ---------------------------------------------------

def context_window(sentence_length: int, i: int, w: int) -> list[int]:
    """Positions j != i with |j - i| <= w, truncated at the sentence boundary."""
    if not 0 <= i < sentence_length:
        raise IndexError(f"position {i} outside sentence of length {sentence_length}")
    return [j for j in range(max(0, i - w), min(sentence_length, i + w + 1)) if j != i]


def context_sum(tokens: Sequence[int], i: int, w: int, alpha: np.ndarray) -> np.ndarray:
    out = np.zeros(alpha.shape[1])
    for j in context_window(len(tokens), i, w):
        out += alpha[tokens[j]]
    return out


def natural_param(rho_row, ctx) -> float:
    rho_row = np.asarray(rho_row, dtype=np.float64)
    ctx = np.asarray(ctx, dtype=np.float64)
    if rho_row.shape != ctx.shape:
        raise ValueError(f"dimension mismatch: {rho_row.shape} vs {ctx.shape}")
    return float(rho_row @ ctx)


def softplus(z):
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bernoulli_logprob(x, eta):
    """log Bernoulli(x | sigmoid(eta)) = x * eta - softplus(eta)."""
    out = np.asarray(x, dtype=np.float64) * eta - softplus(eta)
    return float(out) if np.ndim(out) == 0 else out


def prior_penalty(child_row, parent_row, sigma: float) -> float:
    """Gaussian log-density of ``child_row`` around ``parent_row``, constant dropped."""
    diff = np.asarray(child_row, dtype=np.float64) - np.asarray(parent_row, dtype=np.float64)
    return float(-(diff @ diff) / (2.0 * sigma * sigma))


# -- negative sampling ----------------------------------------------------------

class NegativeSampler:
    """Draws word ids from the noise distribution, never the positive word."""

    def __init__(self, vocab_size: int, distribution: str = "uniform", counts=None):
        if vocab_size < 2:
            raise ValueError("negative sampling needs a vocabulary of at least 2 words")
        if distribution not in NEGATIVE_DISTRIBUTIONS:
            raise ValueError(f"unknown negative distribution {distribution!r}")
        self.vocab_size = vocab_size
        self.distribution = distribution
        self._cdf = None
        if distribution == "unigram":
            if counts is None:
                raise ValueError("unigram negatives need word counts")
            weights = np.asarray(counts, dtype=np.float64) ** UNIGRAM_POWER
            cdf = np.cumsum(weights)
            self._cdf = cdf / cdf[-1]

    @classmethod
    def for_vocab(cls, vocab: Vocabulary, distribution: str = "uniform") -> "NegativeSampler":
        return cls(len(vocab), distribution, vocab.count)

    @property
    def probs(self) -> np.ndarray:
        if self._cdf is None:
            return np.full(self.vocab_size, 1.0 / self.vocab_size)
        return np.diff(self._cdf, prepend=0.0)

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self._cdf is None:
            return rng.integers(0, self.vocab_size, size=size)
        idx = np.searchsorted(self._cdf, rng.random(size), side="right")
        return np.minimum(idx, self.vocab_size - 1)

    def sample(self, rng: np.random.Generator, positives: np.ndarray, nu: int) -> np.ndarray:
        """(len(positives), nu) ids, redrawing any draw equal to its row's positive."""
        positives = np.asarray(positives, dtype=np.int64)
        negs = self.draw(rng, (len(positives), nu))
        clash = negs == positives[:, None]
        while clash.any():
            negs[clash] = self.draw(rng, int(clash.sum()))
            clash = negs == positives[:, None]
        return negs


def sample_negatives(rng, nu: int, positive_id: int, dist: str, vocab: Vocabulary) -> np.ndarray:
    return NegativeSampler.for_vocab(vocab, dist).sample(rng, np.array([positive_id]), nu)[0]


# -- data terms ---------------------------------------------------------------

@dataclass
class DataTerm:
    """One sentence's contribution, scored against a single table row."""
    tokens: np.ndarray
    row: int


def data_terms(
    corpus: EncodedCorpus, params: ModelParams, tax: Taxonomy | None, propagate: bool = False
) -> list[DataTerm]:
    """Expand sentences into (tokens, table row) terms.

    By default each sentence is scored once, at its own node (or the nearest
    ancestor with a table).  With ``propagate`` it is also scored at every
    ancestor below the root that has a table.
    """
    terms = []
    for sent in corpus:
        row = params.row_for(sent.node_id, tax)
        terms.append(DataTerm(sent.tokens, row))
        if propagate:
            r = int(params.parent_rows[row])
            while r >= 0 and params.parent_rows[r] >= 0:
                terms.append(DataTerm(sent.tokens, r))
                r = int(params.parent_rows[r])
    return terms


def draw_negatives(terms: Sequence[DataTerm], sampler: NegativeSampler, nu: int, rng) -> list[np.ndarray]:
    """One (len, nu) id array per term, drawn in term order."""
    if not terms:
        return []
    flat = np.concatenate([t.tokens for t in terms])
    negs = sampler.sample(rng, flat, nu)
    bounds = np.cumsum([len(t.tokens) for t in terms])[:-1]
    return np.split(negs, bounds)


def fixed_negatives(corpus, params, tax, cfg: ModelConfig, sampler: NegativeSampler, seed: int):
    terms = data_terms(corpus, params, tax, cfg.propagate_data_to_ancestors)
    return draw_negatives(terms, sampler, cfg.negatives, np.random.default_rng(seed))


def _shift(a: np.ndarray, offset: int, fill) -> np.ndarray:
    """out[:, i] = a[:, i + offset], ``fill`` where i + offset is out of range."""
    out = np.full_like(a, fill)
    L = a.shape[1]
    if offset > 0:
        out[:, : L - offset] = a[:, offset:]
    elif offset < 0:
        out[:, -offset:] = a[:, : L + offset]
    else:
        out[:] = a
    return out


@dataclass
class Batch:
    tok: np.ndarray   # (B, L), -1 padded
    rows: np.ndarray  # (B,)
    negs: np.ndarray  # (B, L, nu)

    @classmethod
    def build(cls, terms: Sequence[DataTerm], negatives: Sequence[np.ndarray], nu: int) -> "Batch":
        B = len(terms)
        L = max(len(t.tokens) for t in terms)
        tok = np.full((B, L), -1, dtype=np.int64)
        negs = np.zeros((B, L, nu), dtype=np.int64)
        for b, (t, n) in enumerate(zip(terms, negatives)):
            tok[b, : len(t.tokens)] = t.tokens
            negs[b, : len(t.tokens)] = n
        return cls(tok, np.array([t.row for t in terms], dtype=np.int64), negs)


def batch_loglik(
    alpha: np.ndarray,
    rho: np.ndarray,
    batch: Batch,
    window: int,
    context_mean: bool = False,
    grad: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[float, float]:
    """Sum of positive and negative log-probabilities over a batch.

    ``alpha`` must carry one extra all-zero row at the end; padded positions
    index it as -1.  When ``grad = (g_alpha, g_rho)`` is given, the gradient of
    the returned total is accumulated into those arrays (shapes of ``alpha``
    and ``rho``).
    """
    tok = batch.tok
    B, L = tok.shape
    K = alpha.shape[1]
    V = rho.shape[1]
    offsets = [o for o in range(-window, window + 1) if o and abs(o) < L]

    ctx = np.zeros((B, L, K))
    n_ctx = np.zeros((B, L))
    for o in offsets:
        sh = _shift(tok, o, -1)
        ctx += alpha[sh]
        n_ctx += sh >= 0
    mask = tok >= 0
    ctx = ctx[mask]
    scale = None
    if context_mean:
        scale = 1.0 / np.maximum(n_ctx[mask], 1.0)
        ctx *= scale[:, None]

    pos_row = np.broadcast_to(batch.rows[:, None], (B, L))[mask]
    pos_tok = tok[mask]
    negs = batch.negs[mask]
    flat_rho = rho.reshape(-1, K)
    pos_idx = pos_row * V + pos_tok
    neg_idx = pos_row[:, None] * V + negs

    rho_pos = flat_rho[pos_idx]
    rho_neg = flat_rho[neg_idx]
    eta_pos = np.einsum("pk,pk->p", rho_pos, ctx)
    eta_neg = np.einsum("pnk,pk->pn", rho_neg, ctx)
    ll_pos = float(np.sum(bernoulli_logprob(1.0, eta_pos)))
    ll_neg = float(np.sum(bernoulli_logprob(0.0, eta_neg))) if negs.size else 0.0

    if grad is not None:
        g_alpha, g_rho = grad
        c_pos = sigmoid(-eta_pos)
        c_neg = -sigmoid(eta_neg)
        g_flat = g_rho.reshape(-1, K)
        np.add.at(g_flat, pos_idx, c_pos[:, None] * ctx)
        if negs.size:
            np.add.at(g_flat, neg_idx.ravel(), (c_neg[:, :, None] * ctx[:, None, :]).reshape(-1, K))
        g_ctx = c_pos[:, None] * rho_pos + np.einsum("pn,pnk->pk", c_neg, rho_neg)
        if scale is not None:
            g_ctx *= scale[:, None]
        G = np.zeros((B, L, K))
        G[mask] = g_ctx
        S = np.zeros_like(G)
        for o in offsets:
            S += _shift(G, -o, 0.0)
        np.add.at(g_alpha, pos_tok, S[mask])
    return ll_pos, ll_neg


def with_zero_row(alpha: np.ndarray) -> np.ndarray:
    return np.vstack([alpha, np.zeros((1, alpha.shape[1]))])


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def data_loglik(
    params: ModelParams,
    terms: Sequence[DataTerm],
    negatives: Sequence[np.ndarray],
    cfg: ModelConfig,
    grad: tuple[np.ndarray, np.ndarray] | None = None,
    chunk: int = 256,
) -> tuple[float, float, int]:
    """(positive LL, negative LL, positions) summed over terms in order."""
    alpha = with_zero_row(params.alpha)
    g_alpha_ext = None
    if grad is not None:
        g_alpha_ext = np.zeros_like(alpha)
    ll_pos = ll_neg = 0.0
    n = 0
    for sl in _chunks(len(terms), chunk):
        batch = Batch.build(terms[sl], negatives[sl], cfg.negatives)
        p, q = batch_loglik(
            alpha,
            params.rho,
            batch,
            cfg.window,
            cfg.context_mean,
            None if grad is None else (g_alpha_ext, grad[1]),
        )
        ll_pos += p
        ll_neg += q
        n += int((batch.tok >= 0).sum())
    if grad is not None:
        g_alpha = grad[0]
        g_alpha += g_alpha_ext[:-1]
    return ll_pos, ll_neg, n


# -- priors ---------------------------------------------------------------------

def prior_logdensity(params: ModelParams, sigma: float, sigma0: float) -> float:
    total = 0.0
    for r, p in enumerate(params.parent_rows):
        if p < 0:
            total -= float(np.sum(params.rho[r] ** 2)) / (2.0 * sigma0**2)
        else:
            d = params.rho[r] - params.rho[p]
            total -= float(np.sum(d * d)) / (2.0 * sigma**2)
    total -= float(np.sum(params.alpha**2)) / (2.0 * sigma0**2)
    return total


def prior_gradient(params: ModelParams, sigma: float, sigma0: float, scale: float = 1.0, out=None):
    """Gradient of the prior log-density, optionally scaled, added into ``out``."""
    if out is None:
        out = (np.zeros_like(params.alpha), np.zeros_like(params.rho))
    g_alpha, g_rho = out
    g_alpha -= scale * params.alpha / sigma0**2
    for r, p in enumerate(params.parent_rows):
        if p < 0:
            g_rho[r] -= scale * params.rho[r] / sigma0**2
        else:
            d = scale * (params.rho[r] - params.rho[p]) / sigma**2
            g_rho[r] -= d
            g_rho[p] += d
    return out


# -- full objective -----------------------------------------------------------------

def objective(
    params: ModelParams,
    corpus: EncodedCorpus,
    tax: Taxonomy | None,
    cfg: ModelConfig,
    negatives: Sequence[np.ndarray],
) -> float:
    """Log joint: data log-likelihood under the given negatives plus all priors."""
    terms = data_terms(corpus, params, tax, cfg.propagate_data_to_ancestors)
    if len(negatives) != len(terms):
        raise ValueError(f"{len(negatives)} negative lists for {len(terms)} data terms")
    ll_pos, ll_neg, _ = data_loglik(params, terms, negatives, cfg)
    value = ll_pos + ll_neg + prior_logdensity(params, cfg.sigma, cfg.global_prior_std)
    if not np.isfinite(value):
        raise NumericalBlowup("numerical blowup: objective is not finite")
    return value


def objective_gradient(params, corpus, tax, cfg: ModelConfig, negatives):
    """Analytic gradient of :func:`objective` as (d_alpha, d_rho)."""
    terms = data_terms(corpus, params, tax, cfg.propagate_data_to_ancestors)
    grad = (np.zeros_like(params.alpha), np.zeros_like(params.rho))
    data_loglik(params, terms, negatives, cfg, grad=grad)
    prior_gradient(params, cfg.sigma, cfg.global_prior_std, out=grad)
    return grad
