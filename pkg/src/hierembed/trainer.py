"""Stochastic gradient ascent on the hierarchical embedding objective."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .corpus import EncodedCorpus, Vocabulary
from .model import (
    Batch,
    ModelConfig,
    ModelParams,
    NegativeSampler,
    NumericalBlowup,
    batch_loglik,
    context_sum,
    data_terms,
    draw_negatives,
    natural_param,
    prior_gradient,
    prior_logdensity,
    sigmoid,
    with_zero_row,
)
from .taxonomy import Taxonomy

log = logging.getLogger(__name__)

VARIANTS = ("global", "grouped", "hierarchical")
OPTIMIZERS = ("sgd", "adagrad")


@dataclass
class TrainConfig(ModelConfig):
    learning_rate: float = 0.05
    optimizer: str = "adagrad"
    adagrad_eps: float = 1e-8
    epochs: int = 5
    minibatch: int = 64
    init_std: float = 0.1
    threads: int = 1
    checkpoint_every: int = 0
    variant: str = "hierarchical"
    lr_decay: bool = False
    resample_negatives: bool = True

    def __post_init__(self):
        super().__post_init__()
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.minibatch < 1:
            raise ValueError("minibatch must be >= 1")
        if self.init_std < 0:
            raise ValueError("init_std must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    def model_config(self) -> ModelConfig:
        names = ModelConfig.__dataclass_fields__
        return ModelConfig(**{k: v for k, v in asdict(self).items() if k in names})


@dataclass
class TrainReport:
    variant: str
    seed: int
    objective: list[float] = field(default_factory=list)
    data_ll_per_position: list[float] = field(default_factory=list)
    n_data_terms: int = 0
    n_positions: int = 0
    checksum: str = ""
    wall_clock_seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def variant_taxonomy(tax: Taxonomy, variant: str) -> Taxonomy:
    if variant == "global":
        return tax.flatten(0)
    if variant == "grouped":
        return tax.flatten(min(1, tax.depth))
    if variant == "hierarchical":
        return tax
    raise ValueError(f"unknown variant {variant!r}")


def init_params(vocab: Vocabulary | int, tax: Taxonomy, cfg: TrainConfig, rng) -> ModelParams:
    """Gaussian alpha and root table; every other table starts as a copy of its parent."""
    V = vocab if isinstance(vocab, int) else len(vocab)
    params = ModelParams.zeros(tax, V, cfg.dim)
    params.alpha[:] = rng.normal(0.0, cfg.init_std, size=params.alpha.shape)
    params.rho[0] = rng.normal(0.0, cfg.init_std, size=params.alpha.shape)
    for r in range(1, len(params.node_ids)):
        params.rho[r] = params.rho[params.parent_rows[r]]
    return params


@dataclass
class SparseGrad:
    rho: dict = field(default_factory=dict)    # (node_id, word) -> K-vector
    alpha: dict = field(default_factory=dict)  # word -> K-vector

    def add(self, store: dict, key, vec):
        if key in store:
            store[key] = store[key] + vec
        else:
            store[key] = np.array(vec, dtype=np.float64)


def grad_data_term(params: ModelParams, sentence, i: int, negatives, node_id: int, w: int) -> SparseGrad:
    """Gradient of one position's positive and negative log-probabilities.

    Touches only the rows of the true word, the negatives (in ``node_id``'s
    table) and the context words (in ``alpha``).
    """
    tokens = np.asarray(getattr(sentence, "tokens", sentence))
    rho = params.table(node_id)
    ctx = context_sum(tokens, i, w, params.alpha)
    v = int(tokens[i])
    out = SparseGrad()
    c_pos = 1.0 - float(sigmoid(natural_param(rho[v], ctx)))
    out.add(out.rho, (node_id, v), c_pos * ctx)
    g_ctx = c_pos * rho[v]
    for u in negatives:
        u = int(u)
        c_neg = -float(sigmoid(natural_param(rho[u], ctx)))
        out.add(out.rho, (node_id, u), c_neg * ctx)
        g_ctx = g_ctx + c_neg * rho[u]
    lo, hi = max(0, i - w), min(len(tokens), i + w + 1)
    for j in range(lo, hi):
        if j != i:
            out.add(out.alpha, int(tokens[j]), g_ctx)
    return out


def grad_prior_terms(params: ModelParams, sigma: float, sigma0: float, scale: float = 1.0):
    """Dense (d_alpha, d_rho) of all prior terms; every row is touched."""
    return prior_gradient(params, sigma, sigma0, scale)


class _Optimizer:
    def __init__(self, cfg: TrainConfig, params: ModelParams):
        self.cfg = cfg
        self.adagrad = cfg.optimizer == "adagrad"
        if self.adagrad:
            self.acc_alpha = np.zeros_like(params.alpha)
            self.acc_rho = np.zeros_like(params.rho)

    def step(self, params: ModelParams, g_alpha, g_rho, lr: float):
        if self.adagrad:
            eps = self.cfg.adagrad_eps
            self.acc_alpha += g_alpha * g_alpha
            self.acc_rho += g_rho * g_rho
            params.alpha += lr * g_alpha / (np.sqrt(self.acc_alpha) + eps)
            params.rho += lr * g_rho / (np.sqrt(self.acc_rho) + eps)
        else:
            params.alpha += lr * g_alpha
            params.rho += lr * g_rho


def train(
    corpus: EncodedCorpus,
    tax: Taxonomy,
    vocab: Vocabulary | int,
    cfg: TrainConfig,
    on_checkpoint: Callable[[int, ModelParams], None] | None = None,
    params: ModelParams | None = None,
) -> tuple[ModelParams, TrainReport]:
    """Fit the selected variant by minibatch ascent.

    ``tax`` is the taxonomy the corpus was encoded against; the global and
    grouped variants train on flattened copies of it.  Negatives and the
    sentence order are redrawn every epoch from generators keyed on
    ``(seed, epoch)``, so single-threaded runs are bit-reproducible.
    """
    if len(corpus) == 0:
        raise ValueError("cannot train on an empty corpus")
    started = time.perf_counter()
    model_tax = variant_taxonomy(tax, cfg.variant)
    V = vocab if isinstance(vocab, int) else len(vocab)
    if params is None:
        params = init_params(V, model_tax, cfg, np.random.default_rng([cfg.seed, 0]))
    counts = None if isinstance(vocab, int) else vocab.count
    sampler = NegativeSampler(V, cfg.negative_distribution, counts)
    terms = data_terms(corpus, params, tax, cfg.propagate_data_to_ancestors)
    N = len(terms)
    report = TrainReport(cfg.variant, cfg.seed, n_data_terms=N, n_positions=sum(len(t.tokens) for t in terms))
    opt = _Optimizer(cfg, params)
    n_batches = -(-N // cfg.minibatch)
    total_steps = cfg.epochs * n_batches
    fixed = None
    if not cfg.resample_negatives:
        fixed = draw_negatives(terms, sampler, cfg.negatives, np.random.default_rng([cfg.seed, 2]))

    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, 1, epoch])
        order = rng.permutation(N)
        if fixed is None:
            negs = draw_negatives([terms[i] for i in order], sampler, cfg.negatives, rng)
        else:
            negs = [fixed[i] for i in order]
        batches = [
            (order[s : s + cfg.minibatch], negs[s : s + cfg.minibatch])
            for s in range(0, N, cfg.minibatch)
        ]
        step0 = epoch * n_batches

        def run(shard):
            with np.errstate(over="ignore", invalid="ignore"):
                return _run(shard)

        def _run(shard):
            g_alpha = np.zeros((V + 1, cfg.dim))
            g_rho = np.zeros_like(params.rho)
            obj = ll = 0.0
            for step, (idx, neg) in shard:
                g_alpha[:] = 0.0
                g_rho[:] = 0.0
                batch = Batch.build([terms[i] for i in idx], neg, cfg.negatives)
                alpha = with_zero_row(params.alpha)
                p, q = batch_loglik(alpha, params.rho, batch, cfg.window, cfg.context_mean, (g_alpha, g_rho))
                weight = len(idx) / N
                prior_gradient(params, cfg.sigma, cfg.global_prior_std, weight, (g_alpha[:-1], g_rho))
                obj += p + q + weight * prior_logdensity(params, cfg.sigma, cfg.global_prior_std)
                ll += p + q
                lr = cfg.learning_rate
                if cfg.lr_decay:
                    lr *= max(1.0 - (step0 + step) / total_steps, 1e-4)
                opt.step(params, g_alpha[:-1], g_rho, lr)
                if not (np.isfinite(params.alpha).all() and np.isfinite(params.rho).all()):
                    raise NumericalBlowup(
                        f"numerical blowup at epoch {epoch + 1}, step {step + 1}; "
                        "try a lower learning rate"
                    )
            return obj, ll

        indexed = list(enumerate(batches))
        if cfg.threads == 1:
            results = [run(indexed)]
        else:
            shards = [indexed[k :: cfg.threads] for k in range(cfg.threads)]
            with ThreadPoolExecutor(cfg.threads) as pool:
                results = list(pool.map(run, shards))
        report.objective.append(float(sum(r[0] for r in results)))
        report.data_ll_per_position.append(float(sum(r[1] for r in results)) / report.n_positions)
        log.info(
            "epoch %d/%d objective %.4f ll/pos %.4f",
            epoch + 1, cfg.epochs, report.objective[-1], report.data_ll_per_position[-1],
        )
        if on_checkpoint is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            on_checkpoint(epoch + 1, params)

    report.checksum = params.checksum()
    report.wall_clock_seconds = time.perf_counter() - started
    return params, report
