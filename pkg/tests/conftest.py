import numpy as np
import pytest

from hierembed.corpus import EncodedCorpus, EncodedSentence
from hierembed.model import (
    ModelConfig,
    ModelParams,
    NegativeSampler,
    fixed_negatives,
    objective,
    objective_gradient,
)
from hierembed.taxonomy import build_taxonomy


def random_instance(seed, V=None, K=None, depth=None, n_sent=None, nu=3, window=2, scale=0.5):
    """Tiny random model, corpus and fixed negatives."""
    rng = np.random.default_rng(seed)
    V = V or int(rng.integers(4, 16))
    K = K or int(rng.integers(1, 4))
    depth = int(rng.integers(0, 3)) if depth is None else depth
    paths = {"Global": 1}
    if depth >= 1:
        paths.update({"a": 1, "b": 1})
    if depth >= 2:
        paths.update({"a/x": 1, "a/y": 1})
    tax = build_taxonomy(paths)
    ids = tax.node_ids()
    n_sent = n_sent or int(rng.integers(1, 6))
    sentences = [
        EncodedSentence(rng.integers(0, V, size=int(rng.integers(1, 7))), int(rng.choice(ids)))
        for _ in range(n_sent)
    ]
    corpus = EncodedCorpus(sentences)
    params = ModelParams.zeros(tax, V, K)
    params.alpha[:] = rng.normal(0, scale, size=params.alpha.shape)
    params.rho[:] = rng.normal(0, scale, size=params.rho.shape)
    cfg = ModelConfig(dim=K, window=window, negatives=nu, sigma=float(rng.uniform(0.5, 3)),
                      global_prior_std=float(rng.uniform(0.5, 2)))
    negs = fixed_negatives(corpus, params, tax, cfg, NegativeSampler(V), seed)
    return params, corpus, tax, cfg, negs


def finite_difference_error(seed, h=1e-6):
    """Relative error ||analytic - central difference|| / max of the two norms."""
    params, corpus, tax, cfg, negs = random_instance(seed, V=int(np.random.default_rng(seed).integers(3, 16)))
    g_alpha, g_rho = objective_gradient(params, corpus, tax, cfg, negs)
    analytic = np.concatenate([g_alpha.ravel(), g_rho.ravel()])
    numeric = np.zeros_like(analytic)
    flat = [params.alpha, params.rho]
    k = 0
    for arr in flat:
        view = arr.reshape(-1)
        for idx in range(view.size):
            old = view[idx]
            view[idx] = old + h
            up = objective(params, corpus, tax, cfg, negs)
            view[idx] = old - h
            down = objective(params, corpus, tax, cfg, negs)
            view[idx] = old
            numeric[k] = (up - down) / (2 * h)
            k += 1
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return np.linalg.norm(analytic - numeric) / denom


@pytest.fixture
def tiny_instance():
    return random_instance(0)


# acceptance criteria report their outcome here; printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
