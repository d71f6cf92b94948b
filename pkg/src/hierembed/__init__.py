"""Hierarchical Bernoulli exponential-family word embeddings."""
from .corpus import RawRecord, TokenizerConfig, Vocabulary, build_vocab, encode_corpus, read_jsonl
from .evaluation import deviation_ranking, heldout_ll, nearest_neighbors
from .model import ModelConfig, ModelParams, objective
from .synthgen import SynthSpec, generate
from .taxonomy import Taxonomy, build_taxonomy
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "ModelParams",
    "RawRecord",
    "SynthSpec",
    "Taxonomy",
    "TokenizerConfig",
    "TrainConfig",
    "Vocabulary",
    "build_taxonomy",
    "build_vocab",
    "deviation_ranking",
    "encode_corpus",
    "generate",
    "heldout_ll",
    "nearest_neighbors",
    "objective",
    "read_jsonl",
    "train",
]
