"""``hierembed`` command line: vocab, train, eval, neighbors, deviations, synth, export.

Every subcommand accepts the full RunConfig keyspace as ``--flag`` options and
an optional ``--config FILE`` of ``key=value`` lines.  Explicit flags win over
the file, which wins over the built-in defaults.

Exit codes: 0 on success, 2 on usage errors or missing input files, 1 on
runtime errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config_file, parse_value
from .corpus import (
    CorpusError,
    RawRecord,
    Vocabulary,
    build_vocab,
    count_paths,
    encode_corpus,
    read_jsonl,
    record_sentences,
)
from .evaluation import EvalError, deviation_ranking, heldout_ll, nearest_neighbors
from .model import NegativeSampler, NumericalBlowup
from .storage import StorageError, export_word2vec, load_model, save_model
from .synthgen import SynthSpecError, generate
from .taxonomy import ROOT_NAME, Taxonomy, TaxonomyError, build_taxonomy, read_taxonomy_file, split_path
from .trainer import train

log = logging.getLogger("hierembed")


class UsageError(Exception):
    """Bad invocation; reported with exit code 2."""


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("run configuration")
    group.add_argument("--config", metavar="FILE", default=argparse.SUPPRESS,
                       help="key=value file read before the flags below")
    for f in fields(RunConfig):
        meta = f.metadata
        help_text = f"{meta.get('help', '')} (default: {f.default})"
        kw = dict(dest=f.name, default=argparse.SUPPRESS, help=help_text)
        if f.type in (bool, "bool"):
            group.add_argument(_flag(f.name), action=argparse.BooleanOptionalAction, **kw)
        else:
            group.add_argument(
                _flag(f.name),
                type=lambda raw, key=f.name: _typed(key, raw),
                metavar=f.name.upper(),
                **kw,
            )
    group.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr (default: off)")
    return parent


def _typed(key: str, raw: str):
    try:
        return parse_value(key, raw)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = _config_parent()
    parser = argparse.ArgumentParser(
        prog="hierembed",
        description="Hierarchical exponential-family word embeddings over taxonomy-tagged text.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text)

    p = add("vocab", "build a vocabulary file from a JSONL corpus")
    p.add_argument("corpus", help="input corpus (JSONL)")
    p.add_argument("out", help="output vocabulary (word<TAB>count)")

    p = add("train", "train one model variant and write a model directory")
    p.add_argument("corpus", help="training corpus (JSONL)")
    p.add_argument("vocab", help="vocabulary file from 'hierembed vocab'")
    p.add_argument("out_dir", help="output model directory")

    p = add("eval", "held-out per-observation log-likelihood as JSON")
    p.add_argument("model_dir", help="model directory")
    p.add_argument("corpus", help="held-out corpus (JSONL)")
    p.add_argument("--out", default=None, help="write the report here instead of stdout (default: stdout)")

    p = add("neighbors", "nearest neighbours of --word in the table of --node (TSV)")
    p.add_argument("model_dir", help="model directory")

    p = add("deviations", "words deviating most from the parent at --node (TSV)")
    p.add_argument("model_dir", help="model directory")

    p = add("synth", "generate a synthetic corpus with planted domain-specific words")
    p.add_argument("out_dir", help="output directory")

    p = add("export", "write the --node table (or --alpha) in word2vec text format")
    p.add_argument("model_dir", help="model directory")
    p.add_argument("out", help="output text file")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if "config" in args:
        _require_file(args.config)
        cfg = load_config_file(args.config)
    explicit = {k: getattr(args, k) for k in RunConfig.keys() if k in args}
    return cfg.replace(**explicit)


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _require_dir(path) -> Path:
    p = Path(path)
    if not (p / "manifest.json").is_file():
        raise UsageError(f"not a model directory: {path}")
    return p


def _records(path) -> list[RawRecord]:
    _require_file(path)
    return list(read_jsonl(path))


def _token_total(records, cfg: RunConfig) -> int:
    return sum(len(s) for r in records for s in record_sentences(r, cfg.tokenizer()))


def _node_id(tax: Taxonomy, path: str) -> int:
    if not path:
        raise UsageError("--node is required")
    return tax.resolve(path)


def _nearest_known(tax: Taxonomy, path: str) -> str:
    """Longest prefix of ``path`` present in the taxonomy (the root at worst)."""
    parts = split_path(path)
    for k in range(len(parts), 0, -1):
        candidate = "/".join(parts[:k])
        if candidate in tax.path_index:
            return candidate
    return ROOT_NAME


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- subcommands -----------------------------------------------------------

def cmd_vocab(args, cfg: RunConfig, out=sys.stdout) -> int:
    records = _records(args.corpus)
    vocab = build_vocab(records, cfg.max_size, cfg.tokenizer())
    vocab.save(args.out)
    print(f"V={len(vocab)} tokens={vocab.total_tokens}", file=out)
    return 0


def cmd_train(args, cfg: RunConfig, out=sys.stdout) -> int:
    records = _records(args.corpus)
    _require_file(args.vocab)
    vocab = Vocabulary.load(args.vocab, total_tokens=_token_total(records, cfg))
    extra = read_taxonomy_file(_require_file(cfg.taxonomy_file)) if cfg.taxonomy_file else ()
    tax = build_taxonomy(count_paths(records, cfg.tokenizer()), cfg.min_node_size, extra)
    corpus = encode_corpus(
        records, vocab, tax, cfg.subsample, cfg.subsample_threshold, cfg.seed, cfg.tokenizer()
    )
    if len(corpus) == 0:
        raise CorpusError("no in-vocabulary tokens left after encoding")
    tcfg = cfg.train_config()
    out_dir = Path(args.out_dir)

    def checkpoint(epoch, params):
        save_model(out_dir / f"checkpoint_{epoch:04d}", params, vocab, tax, asdict(cfg), epoch)

    params, report = train(corpus, tax, vocab, tcfg, on_checkpoint=checkpoint)
    save_model(out_dir, params, vocab, tax, asdict(cfg), tcfg.epochs)
    # timing stays out of the file so reruns are byte-identical
    saved = {k: v for k, v in report.to_dict().items() if k != "wall_clock_seconds"}
    _write_json(saved, out_dir / "train_report.json")
    print(
        f"variant={tcfg.variant} tables={len(params.node_ids)} "
        f"ll/pos={report.data_ll_per_position[-1]:.6f} checksum={report.checksum} "
        f"seconds={report.wall_clock_seconds:.2f}",
        file=out,
    )
    return 0


def cmd_eval(args, cfg: RunConfig, out=sys.stdout) -> int:
    params, vocab, tax, manifest = load_model(_require_dir(args.model_dir))
    trained = manifest["config"]
    records = [RawRecord(_nearest_known(tax, r.node_path), r.text, r.tokens) for r in _records(args.corpus)]
    corpus = encode_corpus(records, vocab, tax, False, rules=cfg.tokenizer())
    # the model architecture comes from the manifest; negatives and seed from the flags
    mcfg = RunConfig(**{**trained, "negatives": cfg.negatives, "seed": cfg.seed}).train_config()
    sampler = NegativeSampler.for_vocab(vocab, cfg.negative_distribution)
    report = heldout_ll(params, corpus, tax, mcfg, cfg.seed, sampler, variant=trained.get("variant", ""))
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    else:
        out.write(report.to_json())
    return 0


def cmd_neighbors(args, cfg: RunConfig, out=sys.stdout) -> int:
    params, vocab, tax, _ = load_model(_require_dir(args.model_dir))
    if not cfg.word:
        raise UsageError("--word is required")
    ranked = nearest_neighbors(params, vocab, _node_id(tax, cfg.node), cfg.word, cfg.k, cfg.exclude_self, tax)
    out.write(ranked.to_tsv())
    return 0


def cmd_deviations(args, cfg: RunConfig, out=sys.stdout) -> int:
    params, vocab, tax, _ = load_model(_require_dir(args.model_dir))
    node = _node_id(tax, cfg.node)
    if node == tax.root_id:
        raise EvalError("root has no parent")
    out.write(deviation_ranking(params, vocab, node, cfg.k, tax).to_tsv())
    return 0


def cmd_synth(args, cfg: RunConfig, out=sys.stdout) -> int:
    synth = generate(cfg.synth_spec())
    synth.write(args.out_dir, cfg.heldout_fraction)
    print(f"records={len(synth.records)} planted={len(synth.spec.planted)}", file=out)
    return 0


def cmd_export(args, cfg: RunConfig, out=sys.stdout) -> int:
    params, vocab, tax, _ = load_model(_require_dir(args.model_dir))
    if cfg.alpha:
        matrix = params.alpha
    else:
        matrix = params.rho[params.row_for(_node_id(tax, cfg.node), tax)]
    export_word2vec(args.out, vocab.words, matrix)
    return 0


COMMANDS = {
    "vocab": cmd_vocab,
    "train": cmd_train,
    "eval": cmd_eval,
    "neighbors": cmd_neighbors,
    "deviations": cmd_deviations,
    "synth": cmd_synth,
    "export": cmd_export,
}

RUNTIME_ERRORS = (
    CorpusError, TaxonomyError, EvalError, StorageError, SynthSpecError,
    NumericalBlowup, ValueError, OSError,
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg, sys.stdout)
    except (UsageError, ConfigError) as exc:
        print(f"hierembed {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"hierembed {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
