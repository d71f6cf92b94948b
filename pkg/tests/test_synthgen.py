import json

import numpy as np
import pytest

from hierembed.corpus import build_vocab, count_paths, encode_corpus, read_jsonl
from hierembed.synthgen import PlantedWord, SynthSpec, SynthSpecError, generate, leaf_paths
from hierembed.taxonomy import build_taxonomy


def small(**kw):
    base = dict(sentences_per_node=100, seed=2)
    base.update(kw)
    return SynthSpec(**base)


def test_no_shift_means_empty_truth():
    sc = generate(small(shift_strength=0.0))
    assert all(v == [] for v in sc.truth.values())
    lengths = {len(r.text.split()) for r in sc.records}
    assert lengths == {sc.spec.sentence_length}


def test_full_shift_every_node_a_sentence_planted():
    sc = generate(small(shift_strength=1.0))
    for p in sc.spec.planted:
        texts = [r.text.split() for r in sc.records if r.node_path == p.node_a]
        assert len(texts) == 100
        assert all(p.word in t for t in texts)
        assert all(set(p.partner_set_a) & set(t) for t in texts)


def test_window_mates_are_partners():
    spec = small(shift_strength=1.0)
    sc = generate(spec)
    w = spec.window
    for p in sc.spec.planted:
        mates = hits = 0
        for r in sc.records:
            if r.node_path != p.node_a:
                continue
            toks = r.text.split()
            for i, t in enumerate(toks):
                if t != p.word:
                    continue
                for j in range(max(0, i - w), min(len(toks), i + w + 1)):
                    if j != i:
                        mates += 1
                        hits += toks[j] in p.partner_set_a
        assert hits / mates >= 0.9


def test_default_spec_counts():
    sc = generate(SynthSpec())
    leaves = leaf_paths((3, 2))
    assert len(leaves) == 6 and len(sc.records) == 6 * 2000
    assert len(sc.spec.planted) == 5
    # each planted word appears in about p * 2000 sentences of each of its two domains
    for p in sc.spec.planted:
        for node in (p.node_a, p.node_b):
            n = sum(p.word in r.text.split() for r in sc.records if r.node_path == node)
            assert abs(n - 600) < 5 * np.sqrt(2000 * 0.3 * 0.7)
    n_truth = sum(len(v) for v in sc.truth.values())
    assert n_truth == 10


def test_parses_through_corpus_pipeline():
    sc = generate(small())
    vocab = build_vocab(sc.records)
    tax = build_taxonomy(count_paths(sc.records))
    enc = encode_corpus(sc.records, vocab, tax)
    assert len(enc) == len(sc.records)
    planted = {p.word for p in sc.spec.planted}
    assert planted <= set(vocab.words)


def test_deterministic_files(tmp_path):
    for d in ("a", "b"):
        generate(small(seed=9)).write(tmp_path / d, heldout_fraction=0.2)
    for name in ("corpus.jsonl", "train.jsonl", "heldout.jsonl", "truth.json", "synth_spec.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    spec = json.loads((tmp_path / "a" / "synth_spec.json").read_text())
    assert SynthSpec.from_dict(spec).planted == generate(small(seed=9)).spec.planted
    assert len(list(read_jsonl(tmp_path / "a" / "corpus.jsonl"))) == 600


@pytest.mark.parametrize("planted", [
    [PlantedWord("w0100", "dom0/sub0_0", ["w0101"], "dom0/sub0_1", ["w0101"])],
    [PlantedWord("w0100", "dom0/sub0_0", ["w0100"], "dom0/sub0_1", ["w0102"])],
    [PlantedWord("w0100", "dom0", ["w0101"], "dom0/sub0_1", ["w0102"])],
    [PlantedWord("w9999", "dom0/sub0_0", ["w0101"], "dom0/sub0_1", ["w0102"])],
])
def test_invalid_planted(planted):
    with pytest.raises(SynthSpecError):
        generate(small(planted=planted))


def test_invalid_spec():
    with pytest.raises(SynthSpecError):
        generate(small(shift_strength=1.5))
    with pytest.raises(SynthSpecError):
        generate(small(run_length=3))
