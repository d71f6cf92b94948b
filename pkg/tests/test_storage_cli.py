import json

import numpy as np
import pytest

from hierembed import cli
from hierembed.config import ConfigError, RunConfig, load_config_file
from hierembed.corpus import Vocabulary
from hierembed.model import ModelParams
from hierembed.storage import (
    MAGIC,
    StorageError,
    export_word2vec,
    import_word2vec,
    load_model,
    read_matrix,
    save_model,
    write_matrix,
)
from hierembed.taxonomy import build_taxonomy

SMALL = ["--sentences-per-node", "60", "--heldout-fraction", "0.25", "--vocab-size", "200", "--seed", "4"]
FAST = ["--dim", "4", "--epochs", "1", "--no-subsample"]


class TestStorage:
    def test_matrix_format(self, tmp_path):
        m = np.arange(6, dtype=np.float64).reshape(3, 2) / 7
        write_matrix(tmp_path / "m.bin", m)
        raw = (tmp_path / "m.bin").read_bytes()
        assert raw[:8] == MAGIC == b"HEMB0001"
        assert len(raw) == 8 + 6 * 4
        np.testing.assert_array_equal(np.frombuffer(raw[8:], "<f4").reshape(3, 2), m.astype(np.float32))
        np.testing.assert_array_equal(read_matrix(tmp_path / "m.bin", (3, 2)), m.astype(np.float32))

    def test_bad_magic(self, tmp_path):
        (tmp_path / "m.bin").write_bytes(b"XXXXXXXX" + bytes(8))
        with pytest.raises(StorageError, match="magic"):
            read_matrix(tmp_path / "m.bin", (1, 2))

    def test_model_roundtrip(self, tmp_path):
        tax = build_taxonomy({"a/b": 2, "c": 1})
        vocab = Vocabulary(["x", "y", "z"], [3, 2, 1], 7)
        p = ModelParams.zeros(tax, 3, 2)
        p.alpha[:] = np.random.default_rng(0).normal(size=p.alpha.shape)
        p.rho[:] = np.random.default_rng(1).normal(size=p.rho.shape)
        save_model(tmp_path, p, vocab, tax, {"dim": 2}, epoch=3)
        q, v2, t2, manifest = load_model(tmp_path)
        assert q.checksum() == p.checksum() == manifest["checksum"]
        assert q.node_ids == p.node_ids
        np.testing.assert_array_equal(q.parent_rows, p.parent_rows)
        assert v2.words == vocab.words and v2.total_tokens == 7
        assert t2.to_dict() == tax.to_dict()
        assert manifest["epoch"] == 3

    def test_word2vec_format(self, tmp_path):
        m = np.array([[1.5, -2.0], [0.1, 3.25], [1e-8, 7.0]])
        export_word2vec(tmp_path / "e.txt", ["a", "b", "c"], m)
        lines = (tmp_path / "e.txt").read_text().splitlines()
        assert len(lines) == 4 and lines[0] == "3 2"
        words, back = import_word2vec(tmp_path / "e.txt")
        assert words == ["a", "b", "c"]
        np.testing.assert_array_equal(back, m.astype(np.float32))

    def test_word2vec_roundtrip_random(self, tmp_path):
        m = np.random.default_rng(5).normal(scale=10, size=(50, 7)).astype(np.float32)
        export_word2vec(tmp_path / "e.txt", [f"w{i}" for i in range(50)], m)
        np.testing.assert_array_equal(import_word2vec(tmp_path / "e.txt")[1], m)


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.max_size == 50_000
        assert (cfg.dim, cfg.window, cfg.negatives, cfg.sigma) == (100, 4, 10, 10.0)
        assert cfg.subsample_threshold == 1e-5
        assert all(f.metadata.get("help") for f in cfg.__dataclass_fields__.values())

    def test_file_and_unknown_key(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\ndim = 8\nsubsample = no\nvariant=global  # trailing\n")
        cfg = load_config_file(path)
        assert (cfg.dim, cfg.subsample, cfg.variant) == (8, False, "global")
        path.write_text("dimension = 8\n")
        with pytest.raises(ConfigError, match="dimension"):
            load_config_file(path)

    def test_bad_values(self, tmp_path):
        path = tmp_path / "run.cfg"
        for text in ("dim = eight\n", "variant = flat\n", "subsample = maybe\n", "dim\n"):
            path.write_text(text)
            with pytest.raises(ConfigError):
                load_config_file(path)

    def test_train_config_mapping(self):
        tcfg = RunConfig(dim=7, variant="grouped", seed=3).train_config()
        assert (tcfg.dim, tcfg.variant, tcfg.seed) == (7, "grouped", 3)


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def synth_dir(tmp_path, capsys):
    d = tmp_path / "synth"
    code, _, _ = run(["synth", d, *SMALL], capsys)
    assert code == 0
    code, out, _ = run(["vocab", d / "train.jsonl", tmp_path / "vocab.tsv"], capsys)
    assert code == 0 and out.startswith("V=200 ")
    return d


class TestCLI:
    @pytest.mark.parametrize("cmd", sorted(cli.COMMANDS))
    def test_help_lists_flags_with_defaults(self, cmd, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main([cmd, "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for key in RunConfig.keys():
            assert "--" + key.replace("_", "-") in out
        assert "(default: 50000)" in out and "(default: 100)" in out

    def test_missing_file_exit_two(self, tmp_path, capsys):
        code, _, err = run(["vocab", tmp_path / "nope.jsonl", tmp_path / "v.tsv"], capsys)
        assert code == 2 and "nope.jsonl" in err

    def test_usage_error_exit_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["train", "--dim", "x", "a", "b", "c"])
        assert exc.value.code == 2

    def test_vocab_max_size(self, synth_dir, tmp_path, capsys):
        code, out, _ = run(["vocab", synth_dir / "train.jsonl", tmp_path / "v.tsv", "--max-size", "100"], capsys)
        assert code == 0 and out.startswith("V=100 ")
        assert len((tmp_path / "v.tsv").read_text().splitlines()) == 100

    def test_pipeline(self, synth_dir, tmp_path, capsys):
        vocab, model = tmp_path / "vocab.tsv", tmp_path / "model"
        code, _, _ = run(["train", synth_dir / "train.jsonl", vocab, model, *FAST, "--checkpoint-every", "1"], capsys)
        assert code == 0
        assert (model / "checkpoint_0001" / "manifest.json").is_file()
        report = json.loads((model / "train_report.json").read_text())
        assert report["checksum"] == json.loads((model / "manifest.json").read_text())["checksum"]

        reports = []
        for split in ("train", "heldout"):
            out_file = tmp_path / f"{split}.json"
            code, _, _ = run(["eval", model, synth_dir / f"{split}.jsonl", "--out", out_file], capsys)
            assert code == 0
            reports.append(json.loads(out_file.read_text()))
        assert all(r["per_observation_ll"] <= 0 and r["n_positions"] > 0 for r in reports)

        truth = json.loads((synth_dir / "truth.json").read_text())
        node = next(k for k, v in truth.items() if v)
        code, out, _ = run(["deviations", model, "--node", node, "--k", "5"], capsys)
        assert code == 0 and len(out.splitlines()) == 5

        code, out, _ = run(["neighbors", model, "--node", node, "--word", truth[node][0], "--k", "3"], capsys)
        assert code == 0 and [l.split("\t")[0] for l in out.splitlines()] == ["1", "2", "3"]

        code, _, _ = run(["export", model, tmp_path / "rho.txt", "--node", node], capsys)
        assert code == 0
        assert (tmp_path / "rho.txt").read_text().splitlines()[0] == "200 4"

    def test_runtime_errors_exit_one(self, synth_dir, tmp_path, capsys):
        model = tmp_path / "model"
        run(["train", synth_dir / "train.jsonl", tmp_path / "vocab.tsv", model, *FAST], capsys)
        code, _, err = run(["deviations", model, "--node", "Global"], capsys)
        assert code == 1 and "root has no parent" in err
        code, _, err = run(["neighbors", model, "--node", "dom0", "--word", "qqq"], capsys)
        assert code == 1 and "unknown word" in err
        code, _, err = run(["deviations", model, "--node", "dom9"], capsys)
        assert code == 1 and "dom9" in err

    def test_global_variant_has_one_table(self, synth_dir, tmp_path, capsys):
        model = tmp_path / "g"
        code, _, _ = run(["train", synth_dir / "train.jsonl", tmp_path / "vocab.tsv", model, *FAST,
                          "--variant", "global"], capsys)
        assert code == 0
        assert sorted(p.name for p in model.glob("rho_*.bin")) == ["rho_0.bin"]

    def test_export_alpha(self, synth_dir, tmp_path, capsys):
        model = tmp_path / "m"
        run(["train", synth_dir / "train.jsonl", tmp_path / "vocab.tsv", model, *FAST], capsys)
        code, _, _ = run(["export", model, tmp_path / "alpha.txt", "--alpha"], capsys)
        assert code == 0
        words, matrix = import_word2vec(tmp_path / "alpha.txt")
        params, vocab, _, _ = load_model(model)
        assert words == vocab.words
        np.testing.assert_array_equal(matrix, params.alpha.astype(np.float32))

    def test_seeded_runs_identical(self, synth_dir, tmp_path, capsys):
        sums = []
        for name in ("m1", "m2"):
            run(["train", synth_dir / "train.jsonl", tmp_path / "vocab.tsv", tmp_path / name, *FAST,
                 "--seed", "7", "--threads", "1"], capsys)
            sums.append(json.loads((tmp_path / name / "manifest.json").read_text())["checksum"])
        assert sums[0] == sums[1]

    def test_config_file_then_flags(self, synth_dir, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("dim = 3\nepochs = 1\nsubsample = false\nvariant = global\n")
        model = tmp_path / "m"
        code, _, _ = run(["train", synth_dir / "train.jsonl", tmp_path / "vocab.tsv", model,
                          "--config", cfg, "--variant", "grouped"], capsys)
        assert code == 0
        manifest = json.loads((model / "manifest.json").read_text())
        assert manifest["dim"] == 3 and manifest["config"]["variant"] == "grouped"
        cfg.write_text("bogus = 1\n")
        code, _, err = run(["train", synth_dir / "train.jsonl", tmp_path / "vocab.tsv", model, "--config", cfg], capsys)
        assert code == 2 and "bogus" in err
