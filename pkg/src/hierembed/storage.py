"""Model directories and word2vec-style text export.

A model directory holds

* ``manifest.json``: config, vocabulary checksum, taxonomy, epoch, shapes and
  the file name of every table;
* ``vocab.tsv``: the training vocabulary;
* ``alpha.bin`` and one ``rho_<node id>.bin`` per node: 8-byte magic
  ``HEMB0001`` followed by little-endian float32 values in row-major order.
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .model import ModelParams
from .taxonomy import Taxonomy

MAGIC = b"HEMB0001"
FORMAT_VERSION = 1


class StorageError(ValueError):
    pass


def write_matrix(path, matrix: np.ndarray) -> None:
    data = np.ascontiguousarray(matrix, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(data.tobytes())


def read_matrix(path, shape: tuple[int, int]) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise StorageError(f"{path}: bad magic {raw[:8]!r}")
    body = np.frombuffer(raw, dtype="<f4", offset=8)
    if body.size != shape[0] * shape[1]:
        raise StorageError(f"{path}: expected {shape[0]}x{shape[1]} floats, found {body.size}")
    return body.reshape(shape).astype(np.float64)


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_model(
    out_dir,
    params: ModelParams,
    vocab: Vocabulary,
    tax: Taxonomy,
    config,
    epoch: int,
) -> Path:
    """Write a self-contained model directory.

    ``tax`` is the full taxonomy the corpus was encoded against; the manifest
    also lists the subset of nodes that have tables.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    V, K = params.alpha.shape
    write_matrix(out / "alpha.bin", params.alpha)
    tables = []
    for r, node_id in enumerate(params.node_ids):
        name = f"rho_{node_id}.bin"
        write_matrix(out / name, params.rho[r])
        parent = int(params.parent_rows[r])
        tables.append(
            {
                "node_id": node_id,
                "path": tax.path_of(node_id),
                "parent_id": None if parent < 0 else params.node_ids[parent],
                "file": name,
            }
        )
    vocab.save(out / "vocab.tsv")
    manifest = {
        "format": "HEMB0001",
        "format_version": FORMAT_VERSION,
        "dtype": "float32-le",
        "vocab_size": V,
        "dim": K,
        "epoch": epoch,
        "vocab_checksum": vocab.checksum(),
        "vocab_total_tokens": int(vocab.total_tokens),
        "alpha_file": "alpha.bin",
        "tables": tables,
        "taxonomy": tax.to_dict(),
        "config": asdict(config) if not isinstance(config, dict) else config,
        "checksum": params.checksum(),
    }
    _dump_json(manifest, out / "manifest.json")
    return out


def load_model(model_dir):
    """Return (params, vocab, taxonomy, manifest)."""
    d = Path(model_dir)
    manifest_path = d / "manifest.json"
    if not manifest_path.exists():
        raise StorageError(f"no manifest.json in {d}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    V, K = manifest["vocab_size"], manifest["dim"]
    vocab = Vocabulary.load(d / "vocab.tsv", total_tokens=manifest.get("vocab_total_tokens"))
    if vocab.checksum() != manifest["vocab_checksum"]:
        raise StorageError(f"{d}: vocabulary checksum mismatch")
    if len(vocab) != V:
        raise StorageError(f"{d}: vocabulary has {len(vocab)} words, manifest says {V}")
    alpha = read_matrix(d / manifest["alpha_file"], (V, K))
    ids = [t["node_id"] for t in manifest["tables"]]
    row = {n: r for r, n in enumerate(ids)}
    parents = [-1 if t["parent_id"] is None else row[t["parent_id"]] for t in manifest["tables"]]
    rho = np.stack([read_matrix(d / t["file"], (V, K)) for t in manifest["tables"]])
    params = ModelParams(alpha, rho, ids, np.array(parents))
    tax = Taxonomy.from_dict(manifest["taxonomy"])
    return params, vocab, tax, manifest


def export_word2vec(path, words, matrix: np.ndarray) -> None:
    """Text format: a ``V K`` header, then ``word v1 ... vK`` per line."""
    V, K = matrix.shape
    if len(words) != V:
        raise StorageError(f"{len(words)} words for {V} rows")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{V} {K}\n")
        for w, vec in zip(words, np.asarray(matrix, dtype=np.float32)):
            fh.write(w + " " + " ".join(f"{float(x):.9g}" for x in vec) + "\n")


def import_word2vec(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise StorageError(f"{path}: expected a 'V K' header line")
        V, K = int(header[0]), int(header[1])
        words = []
        matrix = np.empty((V, K), dtype=np.float32)
        for i in range(V):
            parts = fh.readline().rstrip("\n").split(" ")
            if len(parts) != K + 1:
                raise StorageError(f"{path}: line {i + 2} has {len(parts) - 1} values, expected {K}")
            words.append(parts[0])
            matrix[i] = [float(x) for x in parts[1:]]
    return words, matrix
