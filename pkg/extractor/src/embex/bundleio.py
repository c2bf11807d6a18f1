"""Write extraction output as an analysis-ready bundle directory.

Layout (little-endian payloads, checksummed in the manifest):
    manifest.json                      metadata + per-file sha256
    signals.f32                        row-major [n_electrodes x n_samples] float32
    electrodes.csv                     id,roi,x,y,z,selected
    words.csv                          index,text,onset_s,top_rank
    embeddings/<set>/layer_<k>.f32     row-major [n_words x dim] float32, k from 01

The format requires a recording block with at least one electrode, but an
extraction bundle has no recording yet, so a fresh bundle carries an
explicit placeholder: one unselected electrode and a single zero sample.
Anything consuming the signals will fail loudly rather than analyze
silence; the placeholder is also noted in the manifest provenance.

Writing into an existing bundle adds or replaces one embedding set after
verifying the word list matches. Word ranks are upgraded in place when
the existing bundle has none (a static-only bundle later joined by a
contextual set).
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import BundleMismatch, ExtractorError
from .extract import EmbeddedWord

MANIFEST_VERSION = 1
PLACEHOLDER_SAMPLE_RATE = 512.0
PLACEHOLDER_NOTE = "signals/electrodes are placeholders; no recording merged"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _layer_filename(k: int, layer_count: int) -> str:
    width = max(2, len(str(layer_count)))
    return f"layer_{k:0{width}d}.f32"


def _write_words_csv(path: Path, words: list[EmbeddedWord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "text", "onset_s", "top_rank"])
        for word in words:
            rank = "" if word.top_rank is None else word.top_rank
            w.writerow([word.index, word.text, repr(word.onset), rank])


def _read_words_csv(path: Path) -> list[EmbeddedWord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rank = None if row["top_rank"] == "" else int(row["top_rank"])
            out.append(EmbeddedWord(int(row["index"]), row["text"],
                                    float(row["onset_s"]), rank))
    return out


def _init_bundle(root: Path, words: list[EmbeddedWord]) -> dict:
    root.mkdir(parents=True, exist_ok=True)
    (root / "embeddings").mkdir(exist_ok=True)

    np.zeros((1, 1), dtype="<f4").tofile(root / "signals.f32")
    with open(root / "electrodes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "roi", "x", "y", "z", "selected"])
        w.writerow(["placeholder_0", "other", "", "", "", 0])
    _write_words_csv(root / "words.csv", words)

    return {
        "version": MANIFEST_VERSION,
        "n_electrodes": 1,
        "n_samples": 1,
        "sample_rate": PLACEHOLDER_SAMPLE_RATE,
        "t0": 0.0,
        "n_words": len(words),
        "embedding_sets": [],
        "provenance": [PLACEHOLDER_NOTE],
        "checksums": {
            "signals.f32": _sha256(root / "signals.f32"),
            "electrodes.csv": _sha256(root / "electrodes.csv"),
            "words.csv": _sha256(root / "words.csv"),
        },
    }


def _merge_words(root: Path, manifest: dict,
                 words: list[EmbeddedWord]) -> list[EmbeddedWord]:
    """Check the incoming word list against words.csv; upgrade absent ranks."""
    existing = _read_words_csv(root / "words.csv")
    if len(existing) != len(words):
        raise BundleMismatch(
            f"bundle has {len(existing)} words, incoming set has {len(words)}"
        )
    for have, new in zip(existing, words):
        if (have.index, have.text) != (new.index, new.text) or have.onset != new.onset:
            raise BundleMismatch(
                f"word {new.index} differs from bundle "
                f"({have.text!r}@{have.onset} vs {new.text!r}@{new.onset})"
            )
        if have.top_rank is not None and new.top_rank is not None \
                and have.top_rank != new.top_rank:
            raise BundleMismatch(
                f"word {new.index} ({new.text!r}) rank {new.top_rank} "
                f"conflicts with stored rank {have.top_rank}"
            )
    new_ranks = any(w.top_rank is not None for w in words)
    old_ranks = any(w.top_rank is not None for w in existing)
    if new_ranks and not old_ranks:
        _write_words_csv(root / "words.csv", words)
        manifest["checksums"]["words.csv"] = _sha256(root / "words.csv")
        return words
    return existing


def write_embedding_set(out_dir: str | Path, words: list[EmbeddedWord],
                        name: str, kind: str, layers: list[np.ndarray],
                        provenance_entry: str) -> Path:
    """Create a bundle at out_dir, or extend one, with a single embedding set."""
    if not layers:
        raise ExtractorError(f"embedding set {name!r} has no layers")
    dims = {tuple(layer.shape) for layer in layers}
    if len(dims) != 1 or layers[0].shape[0] != len(words):
        raise ExtractorError(
            f"embedding set {name!r}: layer shapes {sorted(dims)} do not "
            f"match {len(words)} words"
        )

    root = Path(out_dir)
    manifest_path = root / "manifest.json"
    try:
        if manifest_path.is_file():
            with open(manifest_path) as fh:
                manifest = json.load(fh)
            _merge_words(root, manifest, words)
        else:
            manifest = _init_bundle(root, words)

        set_dir = root / "embeddings" / name
        set_dir.mkdir(parents=True, exist_ok=True)
        layer_count = len(layers)
        checksums = manifest["checksums"]
        stale = [rel for rel in checksums if rel.startswith(f"embeddings/{name}/")]
        for rel in stale:
            del checksums[rel]
        for k, layer in enumerate(layers, start=1):
            fname = _layer_filename(k, layer_count)
            np.ascontiguousarray(layer, dtype="<f4").tofile(set_dir / fname)
            checksums[f"embeddings/{name}/{fname}"] = _sha256(set_dir / fname)

        entries = [e for e in manifest["embedding_sets"] if e["name"] != name]
        entries.append({"name": name, "kind": kind, "layer_count": layer_count,
                        "dim": int(layers[0].shape[1])})
        manifest["embedding_sets"] = sorted(entries, key=lambda e: e["name"])
        if provenance_entry not in manifest["provenance"]:
            manifest["provenance"].append(provenance_entry)
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise ExtractorError(f"cannot write bundle at {root}: {exc}") from exc
    return root
