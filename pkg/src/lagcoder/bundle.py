"""Dataset bundle: on-disk directory format plus validated load/save.

Layout (all multi-byte values little-endian):
    manifest.json                      metadata + per-file sha256 checksums
    signals.f32                        row-major [n_electrodes x n_samples] float32
    electrodes.csv                     id,roi,x,y,z,selected
    words.csv                          index,text,onset_s,top_rank
    embeddings/<set>/layer_<k>.f32     row-major [n_words x dim] float32, k from 01

Payloads round-trip bit-exactly: arrays are stored and kept as float32.
Loads are read-only; a loaded bundle is immutable and shareable across
parallel tasks.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumMismatch,
    IoFailure,
    MissingFile,
    MissingRank,
    NonFiniteValue,
    NonMonotonicOnsets,
    ShapeMismatch,
)
from .types import ElectrodeMeta, EmbeddingSet, SignalRecording, WordEvent

MANIFEST_VERSION = 1

# predictability classes, derived from the rank of the true word in the
# model's next-word distribution
TOP1 = "top1_predictable"
TOP5_UNPRED = "top5_unpredictable"
NEITHER = "neither"


@dataclass
class DatasetBundle:
    recording: SignalRecording
    electrodes: list[ElectrodeMeta]
    words: list[WordEvent]
    embedding_sets: dict[str, EmbeddingSet] = field(default_factory=dict)
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.electrodes) != self.recording.n_electrodes:
            raise ShapeMismatch(
                f"{len(self.electrodes)} electrode rows for "
                f"{self.recording.n_electrodes} signal rows"
            )
        ids = [e.id for e in self.electrodes]
        if len(set(ids)) != len(ids):
            raise ShapeMismatch("electrode ids must be unique")
        onsets = np.array([w.onset for w in self.words], dtype=np.float64)
        if onsets.size and np.any(np.diff(onsets) <= 0):
            raise NonMonotonicOnsets("word onsets must be strictly increasing")
        for name, es in self.embedding_sets.items():
            if es.n_words != len(self.words):
                raise ShapeMismatch(
                    f"embedding set {name!r} has {es.n_words} rows for {len(self.words)} words"
                )

    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def electrode_ids(self) -> list[str]:
        return [e.id for e in self.electrodes]

    def roi_of(self) -> dict[str, str]:
        return {e.id: e.roi for e in self.electrodes}

    def onsets(self) -> np.ndarray:
        return np.array([w.onset for w in self.words], dtype=np.float64)

    def word_indices_for(self, condition: str) -> np.ndarray:
        """Indices (into words) of the requested predictability condition."""
        if condition == "all":
            return np.arange(len(self.words))
        words = self.words
        if any(w.predictability is None for w in words):
            words = classify_predictability(words)
        if condition == "predictable":
            keep = TOP1
        elif condition == "unpredictable":
            keep = TOP5_UNPRED
        else:
            raise ShapeMismatch(f"unknown condition {condition!r}")
        return np.array(
            [i for i, w in enumerate(words) if w.predictability == keep], dtype=np.int64
        )


def classify_predictability(words: list[WordEvent]) -> list[WordEvent]:
    """Set the predictability class from each word's top_rank.

    rank 1 -> top1_predictable, rank > 5 -> top5_unpredictable, else neither.
    """
    out = []
    for w in words:
        if w.top_rank is None:
            raise MissingRank(f"word {w.index} ({w.text!r}) has no top_rank")
        if w.top_rank == 1:
            cls = TOP1
        elif w.top_rank > 5:
            cls = TOP5_UNPRED
        else:
            cls = NEITHER
        out.append(WordEvent(w.index, w.text, w.onset, w.top_rank, cls))
    return out


def predictability_counts(words: list[WordEvent]) -> dict[str, int]:
    counts = {TOP1: 0, TOP5_UNPRED: 0, NEITHER: 0}
    for w in words:
        if w.predictability is not None:
            counts[w.predictability] += 1
    return counts


# ---------------------------------------------------------------------------
# serialization helpers


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_f32(path: Path, array: np.ndarray) -> None:
    np.ascontiguousarray(array, dtype="<f4").tofile(path)


def _read_f32(path: Path, shape: tuple[int, int], what: str) -> np.ndarray:
    expected = int(np.prod(shape)) * 4
    actual = path.stat().st_size
    if actual != expected:
        raise ShapeMismatch(
            f"{what}: manifest implies {expected} bytes, file {path.name} has {actual}"
        )
    data = np.fromfile(path, dtype="<f4").reshape(shape)
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue(f"{what}: non-finite values in {path.name}")
    return data


def _layer_filename(k: int, layer_count: int) -> str:
    width = max(2, len(str(layer_count)))
    return f"layer_{k:0{width}d}.f32"


def write_bundle(bundle: DatasetBundle, path: str | Path) -> None:
    """Write a bundle directory; load_bundle(write_bundle(b)) == b bit-exactly."""
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
        (root / "embeddings").mkdir(exist_ok=True)

        _write_f32(root / "signals.f32", bundle.recording.samples)

        with open(root / "electrodes.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "roi", "x", "y", "z", "selected"])
            for e in bundle.electrodes:
                coords = e.coords if e.coords is not None else ("", "", "")
                w.writerow([e.id, e.roi, *[repr(c) if c != "" else "" for c in coords],
                            int(e.selected)])

        with open(root / "words.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "text", "onset_s", "top_rank"])
            for word in bundle.words:
                rank = "" if word.top_rank is None else word.top_rank
                w.writerow([word.index, word.text, repr(word.onset), rank])

        set_entries = []
        for name in sorted(bundle.embedding_sets):
            es = bundle.embedding_sets[name]
            set_dir = root / "embeddings" / name
            set_dir.mkdir(parents=True, exist_ok=True)
            for k, layer in enumerate(es.layers, start=1):
                _write_f32(set_dir / _layer_filename(k, es.layer_count), layer)
            set_entries.append(
                {"name": name, "kind": es.kind, "layer_count": es.layer_count, "dim": es.dim}
            )

        checksums = {}
        for rel in _payload_files(root, set_entries):
            checksums[rel] = _sha256(root / rel)

        manifest = {
            "version": MANIFEST_VERSION,
            "n_electrodes": bundle.recording.n_electrodes,
            "n_samples": bundle.recording.n_samples,
            "sample_rate": bundle.recording.sample_rate,
            "t0": bundle.recording.t0,
            "n_words": len(bundle.words),
            "embedding_sets": set_entries,
            "provenance": list(bundle.provenance),
            "checksums": checksums,
        }
        with open(root / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write bundle at {root}: {exc}") from exc


def _payload_files(root: Path, set_entries: list[dict]) -> list[str]:
    rels = ["signals.f32", "electrodes.csv", "words.csv"]
    for entry in set_entries:
        for k in range(1, entry["layer_count"] + 1):
            rels.append(f"embeddings/{entry['name']}/{_layer_filename(k, entry['layer_count'])}")
    return rels


def load_bundle(path: str | Path, verify_checksums: bool = True) -> DatasetBundle:
    """Load and fully validate a bundle directory."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingFile(f"no manifest.json under {root}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)

    for rel in ["signals.f32", "electrodes.csv", "words.csv"]:
        if not (root / rel).is_file():
            raise MissingFile(f"bundle payload {rel} missing under {root}")

    if verify_checksums:
        for rel, expected in manifest.get("checksums", {}).items():
            target = root / rel
            if not target.is_file():
                raise MissingFile(f"bundle payload {rel} missing under {root}")
            actual = _sha256(target)
            if actual != expected:
                raise ChecksumMismatch(f"{rel}: sha256 {actual} != manifest {expected}")

    n_el = int(manifest["n_electrodes"])
    n_samples = int(manifest["n_samples"])
    samples = _read_f32(root / "signals.f32", (n_el, n_samples), "signals")
    recording = SignalRecording(
        samples,
        float(manifest["sample_rate"]),
        float(manifest.get("t0", 0.0)),
        provenance=tuple(manifest.get("provenance", [])),
    )

    electrodes = []
    with open(root / "electrodes.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            coords = None
            if row["x"] != "":
                coords = (float(row["x"]), float(row["y"]), float(row["z"]))
            electrodes.append(
                ElectrodeMeta(row["id"], row["roi"], coords, bool(int(row["selected"])))
            )

    words = []
    with open(root / "words.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            rank = None if row["top_rank"] == "" else int(row["top_rank"])
            words.append(WordEvent(int(row["index"]), row["text"], float(row["onset_s"]), rank))
    if len(words) != int(manifest["n_words"]):
        raise ShapeMismatch(
            f"words.csv has {len(words)} rows, manifest says {manifest['n_words']}"
        )

    embedding_sets = {}
    for entry in manifest.get("embedding_sets", []):
        name, kind = entry["name"], entry["kind"]
        layer_count, dim = int(entry["layer_count"]), int(entry["dim"])
        layers = []
        for k in range(1, layer_count + 1):
            layer_path = root / "embeddings" / name / _layer_filename(k, layer_count)
            if not layer_path.is_file():
                raise MissingFile(f"embedding layer file {layer_path} missing")
            layers.append(_read_f32(layer_path, (len(words), dim), f"embeddings/{name}"))
        embedding_sets[name] = EmbeddingSet(name, kind, layers)

    return DatasetBundle(recording, electrodes, words, embedding_sets,
                         provenance=tuple(manifest.get("provenance", [])))


def add_embedding_set(path: str | Path, es: EmbeddingSet) -> None:
    """Write one embedding set into an existing bundle and update its manifest."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingFile(f"no manifest.json under {root}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if es.n_words != int(manifest["n_words"]):
        raise ShapeMismatch(
            f"set {es.name!r} has {es.n_words} rows, bundle has {manifest['n_words']} words"
        )
    set_dir = root / "embeddings" / es.name
    try:
        set_dir.mkdir(parents=True, exist_ok=True)
        rels = []
        for k, layer in enumerate(es.layers, start=1):
            fname = _layer_filename(k, es.layer_count)
            _write_f32(set_dir / fname, layer)
            rels.append(f"embeddings/{es.name}/{fname}")
    except OSError as exc:
        raise IoFailure(f"cannot write embedding set under {set_dir}: {exc}") from exc

    entries = [e for e in manifest.get("embedding_sets", []) if e["name"] != es.name]
    entries.append({"name": es.name, "kind": es.kind, "layer_count": es.layer_count,
                    "dim": es.dim})
    manifest["embedding_sets"] = sorted(entries, key=lambda e: e["name"])
    checksums = manifest.setdefault("checksums", {})
    stale = [rel for rel in checksums if rel.startswith(f"embeddings/{es.name}/")]
    for rel in stale:
        del checksums[rel]
    for rel in rels:
        checksums[rel] = _sha256(root / rel)
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
