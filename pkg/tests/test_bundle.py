"""Bundle directory format: round trips, validation, word classification."""

import json

import numpy as np
import pytest

from lagcoder import (ChecksumMismatch, DatasetBundle, ElectrodeMeta,
                      EmbeddingSet, MissingFile, MissingRank,
                      NonMonotonicOnsets, ShapeMismatch, SignalRecording,
                      WordEvent, add_embedding_set, classify_predictability,
                      load_bundle, write_bundle)


def make_bundle(n_electrodes=2, n_words=100, n_layers=48, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    n_samples = int(512 * (n_words * 0.3 + 4))
    rec = SignalRecording(rng.standard_normal((n_electrodes, n_samples)), 512.0)
    electrodes = [ElectrodeMeta(f"e{i:02d}", "mSTG", (float(i), 0.0, 0.0))
                  for i in range(n_electrodes)]
    words = [WordEvent(i, f"w{i}", 2.0 + 0.3 * i, top_rank=(i % 7) + 1)
             for i in range(n_words)]
    layers = [rng.standard_normal((n_words, dim)).astype(np.float32)
              for _ in range(n_layers)]
    sets = {"contextual": EmbeddingSet("contextual", "contextual", layers)}
    return DatasetBundle(rec, electrodes, words, sets,
                         provenance=("generator=test",))


def test_round_trip_preserves_everything(tmp_path):
    """Write then load returns identical payloads and metadata."""
    b = make_bundle()
    write_bundle(b, tmp_path / "b")
    loaded = load_bundle(tmp_path / "b")
    assert loaded.embedding_sets["contextual"].layer_count == 48
    np.testing.assert_array_equal(loaded.recording.samples.astype(np.float32),
                                  b.recording.samples.astype(np.float32))
    for a, c in zip(b.embedding_sets["contextual"].layers,
                    loaded.embedding_sets["contextual"].layers):
        np.testing.assert_array_equal(a, c)
    assert [w.text for w in loaded.words] == [w.text for w in b.words]
    assert [w.onset for w in loaded.words] == [w.onset for w in b.words]
    assert [e.id for e in loaded.electrodes] == [e.id for e in b.electrodes]
    assert "generator=test" in loaded.provenance


def test_round_trip_byte_identical(tmp_path):
    """Writing the same bundle twice produces byte-identical files."""
    b = make_bundle(n_layers=3, n_words=20)
    write_bundle(b, tmp_path / "x")
    write_bundle(b, tmp_path / "y")
    for rel in ("manifest.json", "signals.f32", "words.csv", "electrodes.csv",
                "embeddings/contextual/layer_01.f32"):
        assert (tmp_path / "x" / rel).read_bytes() == \
            (tmp_path / "y" / rel).read_bytes(), rel


def test_manifest_dim_mismatch_rejected(tmp_path):
    b = make_bundle(n_layers=2, n_words=10, dim=6)
    write_bundle(b, tmp_path / "b")
    m = json.loads((tmp_path / "b" / "manifest.json").read_text())
    m["embedding_sets"][0]["dim"] = 7
    (tmp_path / "b" / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(ShapeMismatch):
        load_bundle(tmp_path / "b")


def test_corrupted_payload_rejected(tmp_path):
    b = make_bundle(n_layers=2, n_words=10)
    write_bundle(b, tmp_path / "b")
    path = tmp_path / "b" / "signals.f32"
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumMismatch):
        load_bundle(tmp_path / "b")


def test_missing_payload_rejected(tmp_path):
    b = make_bundle(n_layers=2, n_words=10)
    write_bundle(b, tmp_path / "b")
    (tmp_path / "b" / "embeddings/contextual/layer_02.f32").unlink()
    with pytest.raises((MissingFile, ChecksumMismatch)):
        load_bundle(tmp_path / "b")


def test_non_monotonic_onsets_rejected():
    rec = SignalRecording(np.zeros((1, 5000)), 512.0)
    words = [WordEvent(0, "a", 1.0), WordEvent(1, "b", 0.9)]
    with pytest.raises(NonMonotonicOnsets):
        DatasetBundle(rec, [ElectrodeMeta("e0")], words, {})


def test_static_set_layer_count_one(tmp_path):
    b = make_bundle(n_layers=2, n_words=10, dim=4)
    rng = np.random.default_rng(1)
    b.embedding_sets["static"] = EmbeddingSet(
        "static", "static", [rng.standard_normal((10, 4)).astype(np.float32)])
    write_bundle(b, tmp_path / "b")
    m = json.loads((tmp_path / "b" / "manifest.json").read_text())
    entry = [s for s in m["embedding_sets"] if s["name"] == "static"][0]
    assert entry["layer_count"] == 1
    assert load_bundle(tmp_path / "b").embedding_sets["static"].layer_count == 1


def test_add_embedding_set_after_write(tmp_path):
    b = make_bundle(n_layers=2, n_words=10, dim=4)
    write_bundle(b, tmp_path / "b")
    extra = EmbeddingSet("reducedx", "reduced",
                         [np.ones((10, 3), dtype=np.float32)])
    add_embedding_set(tmp_path / "b", extra)
    loaded = load_bundle(tmp_path / "b")
    assert set(loaded.embedding_sets) == {"contextual", "reducedx"}
    np.testing.assert_array_equal(loaded.embedding_sets["reducedx"].layers[0],
                                  extra.layers[0])


def test_classify_predictability_rank_rules():
    words = [WordEvent(0, "a", 1.0, top_rank=1),
             WordEvent(1, "b", 2.0, top_rank=6),
             WordEvent(2, "c", 3.0, top_rank=3)]
    out = classify_predictability(words)
    assert out[0].predictability == "top1_predictable"
    assert out[1].predictability == "top5_unpredictable"
    assert out[2].predictability == "neither"


def test_classify_predictability_requires_rank():
    with pytest.raises(MissingRank):
        classify_predictability([WordEvent(0, "a", 1.0)])


def test_word_indices_for_conditions():
    b = make_bundle(n_layers=1, n_words=14)  # ranks cycle 1..7
    pred = b.word_indices_for("predictable")
    unpred = b.word_indices_for("unpredictable")
    assert all(b.words[i].top_rank == 1 for i in pred)
    assert all(b.words[i].top_rank > 5 for i in unpred)
    assert len(b.word_indices_for("all")) == 14
    assert set(pred) & set(unpred) == set()


def test_embedding_rows_must_match_words():
    rec = SignalRecording(np.zeros((1, 5000)), 512.0)
    words = [WordEvent(i, "w", 1.0 + i) for i in range(3)]
    es = EmbeddingSet("contextual", "contextual",
                      [np.zeros((4, 2), dtype=np.float32)])
    with pytest.raises(ShapeMismatch):
        DatasetBundle(rec, [ElectrodeMeta("e0")], words, {"contextual": es})


def test_layer_filenames_zero_padded(tmp_path):
    b = make_bundle(n_layers=12, n_words=5, dim=3)
    write_bundle(b, tmp_path / "b")
    names = sorted(p.name for p in
                   (tmp_path / "b" / "embeddings/contextual").iterdir())
    assert names[0] == "layer_01.f32"
    assert names[-1] == "layer_12.f32"
