"""Acceptance suite: full-size extraction checked against the analysis loader.

These tests use the built-in model at its default size (48 layers, hidden
dim 1600), so they are slower than the unit tests but still run in well
under a minute.
"""

import numpy as np
import pytest

import lagcoder
from embex import extract_embeddings, write_embedding_set
from embex.cli import main
from embex.model import resolve_model
from embex.transcript import TranscriptRow


@pytest.fixture(scope="module")
def toy():
    lm = resolve_model("toy")
    assert (lm.n_layers, lm.hidden_dim) == (48, 1600)
    return lm


def transcript_of(n):
    return [TranscriptRow(f"word{i:03d}", 0.5 + 0.3 * i, 0.7 + 0.3 * i)
            for i in range(1, n + 1)]


def test_101_words_yield_100_rows_across_48_layers(toy, tmp_path):
    res = extract_embeddings(transcript_of(101), toy)
    assert res.n_words == 100
    assert len(res.layers) == 48
    for layer in res.layers:
        assert layer.shape == (100, 1600)
        assert layer.dtype == np.float32

    out = tmp_path / "bundle"
    write_embedding_set(out, res.words, "contextual", "contextual", res.layers,
                        "extract: acceptance")
    bundle = lagcoder.load_bundle(out)
    es = bundle.embedding_sets["contextual"]
    assert es.layer_count == 48 and es.dim == 1600 and es.n_words == 100
    assert [w.top_rank for w in bundle.words] == [w.top_rank for w in res.words]
    assert np.array_equal(es.layers[0], res.layers[0])
    assert np.array_equal(es.layers[47], res.layers[47])


def test_perturbing_a_word_leaves_prior_words_bit_identical(toy):
    base = transcript_of(101)
    perturbed = list(base)
    # transcript position 50 is embedded row 49; rows 0..49 cover words
    # that precede or coincide with the edit
    perturbed[50] = TranscriptRow("zzqqxv", base[50].onset, base[50].offset)

    a = extract_embeddings(base, toy)
    b = extract_embeddings(perturbed, toy)
    for k in (0, 23, 47):
        assert a.layers[k][:50].tobytes() == b.layers[k][:50].tobytes()
        assert not np.array_equal(a.layers[k][50:], b.layers[k][50:])
    ranks_a = [w.top_rank for w in a.words]
    ranks_b = [w.top_rank for w in b.words]
    assert ranks_a[:49] == ranks_b[:49]


def test_cli_extract_full_size_passes_loader(tmp_path):
    lines = ["word\tonset\toffset"]
    for row in transcript_of(21):
        lines.append(f"{row.word}\t{row.onset}\t{row.offset}")
    tsv = tmp_path / "words.tsv"
    tsv.write_text("\n".join(lines) + "\n")
    out = tmp_path / "bundle"

    assert main(["extract", "--transcript", str(tsv), "--model", "toy",
                 "--out", str(out)]) == 0
    bundle = lagcoder.load_bundle(out)
    es = bundle.embedding_sets["contextual"]
    assert es.layer_count == 48 and es.dim == 1600 and es.n_words == 20
    assert all(w.top_rank is not None for w in bundle.words)
