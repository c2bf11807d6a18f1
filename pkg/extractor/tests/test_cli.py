"""Command-line workflows end to end (small built-in model)."""

import json

from embex.cli import main


def write_transcript(tmp_path, words):
    lines = ["word\tonset\toffset"]
    for i, w in enumerate(words):
        onset = 0.5 + 0.4 * i
        lines.append(f"{w}\t{onset}\t{onset + 0.2}")
    p = tmp_path / "words.tsv"
    p.write_text("\n".join(lines) + "\n")
    return p


def write_table(tmp_path, lines):
    p = tmp_path / "vectors.txt"
    p.write_text("\n".join(lines) + "\n")
    return p


WORDS = "the quick brown fox jumps over a lazy dog tonight again".split()


def test_extract_creates_bundle(tmp_path, capsys):
    tsv = write_transcript(tmp_path, WORDS)
    out = tmp_path / "bundle"
    rc = main(["extract", "--transcript", str(tsv), "--model", "toy-3x24",
               "--out", str(out)])
    assert rc == 0
    assert "10 words x 3 layers (dim 24)" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["embedding_sets"][0]["name"] == "contextual"
    assert (out / "embeddings/contextual/layer_03.f32").stat().st_size == 10 * 24 * 4


def test_static_then_extract_share_one_bundle(tmp_path, capsys):
    tsv = write_transcript(tmp_path, WORDS)
    table = write_table(tmp_path, [f"{w} 0.5 1.5 -2.0" for w in WORDS if w != "fox"])
    out = tmp_path / "bundle"

    rc = main(["export-static", "--table", str(table), "--transcript", str(tsv),
               "--out", str(out)])
    assert rc == 0
    err = capsys.readouterr().err
    assert "1 word(s) missing from table" in err and "fox" in err

    rc = main(["extract", "--transcript", str(tsv), "--model", "toy-3x24",
               "--out", str(out)])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert [e["name"] for e in manifest["embedding_sets"]] == ["contextual", "static"]
    # the contextual pass back-fills word ranks
    assert not (out / "words.csv").read_text().splitlines()[1].endswith(",")


def test_failures_exit_nonzero(tmp_path, capsys):
    tsv = write_transcript(tmp_path, WORDS)
    rc = main(["extract", "--transcript", str(tmp_path / "missing.tsv"),
               "--model", "toy-3x24", "--out", str(tmp_path / "b")])
    assert rc == 1
    assert "embex: error:" in capsys.readouterr().err

    rc = main(["extract", "--transcript", str(tsv), "--model", "toy-0x0",
               "--out", str(tmp_path / "b")])
    assert rc == 1
    assert "toy-0x0" in capsys.readouterr().err
