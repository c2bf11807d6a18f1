"""Transcript parsing and validation."""

import pytest

from embex import TranscriptError, read_transcript


def write_tsv(path, rows, header="word\tonset\toffset"):
    lines = [header] + rows
    path.write_text("\n".join(lines) + "\n")
    return path


def test_reads_rows_in_order(tmp_path):
    p = write_tsv(tmp_path / "words.tsv", [
        "Hello\t0.5\t0.8",
        "world\t1.25\t1.6",
        "again\t2.0\t2.3",
    ])
    rows = read_transcript(p)
    assert [r.word for r in rows] == ["Hello", "world", "again"]
    assert [r.onset for r in rows] == [0.5, 1.25, 2.0]
    assert rows[1].offset == 1.6


def test_extra_columns_ignored(tmp_path):
    p = write_tsv(tmp_path / "words.tsv",
                  ["the\t0.1\t0.2\tNOUN", "cat\t0.4\t0.5\tNOUN"],
                  header="word\tonset\toffset\tpos")
    rows = read_transcript(p)
    assert len(rows) == 2


def test_missing_column_rejected(tmp_path):
    p = write_tsv(tmp_path / "words.tsv", ["the\t0.1"], header="word\tonset")
    with pytest.raises(TranscriptError, match="offset"):
        read_transcript(p)


def test_onsets_must_strictly_increase(tmp_path):
    p = write_tsv(tmp_path / "words.tsv", ["a\t1.0\t1.1", "b\t1.0\t1.2"])
    with pytest.raises(TranscriptError, match="strictly increasing"):
        read_transcript(p)


def test_bad_rows_rejected(tmp_path):
    for bad in ["\t0.1\t0.2", "word\tx\t0.2", "word\tnan\t0.2"]:
        p = write_tsv(tmp_path / "words.tsv", [bad])
        with pytest.raises(TranscriptError):
            read_transcript(p)


def test_empty_and_missing_files(tmp_path):
    p = write_tsv(tmp_path / "words.tsv", [])
    with pytest.raises(TranscriptError, match="no transcript rows"):
        read_transcript(p)
    with pytest.raises(TranscriptError, match="does not exist"):
        read_transcript(tmp_path / "nope.tsv")
