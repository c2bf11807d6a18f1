"""Transcript ingestion: tab-separated word timing files.

The expected input is a `words.tsv` with a header row naming at least the
columns `word`, `onset`, `offset` (extra columns are ignored). Onsets and
offsets are in seconds; onsets must be strictly increasing so that the
written bundle validates downstream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import TranscriptError


@dataclass(frozen=True)
class TranscriptRow:
    word: str
    onset: float
    offset: float


REQUIRED_COLUMNS = ("word", "onset", "offset")


def read_transcript(path: str | Path) -> list[TranscriptRow]:
    """Parse a words.tsv file into validated transcript rows."""
    path = Path(path)
    if not path.is_file():
        raise TranscriptError(f"transcript file {path} does not exist")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise TranscriptError(
                f"{path.name}: missing column(s) {', '.join(missing)}; got header {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            word = (row["word"] or "").strip()
            if not word:
                raise TranscriptError(f"{path.name}:{lineno}: empty word")
            try:
                onset = float(row["onset"])
                offset = float(row["offset"])
            except (TypeError, ValueError) as exc:
                raise TranscriptError(f"{path.name}:{lineno}: bad timing value: {exc}") from exc
            if not (math.isfinite(onset) and math.isfinite(offset)):
                raise TranscriptError(f"{path.name}:{lineno}: non-finite timing value")
            rows.append(TranscriptRow(word, onset, offset))
    if not rows:
        raise TranscriptError(f"{path.name}: no transcript rows")
    for prev, cur in zip(rows, rows[1:]):
        if cur.onset <= prev.onset:
            raise TranscriptError(
                f"onsets must be strictly increasing: {prev.onset} -> {cur.onset} "
                f"at word {cur.word!r}"
            )
    return rows
