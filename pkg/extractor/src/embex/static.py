"""Static (single-layer) embedding export from a vector table.

The table is the usual text format: one row per word, the word followed
by its vector components, whitespace separated. Lookups are done on the
lowercased word since such tables are conventionally lowercase. Words
missing from the table receive the zero vector and are reported, not
silently dropped.

The exported rows cover transcript words after the first, matching the
contextual extractor's word list so both sets can live in one bundle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyVocabulary, TranscriptError, VectorTableError
from .extract import EmbeddedWord
from .transcript import TranscriptRow


def read_vector_table(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a word-vector text file; first occurrence of a word wins."""
    path = Path(path)
    if not path.is_file():
        raise VectorTableError(f"vector table {path} does not exist")
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word, raw = parts[0].lower(), parts[1:]
            if dim is None:
                dim = len(raw)
                if dim == 0:
                    raise VectorTableError(f"{path.name}:{lineno}: row has no vector components")
            elif len(raw) != dim:
                raise VectorTableError(
                    f"{path.name}:{lineno}: {len(raw)} components, expected {dim}"
                )
            try:
                values = [float(v) for v in raw]
            except ValueError as exc:
                raise VectorTableError(f"{path.name}:{lineno}: bad component: {exc}") from exc
            if not all(math.isfinite(v) for v in values):
                raise VectorTableError(f"{path.name}:{lineno}: non-finite component")
            if word not in vectors:
                vectors[word] = np.asarray(values, dtype=np.float32)
    if not vectors:
        raise EmptyVocabulary(f"{path.name}: no vector rows")
    return vectors


@dataclass
class StaticResult:
    words: list[EmbeddedWord]
    matrix: np.ndarray  # [n_embedded x dim] float32
    oov_words: list[str]  # transcript words absent from the table, in order

    @property
    def n_words(self) -> int:
        return len(self.words)


def export_static(vectors: dict[str, np.ndarray],
                  transcript: list[TranscriptRow]) -> StaticResult:
    """Map transcript words (after the first) onto table rows."""
    if not vectors:
        raise EmptyVocabulary("empty vector table")
    if len(transcript) < 2:
        raise TranscriptError("need at least 2 transcript words; the first is context only")
    dim = next(iter(vectors.values())).shape[0]
    rows = np.zeros((len(transcript) - 1, dim), dtype=np.float32)
    words: list[EmbeddedWord] = []
    oov: list[str] = []
    for j, row in enumerate(transcript[1:]):
        vec = vectors.get(row.word.strip().lower())
        if vec is None:
            oov.append(row.word)  # row j stays the zero vector
        else:
            rows[j] = vec
        words.append(EmbeddedWord(j, row.word, row.onset, None))
    return StaticResult(words, rows, oov)
