"""Contextual embedding extraction over a transcript.

For each word after the first, the stored vector is the model's per-layer
hidden state at the last token of the preceding word, i.e. the state from
which the model predicts the word. The rank of the word's first token in
the next-token distribution at that position is recorded alongside. The
first word is skipped because it has no context, so a transcript of n
words yields n - 1 embedding rows per layer.

Causality is structural: word i's vector is computed from a session that
has only ever seen tokens of words before i, so edits to later words
cannot change it, bit for bit. When a word's full history exceeds
context_limit tokens, that word is embedded from a fresh session over the
most recent context_limit tokens instead; the choice between the two
paths depends only on preceding words. Those windowed forwards are
mutually independent and could run in parallel; this implementation runs
them sequentially and writes output from a single thread.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ExtractorError, TranscriptError
from .model import ModelAdapter
from .transcript import TranscriptRow


@dataclass(frozen=True)
class EmbeddedWord:
    index: int  # position in the embedded word list, from 0
    text: str
    onset: float
    top_rank: Optional[int]  # None when the producer has no distribution


@dataclass
class ExtractionResult:
    words: list[EmbeddedWord]
    layers: list[np.ndarray]  # per layer, [n_embedded x hidden_dim] float32
    model_id: str
    context_limit: int

    @property
    def n_words(self) -> int:
        return len(self.words)


def _rank_of(logits: np.ndarray, true_id: int) -> int:
    # ties share the best rank; deterministic and model-size independent
    return int(1 + np.sum(logits > logits[true_id]))


def extract_embeddings(transcript: list[TranscriptRow], adapter: ModelAdapter,
                       context_limit: int = 1023) -> ExtractionResult:
    """Embed every word after the first; see the module doc for semantics."""
    if context_limit < 1:
        raise ValueError(f"context_limit must be >= 1, got {context_limit}")
    if len(transcript) < 2:
        raise TranscriptError("need at least 2 transcript words; the first is context only")

    tokens = [
        adapter.tokenize_word(row.word, first=(i == 0))
        for i, row in enumerate(transcript)
    ]
    flat = list(itertools.chain.from_iterable(tokens))
    starts = list(itertools.accumulate((len(t) for t in tokens), initial=0))

    session = adapter.open_session()
    stash: Optional[tuple[np.ndarray, np.ndarray]] = None
    words: list[EmbeddedWord] = []
    states: list[np.ndarray] = []

    for i, row in enumerate(transcript):
        if i > 0:
            if starts[i] <= context_limit:
                # full history fits: read the shared session's last state
                hid, logits = stash
            else:
                # truncate to the most recent tokens and run them fresh
                window = flat[starts[i] - context_limit:starts[i]]
                fresh = adapter.open_session()
                chunk, logits = fresh.append(window)
                hid = chunk[:, -1, :]
            words.append(EmbeddedWord(i - 1, row.word, row.onset,
                                      _rank_of(logits, tokens[i][0])))
            states.append(np.ascontiguousarray(hid))
        # grow the shared session while the next word's history still fits
        if i + 1 < len(transcript) and starts[i + 1] <= context_limit:
            chunk, logits = session.append(tokens[i])
            stash = (chunk[:, -1, :], logits)

    stacked = np.stack(states)  # [n_embedded, n_layers, dim]
    if not np.all(np.isfinite(stacked)):
        raise ExtractorError(f"model {adapter.model_id!r} produced non-finite states")
    layers = [np.ascontiguousarray(stacked[:, k, :]) for k in range(adapter.n_layers)]
    return ExtractionResult(words, layers, adapter.model_id, context_limit)
