"""Model adapter protocol and model-id resolution.

An adapter wraps an autoregressive language model behind two operations:
per-word tokenization and an append-only session. A session consumes
tokens strictly left to right, so hidden states it has already returned
can never be affected by tokens appended later. Extraction relies on that
property for its causality guarantee.
"""

from __future__ import annotations

import re
from typing import Protocol, Sequence

import numpy as np

from .errors import ModelUnavailable


class Session(Protocol):
    """One left-to-right pass over a growing token sequence."""

    @property
    def n_tokens(self) -> int:
        """Number of tokens consumed so far."""
        ...

    def append(self, token_ids: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Feed tokens and return (hidden, logits_last).

        hidden has shape [n_layers, len(token_ids), hidden_dim]: the
        per-layer states of the newly appended positions. logits_last is
        the next-token logit vector [vocab_size] at the last appended
        position.
        """
        ...


class ModelAdapter(Protocol):
    model_id: str
    n_layers: int
    hidden_dim: int
    vocab_size: int

    def tokenize_word(self, word: str, first: bool = False) -> list[int]:
        """Token ids for one word, independent of any other word."""
        ...

    def open_session(self) -> Session:
        ...


_TOY_RE = re.compile(r"^toy(?:-(\d+)x(\d+))?$")


def resolve_model(model_id: str) -> ModelAdapter:
    """Map a model id to an adapter.

    `toy` is the built-in deterministic model (48 layers, dim 1600);
    `toy-<layers>x<dim>` selects a smaller variant. Any other id is
    treated as a Hugging Face causal-LM name and requires torch and
    transformers to be importable.
    """
    m = _TOY_RE.match(model_id)
    if m:
        from .toylm import ToyCausalLM

        if m.group(1) is None:
            return ToyCausalLM()
        n_layers, hidden_dim = int(m.group(1)), int(m.group(2))
        if n_layers < 1 or hidden_dim < 8:
            raise ModelUnavailable(f"bad toy model size in {model_id!r}")
        return ToyCausalLM(n_layers=n_layers, hidden_dim=hidden_dim)
    from .hf import load_hf_adapter

    return load_hf_adapter(model_id)
