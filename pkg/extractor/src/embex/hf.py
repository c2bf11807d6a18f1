"""Adapter for Hugging Face causal language models.

Optional path: torch and transformers are imported lazily, so the rest of
the package works without them. Any model usable with
AutoModelForCausalLM that returns hidden states is supported; the stored
states are the per-block outputs (the embedding layer's output is not
counted as a layer).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ModelUnavailable, TokenizationMismatch


class HFAdapter:
    def __init__(self, model, tokenizer, model_id: str):
        self.model = model.eval()
        self.tokenizer = tokenizer
        self.model_id = model_id
        self.n_layers = int(model.config.num_hidden_layers)
        self.hidden_dim = int(model.config.hidden_size)
        self.vocab_size = int(model.config.vocab_size)

    def tokenize_word(self, word: str, first: bool = False) -> list[int]:
        # the leading space is the usual BPE word-boundary convention
        text = word if first else " " + word
        ids = self.tokenizer.encode(text, add_special_tokens=False)
        if not ids:
            raise TokenizationMismatch(f"word {word!r} tokenizes to nothing")
        return [int(i) for i in ids]

    def open_session(self) -> "HFSession":
        return HFSession(self)


class HFSession:
    """Incremental decode with a key/value cache; see model.Session."""

    def __init__(self, adapter: HFAdapter):
        self._adapter = adapter
        self._past = None
        self.n_tokens = 0

    def append(self, token_ids: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        import torch

        ids = list(token_ids)
        if not ids:
            raise ValueError("append needs at least one token")
        model = self._adapter.model
        with torch.no_grad():
            out = model(
                input_ids=torch.tensor([ids], dtype=torch.long),
                past_key_values=self._past,
                use_cache=True,
                output_hidden_states=True,
            )
        self._past = out.past_key_values
        self.n_tokens += len(ids)
        # hidden_states[0] is the embedding output; blocks follow
        hidden = np.stack([
            h[0].to(torch.float32).cpu().numpy() for h in out.hidden_states[1:]
        ])
        logits_last = out.logits[0, -1].to(torch.float32).cpu().numpy()
        return hidden, logits_last


def load_hf_adapter(model_id: str) -> HFAdapter:
    try:
        from transformers import AutoModelForCausalLM, AutoTokenizer
    except ImportError as exc:
        raise ModelUnavailable(
            f"model {model_id!r} needs torch and transformers installed"
        ) from exc
    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModelForCausalLM.from_pretrained(model_id)
    except Exception as exc:
        raise ModelUnavailable(f"cannot load model {model_id!r}: {exc}") from exc
    return HFAdapter(model, tokenizer, model_id)
