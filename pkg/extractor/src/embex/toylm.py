"""Built-in deterministic causal language model in plain numpy.

A self-contained stand-in for a pretrained autoregressive transformer:
sub-word tokenization, causal self-attention with per-layer hidden
states, and a next-token distribution. Weights are drawn once from a
fixed seed instead of being trained, so a given model size always
denotes the same model and extraction is reproducible bit for bit.
Attention and MLP projections are low-rank, which keeps the full-size
variant (48 layers, hidden dim 1600) fast on a single core.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np

from .errors import TokenizationMismatch

# fixed so that a given (layers, dim, vocab) triple is always the same model
_WEIGHT_SEED = 771204

_CHUNK_CHARS = 4  # characters per sub-word token
_ATTN_DIM = 64
_MLP_DIM = 64
_LN_EPS = 1e-5


def _hash_token(chunk: str, vocab_size: int) -> int:
    digest = hashlib.blake2b(chunk.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % vocab_size


def _layernorm(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + np.float32(_LN_EPS))


def _sinusoid_positions(start: int, count: int, dim: int) -> np.ndarray:
    """Absolute sinusoidal position encodings for positions start..start+count-1."""
    pos = np.arange(start, start + count, dtype=np.float32)[:, None]
    half = dim // 2
    freqs = np.exp(np.arange(half, dtype=np.float32) * np.float32(-np.log(10000.0) / half))
    angles = pos * freqs[None, :]
    out = np.empty((count, dim), dtype=np.float32)
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


class ToyCausalLM:
    """Deterministic causal transformer exposing the model adapter protocol."""

    def __init__(self, n_layers: int = 48, hidden_dim: int = 1600,
                 vocab_size: int = 4096):
        if hidden_dim % 2 or hidden_dim < 8:
            raise ValueError(f"hidden_dim must be even and >= 8, got {hidden_dim}")
        if n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {n_layers}")
        if (n_layers, hidden_dim) == (48, 1600):
            self.model_id = "toy"
        else:
            self.model_id = f"toy-{n_layers}x{hidden_dim}"
        self.n_layers = n_layers
        self.hidden_dim = hidden_dim
        self.vocab_size = vocab_size

        rng = np.random.default_rng(
            np.random.SeedSequence([_WEIGHT_SEED, n_layers, hidden_dim, vocab_size])
        )
        d, a, h = hidden_dim, _ATTN_DIM, _MLP_DIM
        in_scale = np.float32(1.0 / np.sqrt(d))
        # residual contributions are damped so the stream stays well scaled
        # across deep stacks
        out_scale = np.float32(0.5 / np.sqrt(a))
        self.embed = rng.standard_normal((vocab_size, d), dtype=np.float32)
        self.blocks = []
        for _ in range(n_layers):
            self.blocks.append({
                "wq": rng.standard_normal((d, a), dtype=np.float32) * in_scale,
                "wk": rng.standard_normal((d, a), dtype=np.float32) * in_scale,
                "wv": rng.standard_normal((d, a), dtype=np.float32) * in_scale,
                "wo": rng.standard_normal((a, d), dtype=np.float32) * out_scale,
                "w1": rng.standard_normal((d, h), dtype=np.float32) * in_scale,
                "w2": rng.standard_normal((h, d), dtype=np.float32) * out_scale,
            })
        # contiguous transpose makes the per-position logit projection cheap
        self._embed_t = np.ascontiguousarray(self.embed.T)

    def tokenize_word(self, word: str, first: bool = False) -> list[int]:
        """Fixed-width character chunks of the lowercased word, hashed to ids."""
        text = word.strip().lower()
        if not text:
            raise TokenizationMismatch(f"word {word!r} has no tokenizable characters")
        return [
            _hash_token(text[i:i + _CHUNK_CHARS], self.vocab_size)
            for i in range(0, len(text), _CHUNK_CHARS)
        ]

    def open_session(self) -> "ToySession":
        return ToySession(self)


class ToySession:
    """Append-only forward pass with per-layer key/value caches.

    Tokens are consumed strictly left to right; positions already
    processed are never recomputed, so previously returned hidden states
    cannot depend on anything appended afterwards.
    """

    def __init__(self, lm: ToyCausalLM):
        self._lm = lm
        self._keys = [np.zeros((0, _ATTN_DIM), dtype=np.float32) for _ in range(lm.n_layers)]
        self._vals = [np.zeros((0, _ATTN_DIM), dtype=np.float32) for _ in range(lm.n_layers)]
        self.n_tokens = 0

    def append(self, token_ids: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        lm = self._lm
        ids = np.asarray(list(token_ids), dtype=np.int64)
        if ids.size == 0:
            raise ValueError("append needs at least one token")
        if ids.min() < 0 or ids.max() >= lm.vocab_size:
            raise ValueError("token id out of range")

        start, t = self.n_tokens, int(ids.size)
        x = lm.embed[ids] + _sinusoid_positions(start, t, lm.hidden_dim)
        hidden = np.empty((lm.n_layers, t, lm.hidden_dim), dtype=np.float32)
        # new position start+i may attend cached and new positions <= start+i
        cols = np.arange(start + t)[None, :]
        rows = (start + np.arange(t))[:, None]
        visible = cols <= rows
        inv_sqrt_a = np.float32(1.0 / np.sqrt(_ATTN_DIM))

        for layer, w in enumerate(lm.blocks):
            xn = _layernorm(x)
            keys = np.concatenate([self._keys[layer], xn @ w["wk"]])
            vals = np.concatenate([self._vals[layer], xn @ w["wv"]])
            scores = ((xn @ w["wq"]) @ keys.T) * inv_sqrt_a
            scores = np.where(visible, scores, np.float32(-np.inf))
            scores -= scores.max(axis=1, keepdims=True)
            attn = np.exp(scores)
            attn /= attn.sum(axis=1, keepdims=True)
            x = x + (attn @ vals) @ w["wo"]
            x = x + np.tanh(_layernorm(x) @ w["w1"]) @ w["w2"]
            hidden[layer] = x
            self._keys[layer] = keys
            self._vals[layer] = vals

        self.n_tokens = start + t
        logits_last = (_layernorm(x[-1:]) @ lm._embed_t)[0]
        return hidden, logits_last
