"""Shared domain types.

These dataclasses are the contract between modules; loaded instances are
treated as immutable and are safe to share across parallel workers.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import NonFiniteValue, ShapeMismatch

ROIS = ("mSTG", "aSTG", "IFG", "TP", "other")

CONDITIONS = ("predictable", "unpredictable", "all")

EMBEDDING_KINDS = ("contextual", "static", "reduced", "pseudo")


@dataclass
class SignalRecording:
    """Multi-electrode signal block: samples[e, t] at a fixed rate from t0."""

    samples: np.ndarray  # [n_electrodes, n_samples]
    sample_rate: float
    t0: float = 0.0
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples))
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ShapeMismatch("samples must be a non-empty 2-D [electrodes x samples] array")
        if not self.sample_rate > 0:
            raise ShapeMismatch(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise NonFiniteValue("recording contains non-finite samples")

    @property
    def n_electrodes(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass
class ElectrodeMeta:
    id: str
    roi: str = "other"
    coords: Optional[tuple[float, float, float]] = None
    selected: bool = True

    def __post_init__(self):
        if self.roi not in ROIS:
            raise ShapeMismatch(f"unknown roi {self.roi!r}; expected one of {ROIS}")


@dataclass
class WordEvent:
    index: int
    text: str
    onset: float
    top_rank: Optional[int] = None
    predictability: Optional[str] = None  # set by classify_predictability


@dataclass
class EmbeddingSet:
    """Ordered per-layer [n_words x dim] matrices."""

    name: str
    kind: str
    layers: list[np.ndarray]

    def __post_init__(self):
        if self.kind not in EMBEDDING_KINDS:
            raise ShapeMismatch(f"unknown embedding kind {self.kind!r}")
        if not self.layers:
            raise ShapeMismatch(f"embedding set {self.name!r} has no layers")
        shape = self.layers[0].shape
        for k, layer in enumerate(self.layers):
            if layer.ndim != 2 or layer.shape != shape:
                raise ShapeMismatch(
                    f"set {self.name!r}: layer {k + 1} has shape {layer.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(layer)):
                raise NonFiniteValue(f"set {self.name!r}: layer {k + 1} contains non-finite values")

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    @property
    def n_words(self) -> int:
        return self.layers[0].shape[0]

    @property
    def dim(self) -> int:
        return self.layers[0].shape[1]


@dataclass
class EncodingMatrix:
    """Per-layer, per-lag cross-validated prediction correlations."""

    values: np.ndarray  # [n_layers, n_lags], NaN where undefined
    lags_ms: np.ndarray
    tag: str  # electrode id or roi name
    kind: str = "electrode"  # "electrode" | "roi"
    condition: str = "all"
    layer_indices: Optional[np.ndarray] = None  # 1-based
    contributing: Optional[np.ndarray] = None  # per-cell electrode count (roi averages)
    dropped_layers: tuple[int, ...] = ()  # 1-based layers removed by peak scaling
    scaled: bool = False  # peak-normalized rows; cells are ratios, not correlations

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.lags_ms = np.asarray(self.lags_ms, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != self.lags_ms.size:
            raise ShapeMismatch(
                f"values {self.values.shape} inconsistent with {self.lags_ms.size} lags"
            )
        finite = self.values[np.isfinite(self.values)]
        # a small positive peak can push scaled troughs well below -1
        if not self.scaled and finite.size and (
                finite.min() < -1.0 - 1e-9 or finite.max() > 1.0 + 1e-9):
            raise ShapeMismatch("correlations outside [-1, 1]")
        if self.condition not in CONDITIONS:
            raise ShapeMismatch(f"unknown condition {self.condition!r}")
        if self.layer_indices is None:
            self.layer_indices = np.arange(1, self.values.shape[0] + 1)
        else:
            self.layer_indices = np.asarray(self.layer_indices, dtype=np.int64)
            if self.layer_indices.size != self.values.shape[0]:
                raise ShapeMismatch("layer_indices length != number of rows")

    @property
    def n_layers(self) -> int:
        return self.values.shape[0]

    @property
    def n_lags(self) -> int:
        return self.values.shape[1]


@dataclass
class FoldAssignment:
    """fold_of_word[i] in [0, folds); fold sizes differ by at most one."""

    fold_of_word: np.ndarray
    folds: int

    def __post_init__(self):
        self.fold_of_word = np.asarray(self.fold_of_word, dtype=np.int64)
        if self.fold_of_word.ndim != 1:
            raise ShapeMismatch("fold_of_word must be 1-D")
        if self.folds < 2:
            raise ShapeMismatch("need at least 2 folds")
        present = np.unique(self.fold_of_word)
        if present.min() < 0 or present.max() >= self.folds:
            raise ShapeMismatch("fold ids out of range")
        sizes = np.bincount(self.fold_of_word, minlength=self.folds)
        if sizes.max() - sizes.min() > 1:
            raise ShapeMismatch("fold sizes differ by more than one")

    @property
    def n_words(self) -> int:
        return self.fold_of_word.size


def contiguous_folds(n_words: int, folds: int) -> FoldAssignment:
    """Contiguous blocks of words; limits temporal leakage between folds."""
    edges = np.linspace(0, n_words, folds + 1).astype(np.int64)
    fold_of_word = np.empty(n_words, dtype=np.int64)
    for f in range(folds):
        fold_of_word[edges[f]:edges[f + 1]] = f
    return FoldAssignment(fold_of_word, folds)


def random_folds(n_words: int, folds: int, rng: np.random.Generator) -> FoldAssignment:
    perm = rng.permutation(n_words)
    blocks = contiguous_folds(n_words, folds).fold_of_word
    fold_of_word = np.empty(n_words, dtype=np.int64)
    fold_of_word[perm] = blocks
    return FoldAssignment(fold_of_word, folds)


@dataclass
class Config:
    """Pipeline configuration; JSON-serializable, validated on construction."""

    lag_min_ms: float = -2000.0
    lag_max_ms: float = 2000.0
    lag_step_ms: float = 25.0
    window_ms: float = 200.0
    smooth_kernel_ms: float = 50.0
    pca_components: int = 50
    pca_mode: str = "full"  # "full" | "train_only"
    folds: int = 10
    fold_scheme: str = "contiguous"  # "contiguous" | "random"
    master_seed: int = 0
    n_perm_layers: int = 100_000
    n_perm_select: int = 5000
    n_boot: int = 10_000
    select_q_threshold: float = 0.01
    rois: tuple[str, ...] = ("mSTG", "aSTG", "IFG", "TP")
    threads: int = 1

    def __post_init__(self):
        span = self.lag_max_ms - self.lag_min_ms
        if span <= 0 or self.lag_step_ms <= 0:
            raise ShapeMismatch("lag grid must have positive span and step")
        steps = span / self.lag_step_ms
        if abs(steps - round(steps)) > 1e-9:
            raise ShapeMismatch("lag step must divide the lag range evenly")
        if self.window_ms <= 0:
            raise ShapeMismatch("window_ms must be positive")
        if self.folds < 2:
            raise ShapeMismatch("folds must be >= 2")
        if self.fold_scheme not in ("contiguous", "random"):
            raise ShapeMismatch(f"unknown fold scheme {self.fold_scheme!r}")
        if self.pca_mode not in ("full", "train_only"):
            raise ShapeMismatch(f"unknown pca mode {self.pca_mode!r}")

    def lag_grid_ms(self) -> np.ndarray:
        n = int(round((self.lag_max_ms - self.lag_min_ms) / self.lag_step_ms)) + 1
        return self.lag_min_ms + self.lag_step_ms * np.arange(n)

    def to_json(self) -> str:
        d = asdict(self)
        d["rois"] = list(self.rois)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Config":
        d = json.loads(text)
        if "rois" in d:
            d["rois"] = tuple(d["rois"])
        return cls(**d)


@dataclass
class PeakLagTable:
    """Per-layer lag of maximum encoding and that maximum's value."""

    layer_indices: np.ndarray  # 1-based
    peak_lag_ms: np.ndarray
    peak_r: np.ndarray
    tag: str = ""
    condition: str = "all"

    def __post_init__(self):
        self.layer_indices = np.asarray(self.layer_indices, dtype=np.int64)
        self.peak_lag_ms = np.asarray(self.peak_lag_ms, dtype=np.float64)
        self.peak_r = np.asarray(self.peak_r, dtype=np.float64)
        if not (self.layer_indices.size == self.peak_lag_ms.size == self.peak_r.size):
            raise ShapeMismatch("peak table columns must have equal length")

    def __len__(self) -> int:
        return self.layer_indices.size
