"""Per-layer dimensionality reduction and control embedding construction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PoolTooSmall, ShapeMismatch
from .types import EmbeddingSet, FoldAssignment


@dataclass
class PcaModel:
    """Mean-centered principal axes fit by SVD; no variance scaling.

    Sign convention: each component's largest-magnitude loading is positive,
    so fits are bit-reproducible across runs and platforms. When the data
    rank is below n_components the trailing components are zero rows and
    rank_deficient is set.
    """

    mean: np.ndarray
    components: np.ndarray  # [n_components, dim], orthonormal rows up to rank
    explained_variance: np.ndarray  # nonincreasing, >= 0
    rank: int
    rank_deficient: bool

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        return (np.asarray(matrix, dtype=np.float64) - self.mean) @ self.components.T


def pca_fit(matrix: np.ndarray, n_components: int) -> PcaModel:
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch("pca_fit expects a 2-D matrix")
    n, dim = x.shape
    if n <= n_components:
        raise ShapeMismatch(f"need more rows ({n}) than components ({n_components})")
    if not np.all(np.isfinite(x)):
        raise ShapeMismatch("pca_fit requires finite entries")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = s[0] * max(n, dim) * np.finfo(np.float64).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    k = min(n_components, vt.shape[0])
    components = np.zeros((n_components, dim))
    components[:k] = vt[:k]
    components[rank:] = 0.0
    variance = np.zeros(n_components)
    variance[: min(k, rank)] = (s[: min(k, rank)] ** 2) / (n - 1)
    # deterministic sign: largest-magnitude loading of each component positive
    for i in range(min(k, rank)):
        j = np.argmax(np.abs(components[i]))
        if components[i, j] < 0:
            components[i] = -components[i]
    return PcaModel(mean, components, variance, rank=min(rank, n_components),
                    rank_deficient=rank < n_components)


class ReducedEmbeddings:
    """Reduced per-layer features for the encoding grid.

    mode "full": one projection per layer fit on every word.
    mode "train_only": one projection per (layer, test fold) fit on the other
    folds only; matrices are materialized on demand to keep memory flat.
    """

    def __init__(self, source: EmbeddingSet, folds: FoldAssignment, mode: str,
                 n_components: int):
        if mode not in ("full", "train_only"):
            raise ShapeMismatch(f"unknown reduction mode {mode!r}")
        if folds.n_words != source.n_words:
            raise ShapeMismatch("fold assignment does not cover the embedding rows")
        self.mode = mode
        self.n_components = min(n_components, source.dim)
        self.folds = folds
        self._source = source
        self._full_models: list[PcaModel] | None = None
        self._fold_models: list[list[PcaModel]] | None = None
        if mode == "full":
            self._full_models = [
                pca_fit(layer, self.n_components) for layer in source.layers
            ]
        else:
            self._fold_models = []
            for layer in source.layers:
                per_fold = []
                for f in range(folds.folds):
                    train = layer[folds.fold_of_word != f]
                    per_fold.append(pca_fit(train, self.n_components))
                self._fold_models.append(per_fold)

    @property
    def layer_count(self) -> int:
        return self._source.layer_count

    @property
    def n_words(self) -> int:
        return self._source.n_words

    def matrix(self, layer: int, fold: int | None = None) -> np.ndarray:
        """[n_words x n_components] features for one layer.

        In train_only mode the fold argument selects which held-out fold's
        projection is applied (to all words, so the fold's training rows live
        in the same space as its test rows).
        """
        if self.mode == "full":
            return self._full_models[layer].transform(self._source.layers[layer])
        if fold is None:
            raise ShapeMismatch("train_only reductions require a fold index")
        model = self._fold_models[layer][fold]
        return model.transform(self._source.layers[layer])

    def to_embedding_set(self, name: str) -> EmbeddingSet:
        """Materialize full-mode reductions as a stored set."""
        if self.mode != "full":
            raise ShapeMismatch("only full-mode reductions materialize to one set")
        layers = [self.matrix(i).astype(np.float32) for i in range(self.layer_count)]
        return EmbeddingSet(name, "reduced", layers)


def reduce_layers(source: EmbeddingSet, folds: FoldAssignment, mode: str = "full",
                  n_components: int = 50) -> ReducedEmbeddings:
    """Per-layer PCA reduction; layers are never concatenated before fitting."""
    return ReducedEmbeddings(source, folds, mode, n_components)


def project_out_layer(source: EmbeddingSet, max_layer: int) -> tuple[EmbeddingSet, np.ndarray]:
    """Remove, word-wise, each embedding's projection onto one reference layer.

    max_layer is 0-based. For word w with unit reference direction u_w, every
    layer's row w becomes e - (e . u_w) u_w; the reference layer's own output
    is therefore all zeros. Words whose reference embedding has zero norm are
    left unchanged and flagged in the returned mask.
    """
    if not 0 <= max_layer < source.layer_count:
        raise ShapeMismatch(f"max_layer {max_layer} outside 0..{source.layer_count - 1}")
    ref = np.asarray(source.layers[max_layer], dtype=np.float64)
    norms = np.linalg.norm(ref, axis=1)
    zero_norm = norms == 0.0
    safe = np.where(zero_norm, 1.0, norms)
    unit = ref / safe[:, None]
    out_layers = []
    for k, layer in enumerate(source.layers):
        x = np.asarray(layer, dtype=np.float64)
        if k == max_layer:
            # the reference lies exactly along itself; skip the rounding residue
            resid = np.zeros_like(x)
        else:
            coef = np.einsum("wd,wd->w", x, unit)
            resid = x - coef[:, None] * unit
        resid[zero_norm] = x[zero_norm]
        out_layers.append(resid.astype(np.float32))
    name = f"{source.name}_minus_layer{max_layer + 1}"
    return EmbeddingSet(name, source.kind, out_layers), zero_norm


class PseudoLayerPool:
    """Lazy pool of convex mixes between two endpoint layers, ordered by alpha."""

    def __init__(self, first: np.ndarray, last: np.ndarray, grid_size: int = 1000):
        first = np.asarray(first, dtype=np.float64)
        last = np.asarray(last, dtype=np.float64)
        if first.shape != last.shape:
            raise ShapeMismatch(
                f"endpoint shapes differ: {first.shape} vs {last.shape}"
            )
        if grid_size < 1:
            raise PoolTooSmall("pool needs at least one interior point")
        self.first = first
        self.last = last
        # evenly spaced strictly inside (0, 1)
        self.alphas = np.arange(1, grid_size + 1) / (grid_size + 1)

    def __len__(self) -> int:
        return self.alphas.size

    def layer(self, i: int) -> np.ndarray:
        a = self.alphas[i]
        return (1.0 - a) * self.first + a * self.last


def interpolate_pseudo_layers(first: np.ndarray, last: np.ndarray,
                              grid_size: int = 1000) -> PseudoLayerPool:
    return PseudoLayerPool(first, last, grid_size)


def sample_pseudo_set(pool: PseudoLayerPool, k: int = 46,
                      rng: np.random.Generator | None = None,
                      name: str = "pseudo") -> tuple[EmbeddingSet, np.ndarray]:
    """Endpoints plus k interior mixes sampled without replacement, sorted.

    Returns the stacked set (k + 2 layers) and the sampled alphas including
    the 0/1 endpoints.
    """
    if k > len(pool):
        raise PoolTooSmall(f"pool holds {len(pool)} mixes, asked for {k}")
    rng = rng or np.random.default_rng()
    picks = np.sort(rng.choice(len(pool), size=k, replace=False))
    layers = [pool.first.astype(np.float32)]
    layers += [pool.layer(i).astype(np.float32) for i in picks]
    layers.append(pool.last.astype(np.float32))
    alphas = np.concatenate([[0.0], pool.alphas[picks], [1.0]])
    return EmbeddingSet(name, "pseudo", layers), alphas
