"""Control analyses probing whether lag-layer structure is layer-specific.

Interpolation control: if peak-lag ordering were a trivial consequence of
layers blending two endpoints, pseudo-layers built as convex mixes of the
first and last layer would reproduce the observed lag-layer correlation.
The control re-runs the full reduce/encode/peak pipeline on sampled
pseudo-layer sets and reports where the observed correlation falls in that
null distribution.

Projection-out control: removes each word's projection onto its best
(maximum-peak) layer embedding and re-encodes; the max layer itself should
drop below a shuffled-words null ceiling while the remaining layers keep
their temporal ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import (interpolate_pseudo_layers, project_out_layer,
                         reduce_layers, sample_pseudo_set)
from .encoding import (EncodingMatrix, average_roi, encode_grid,
                       grid_to_matrices, peak_lags, window_responses)
from .errors import EmptyRoi, ShapeMismatch
from .seeds import (STREAM_LAYER_PERM, STREAM_NULL_CEILING, STREAM_PSEUDO,
                    rng_for)
from .stats import LagLayerResult, lag_layer_correlation, pearson
from .types import Config, EmbeddingSet, SignalRecording, contiguous_folds


@dataclass
class ControlReport:
    """Observed lag-layer r against a pseudo-layer null."""

    observed_r: float
    null_r: np.ndarray
    p_value: float
    n_iter: int
    roi: str
    condition: str


@dataclass
class ProjectionReport:
    """Encoding before/after removing the dominant layer's direction."""

    max_layer: int  # 1-based label of the projected-out layer
    max_layer_peak_before: float
    residual_peak_r: float  # NaN when the residual encoding is degenerate
    null_ceiling: float
    below_ceiling: bool
    remaining_lag_layer: LagLayerResult
    before: EncodingMatrix
    after: EncodingMatrix


def _roi_positions(bundle, roi: str, require_selected: bool = True) -> list[int]:
    pos = [i for i, el in enumerate(bundle.electrodes)
           if el.roi == roi and (el.selected or not require_selected)]
    if not pos:
        raise EmptyRoi(f"no {'selected ' if require_selected else ''}electrodes in {roi!r}")
    return pos


def _subset_rows(es: EmbeddingSet, rows: np.ndarray, name: str | None = None) -> EmbeddingSet:
    return EmbeddingSet(name or es.name, es.kind,
                        [layer[rows] for layer in es.layers])


def _roi_inputs(bundle, roi: str, condition: str, cfg: Config, set_name: str):
    """Shared staging: condition word subset, roi responses, folds, embeddings."""
    if set_name not in bundle.embedding_sets:
        raise ShapeMismatch(f"bundle has no embedding set {set_name!r}")
    word_rows = np.asarray(bundle.word_indices_for(condition), dtype=np.intp)
    if word_rows.size < cfg.folds + 2:
        raise ShapeMismatch(
            f"condition {condition!r} keeps only {word_rows.size} words")
    onsets = np.asarray(bundle.onsets())[word_rows]
    positions = _roi_positions(bundle, roi)
    rec = bundle.recording
    sub = SignalRecording(rec.samples[positions], rec.sample_rate, rec.t0,
                          rec.provenance)
    responses = window_responses(sub, onsets, cfg.lag_grid_ms(), cfg.window_ms)
    es = _subset_rows(bundle.embedding_sets[set_name], word_rows)
    folds = contiguous_folds(word_rows.size, cfg.folds)
    return es, responses, folds, positions


def _roi_matrix(es: EmbeddingSet, responses, folds, roi: str, condition: str,
                cfg: Config, dtype=np.float64,
                layer_indices=None) -> EncodingMatrix:
    reduced = reduce_layers(es, folds, cfg.pca_mode, cfg.pca_components)
    grid = encode_grid(reduced, responses, folds, threads=cfg.threads, dtype=dtype)
    ids = [f"m{i}" for i in range(responses.n_electrodes)]
    mats = grid_to_matrices(grid, responses.lags_ms, ids, condition, layer_indices)
    return average_roi(mats, roi, {i: roi for i in ids}, condition)


def _lag_layer_r(matrix: EncodingMatrix) -> float:
    peaks = peak_lags(matrix)
    return pearson(np.asarray(peaks.layer_indices, dtype=np.float64),
                   peaks.peak_lag_ms)


def run_interpolation_control(bundle, roi: str, cfg: Config | None = None,
                              condition: str = "all", n_iter: int = 200,
                              k: int | None = None, pool_size: int = 1000,
                              set_name: str = "contextual",
                              master_seed: int | None = None,
                              dtype=np.float32) -> ControlReport:
    """p-value for the observed lag-layer r against pseudo-layer mixes.

    Each iteration samples k interior mixes of the first and last layer
    (plus the endpoints), refits the per-layer reduction on the pseudo set,
    re-encodes, and records the pseudo lag-layer correlation. One-sided
    add-one p; iterations use counter-derived seeds so any subset of
    iterations is reproducible.
    """
    cfg = cfg or Config()
    seed = cfg.master_seed if master_seed is None else master_seed
    es, responses, folds, _ = _roi_inputs(bundle, roi, condition, cfg, set_name)
    if k is None:
        k = max(1, es.layer_count - 2)
    observed = _lag_layer_r(_roi_matrix(es, responses, folds, roi, condition,
                                        cfg, dtype=np.float64))
    pool = interpolate_pseudo_layers(
        np.asarray(es.layers[0], dtype=np.float64),
        np.asarray(es.layers[-1], dtype=np.float64), pool_size)
    null = np.empty(n_iter)
    for i in range(n_iter):
        rng = rng_for(seed, STREAM_PSEUDO, i)
        pseudo, _ = sample_pseudo_set(pool, k, rng)
        null[i] = _lag_layer_r(_roi_matrix(pseudo, responses, folds, roi,
                                           condition, cfg, dtype=dtype))
    p = float((1 + np.sum(null >= observed)) / (1 + n_iter))
    return ControlReport(observed_r=float(observed), null_r=null, p_value=p,
                         n_iter=n_iter, roi=roi, condition=condition)


def run_projection_control(bundle, roi: str, cfg: Config | None = None,
                           condition: str = "all",
                           set_name: str = "contextual",
                           master_seed: int | None = None,
                           n_null_shuffles: int = 5,
                           null_quantile: float = 0.95,
                           n_perm: int = 10000) -> ProjectionReport:
    """Remove the max layer's direction per word and re-encode.

    The null ceiling is the null_quantile of |r| over single-layer encoding
    grids whose embedding rows were shuffled across words (seeded); a
    residual max-layer encoding with no finite cells counts as below the
    ceiling by definition.
    """
    cfg = cfg or Config()
    seed = cfg.master_seed if master_seed is None else master_seed
    es, responses, folds, _ = _roi_inputs(bundle, roi, condition, cfg, set_name)
    before = _roi_matrix(es, responses, folds, roi, condition, cfg)
    row_peak = np.nanmax(np.where(np.isnan(before.values), -np.inf, before.values),
                         axis=1)
    max_pos = int(np.argmax(row_peak))
    max_label = before.layer_indices[max_pos]

    projected, _ = project_out_layer(es, max_pos)
    after = _roi_matrix(projected, responses, folds, roi, condition, cfg,
                        layer_indices=before.layer_indices)

    max_layer_matrix = EmbeddingSet("max_layer", "contextual",
                                    [es.layers[max_pos]])
    null_values = []
    for i in range(n_null_shuffles):
        rng = rng_for(seed, STREAM_NULL_CEILING, i)
        shuffled = EmbeddingSet(
            "shuffled", "contextual",
            [es.layers[max_pos][rng.permutation(es.n_words)]])
        reduced = reduce_layers(shuffled, folds, cfg.pca_mode, cfg.pca_components)
        grid = encode_grid(reduced, responses, folds, threads=cfg.threads,
                           dtype=np.float32)
        null_values.append(np.abs(grid[np.isfinite(grid)]))
    pooled = np.concatenate(null_values) if null_values else np.array([0.0])
    ceiling = float(np.quantile(pooled, null_quantile))

    residual_row = after.values[max_pos]
    residual_peak = (float(np.nanmax(residual_row))
                     if np.any(np.isfinite(residual_row)) else float("nan"))
    below = bool(np.isnan(residual_peak) or residual_peak < ceiling)

    keep = [i for i in range(after.values.shape[0]) if i != max_pos]
    remaining = EncodingMatrix(
        values=after.values[keep], lags_ms=after.lags_ms.copy(), tag=after.tag,
        kind=after.kind, condition=after.condition,
        layer_indices=tuple(after.layer_indices[i] for i in keep),
        contributing=None if after.contributing is None else after.contributing[keep])
    remaining_result = lag_layer_correlation(
        peak_lags(remaining), n_perm=n_perm,
        rng=rng_for(seed, STREAM_LAYER_PERM, 1))
    return ProjectionReport(
        max_layer=int(max_label),
        max_layer_peak_before=float(row_peak[max_pos]),
        residual_peak_r=residual_peak,
        null_ceiling=ceiling,
        below_ceiling=below,
        remaining_lag_layer=remaining_result,
        before=before,
        after=after,
    )
