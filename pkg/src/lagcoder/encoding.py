"""Cross-validated linear encoding over the lag grid.

The response for word w at lag l is the mean band power in a fixed-width
window centered on onset_w + l. For each embedding layer a 10-fold
cross-validated least-squares model predicts that response; performance is
the Pearson correlation between concatenated held-out predictions and the
true responses, giving an [n_layers x n_lags] matrix per electrode.

Hot path: within one (layer, fold) the design matrix is shared by every
(electrode, lag) cell, so held-out predictions for the whole block reduce
to one matrix product with a precomputed hat matrix.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (AllNaNRow, EmptyRoi, IoFailure, MissingFile,
                     NoPositivePeak, ShapeMismatch)
from .types import (EncodingMatrix, FoldAssignment, PeakLagTable,
                    SignalRecording)


@dataclass
class ResponseTensor:
    """Window-averaged power per (electrode, word, lag) with validity mask.

    valid is False wherever a word's window at that lag falls outside the
    recording; values are NaN there.
    """

    values: np.ndarray  # [n_electrodes x n_words x n_lags] float64
    valid: np.ndarray   # same shape, bool
    lags_ms: np.ndarray
    window_ms: float

    def __post_init__(self):
        if self.values.shape != self.valid.shape:
            raise ShapeMismatch("values and valid mask shapes differ")
        if self.values.shape[2] != self.lags_ms.size:
            raise ShapeMismatch("lag axis does not match lag grid")
        masked = self.values[self.valid]
        if masked.size and not np.all(np.isfinite(masked)):
            raise ShapeMismatch("non-finite response inside the valid mask")

    @property
    def n_electrodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_words(self) -> int:
        return self.values.shape[1]

    @property
    def n_lags(self) -> int:
        return self.values.shape[2]

    @property
    def word_lag_valid(self) -> np.ndarray:
        """[n_words x n_lags] mask; a pair is valid for all electrodes or none."""
        return self.valid[0] if self.n_electrodes else self.valid.any(axis=0)

    def by_word(self) -> np.ndarray:
        """Values reordered to [n_words x n_lags x n_electrodes]."""
        return np.ascontiguousarray(np.moveaxis(self.values, 0, -1))


def _window_starts(onsets: np.ndarray, lags_ms: np.ndarray, sample_rate: float,
                   t0: float, n_win: int) -> np.ndarray:
    centers = (onsets[:, None] + lags_ms[None, :] / 1000.0 - t0) * sample_rate
    return np.round(centers - n_win / 2.0).astype(np.int64)


def window_responses(rec: SignalRecording, onsets: Sequence[float],
                     lags_ms: np.ndarray, window_ms: float = 200.0) -> ResponseTensor:
    """Mean signal in a window_ms window centered at onset + lag, per cell."""
    onsets = np.asarray(onsets, dtype=np.float64)
    lags_ms = np.asarray(lags_ms, dtype=np.float64)
    n_win = max(1, int(round(window_ms / 1000.0 * rec.sample_rate)))
    starts = _window_starts(onsets, lags_ms, rec.sample_rate, rec.t0, n_win)
    valid2d = (starts >= 0) & (starts + n_win <= rec.n_samples)
    safe = np.clip(starts, 0, max(0, rec.n_samples - n_win))
    cums = np.zeros((rec.n_electrodes, rec.n_samples + 1))
    np.cumsum(rec.samples, axis=1, dtype=np.float64, out=cums[:, 1:])
    values = (cums[:, safe + n_win] - cums[:, safe]) / n_win
    values[:, ~valid2d] = np.nan
    valid = np.broadcast_to(valid2d, values.shape).copy()
    return ResponseTensor(values, valid, lags_ms, window_ms)


def window_signal(rec: SignalRecording, onsets: Sequence[float], lag_ms: float,
                  window_ms: float = 200.0) -> tuple[np.ndarray, np.ndarray]:
    """Single-lag view: [n_electrodes x n_words] means plus validity mask."""
    tensor = window_responses(rec, onsets, np.array([lag_ms]), window_ms)
    return tensor.values[:, :, 0], tensor.valid[:, :, 0]


@dataclass
class OlsFit:
    weights: np.ndarray
    intercept: float
    degenerate: bool = False  # all-zero design, intercept-only model

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights + self.intercept


def ols_fit(x: np.ndarray, y: np.ndarray) -> OlsFit:
    """Least squares with intercept; minimum-norm solution when rank deficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.size:
        raise ShapeMismatch("ols_fit expects x [n x d] and y [n]")
    if not np.any(x):
        return OlsFit(np.zeros(x.shape[1]), float(y.mean()), degenerate=True)
    aug = np.hstack([x, np.ones((x.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(aug, y, rcond=None)
    return OlsFit(coef[:-1], float(coef[-1]))


def _column_pearson(pred: np.ndarray, actual: np.ndarray) -> np.ndarray:
    """Pearson r along axis 0 for matching stacks; NaN where degenerate."""
    n = pred.shape[0]
    if n < 3:
        return np.full(pred.shape[1:], np.nan)
    p = pred - pred.mean(axis=0)
    a = actual - actual.mean(axis=0)
    num = np.einsum("i...,i...->...", p, a)
    den = np.sqrt(np.einsum("i...,i...->...", p, p)
                  * np.einsum("i...,i...->...", a, a))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = num / den
    return np.where(den > 0, r, np.nan)


def cv_encode(features, y: np.ndarray, folds: FoldAssignment) -> float:
    """r between concatenated held-out predictions and y.

    features is either one [n x d] matrix or a callable fold -> matrix for
    reductions fit per training fold.
    """
    y = np.asarray(y, dtype=np.float64)
    if folds.n_words != y.size:
        raise ShapeMismatch("fold assignment does not match y")
    get = features if callable(features) else (lambda _: features)
    pred = np.empty_like(y)
    for f in range(folds.folds):
        x = np.asarray(get(f), dtype=np.float64)
        te = folds.fold_of_word == f
        fit = ols_fit(x[~te], y[~te])
        pred[te] = fit.predict(x[te])
    return float(_column_pearson(pred[:, None], y[:, None])[0])


def _mask_groups(word_lag_valid: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Partition lags into runs sharing one valid-word set.

    Returns (lag_indices, word_mask) pairs; lags with no valid words are
    dropped (their cells stay NaN).
    """
    n_words, n_lags = word_lag_valid.shape
    groups: list[tuple[np.ndarray, np.ndarray]] = []
    start = 0
    while start < n_lags:
        mask = word_lag_valid[:, start]
        end = start + 1
        while end < n_lags and np.array_equal(word_lag_valid[:, end], mask):
            end += 1
        if mask.any():
            groups.append((np.arange(start, end), mask))
        start = end
    return groups


class GridEncoder:
    """Hat matrices for one layer's design, reusable across response tensors.

    For fold f with augmented train/test designs X_tr, X_te, held-out
    predictions for any response vector y are (X_te @ pinv(X_tr)) @ y_tr;
    the hat matrix is independent of electrode and lag, so one product per
    fold covers every (lag, electrode) cell in a validity group. Electrode
    selection reuses an instance across thousands of surrogate tensors.
    """

    def __init__(self, features_for_fold: Callable[[int], np.ndarray],
                 folds: FoldAssignment, word_lag_valid: np.ndarray,
                 dtype=np.float64):
        self.folds = folds
        self.n_lags = word_lag_valid.shape[1]
        self.dtype = np.dtype(dtype)
        # per group: lag indices, word indices, per-fold (test_pos, hat)
        self._plan: list[tuple[np.ndarray, np.ndarray, list[tuple[np.ndarray, np.ndarray]]]] = []
        cache: dict[int, np.ndarray] = {}

        def feats(f: int) -> np.ndarray:
            if f not in cache:
                cache[f] = np.asarray(features_for_fold(f), dtype=np.float64)
            return cache[f]

        for lag_idx, mask in _mask_groups(word_lag_valid):
            words = np.flatnonzero(mask)
            fold_of = folds.fold_of_word[words]
            per_fold = []
            for f in range(folds.folds):
                te = np.flatnonzero(fold_of == f)
                tr = np.flatnonzero(fold_of != f)
                if te.size == 0:
                    continue
                x = feats(f)[words]
                if tr.size == 0:
                    per_fold.append((te, np.full((te.size, 0), np.nan)))
                    continue
                x_tr = np.hstack([x[tr], np.ones((tr.size, 1))])
                x_te = np.hstack([x[te], np.ones((te.size, 1))])
                hat = (x_te @ np.linalg.pinv(x_tr)).astype(self.dtype)
                per_fold.append((te, hat))
            self._plan.append((lag_idx, words, per_fold))

    def r_grid(self, values_by_word: np.ndarray) -> np.ndarray:
        """values_by_word: [n_words x n_lags x n_electrodes] -> r [n_lags x n_el]."""
        n_el = values_by_word.shape[2]
        out = np.full((self.n_lags, n_el), np.nan)
        for lag_idx, words, per_fold in self._plan:
            actual = np.ascontiguousarray(
                values_by_word[np.ix_(words, lag_idx)], dtype=self.dtype)
            flat = actual.reshape(words.size, -1)
            pred = np.empty_like(flat)
            fold_of = self.folds.fold_of_word[words]
            for te, hat in per_fold:
                if hat.shape[1] == 0:
                    pred[te] = np.nan
                    continue
                tr = np.flatnonzero(fold_of != fold_of[te[0]])
                pred[te] = hat @ flat[tr]
            r = _column_pearson(pred.astype(np.float64),
                                flat.astype(np.float64))
            out[lag_idx] = r.reshape(lag_idx.size, n_el)
        return out

    def predictions(self, values_by_word: np.ndarray) -> np.ndarray:
        """Held-out predictions aligned with values_by_word; NaN where invalid."""
        pred_full = np.full(values_by_word.shape, np.nan)
        for lag_idx, words, per_fold in self._plan:
            actual = np.ascontiguousarray(
                values_by_word[np.ix_(words, lag_idx)], dtype=self.dtype)
            flat = actual.reshape(words.size, -1)
            pred = np.empty_like(flat)
            fold_of = self.folds.fold_of_word[words]
            for te, hat in per_fold:
                if hat.shape[1] == 0:
                    pred[te] = np.nan
                    continue
                tr = np.flatnonzero(fold_of != fold_of[te[0]])
                pred[te] = hat @ flat[tr]
            pred_full[np.ix_(words, lag_idx)] = pred.reshape(actual.shape)
        return pred_full


def encode_grid(reduced, responses: ResponseTensor, folds: FoldAssignment,
                threads: int = 1, dtype=np.float64,
                layers: Sequence[int] | None = None) -> np.ndarray:
    """r for every (layer, lag, electrode) cell.

    reduced is a ReducedEmbeddings; in train_only mode each fold's features
    come from that fold's projection. Layer results are written to disjoint
    slices, so the output is identical for any thread count.
    """
    if reduced.n_words != responses.n_words:
        raise ShapeMismatch("embeddings and responses disagree on word count")
    if folds.n_words != responses.n_words:
        raise ShapeMismatch("fold assignment does not match word count")
    layer_list = list(range(reduced.layer_count)) if layers is None else list(layers)
    values_by_word = responses.by_word()
    valid = responses.word_lag_valid
    out = np.full((len(layer_list), responses.n_lags, responses.n_electrodes), np.nan)

    def one_layer(slot: int) -> None:
        layer = layer_list[slot]
        enc = GridEncoder(lambda f: reduced.matrix(layer, f), folds, valid, dtype)
        out[slot] = enc.r_grid(values_by_word)

    if threads <= 1:
        for slot in range(len(layer_list)):
            one_layer(slot)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one_layer, range(len(layer_list))))
    return out


def grid_to_matrices(r_grid: np.ndarray, lags_ms: np.ndarray,
                     electrode_ids: Sequence[str], condition: str,
                     layer_indices: Sequence[int] | None = None) -> list[EncodingMatrix]:
    """Split an [n_layers x n_lags x n_el] grid into per-electrode matrices."""
    n_layers = r_grid.shape[0]
    idx = tuple(layer_indices) if layer_indices is not None else tuple(range(1, n_layers + 1))
    return [
        EncodingMatrix(values=np.ascontiguousarray(r_grid[:, :, e]),
                       lags_ms=np.asarray(lags_ms, dtype=np.float64),
                       tag=str(eid), kind="electrode", condition=condition,
                       layer_indices=idx)
        for e, eid in enumerate(electrode_ids)
    ]


def average_roi(matrices: Sequence[EncodingMatrix], roi: str,
                roi_by_tag: Mapping[str, str], condition: str) -> EncodingMatrix:
    """Cell-wise mean over a region's electrodes, ignoring NaN cells.

    contributing records how many electrodes fed each cell.
    """
    members = [m for m in matrices if roi_by_tag.get(m.tag) == roi]
    if not members:
        raise EmptyRoi(f"no encoding matrices for roi {roi!r}")
    first = members[0]
    for m in members[1:]:
        if m.values.shape != first.values.shape or not np.array_equal(
                m.layer_indices, first.layer_indices):
            raise ShapeMismatch("roi members have mismatched grids")
    stack = np.stack([m.values for m in members])
    contributing = np.sum(~np.isnan(stack), axis=0)
    with np.errstate(invalid="ignore"):
        mean = np.where(contributing > 0, np.nansum(stack, axis=0), np.nan)
    mean = mean / np.maximum(contributing, 1)
    mean[contributing == 0] = np.nan
    return EncodingMatrix(values=mean, lags_ms=first.lags_ms.copy(), tag=roi,
                          kind="roi", condition=condition,
                          layer_indices=first.layer_indices,
                          contributing=contributing)


def scale_encodings(m: EncodingMatrix) -> EncodingMatrix:
    """Divide each layer row by its peak so every kept row tops out at 1.

    Rows whose maximum is not a positive finite number are dropped and
    recorded in dropped_layers; argmax locations are unchanged by the
    positive scaling.
    """
    with np.errstate(all="ignore"):
        row_max = np.nanmax(np.where(np.isnan(m.values), -np.inf, m.values), axis=1)
    keep = np.isfinite(row_max) & (row_max > 0)
    dropped = tuple(int(m.layer_indices[i]) for i in np.flatnonzero(~keep))
    if not keep.any():
        raise NoPositivePeak(f"no layer of {m.tag!r} has a positive peak")
    values = m.values[keep] / row_max[keep, None]
    kept_idx = tuple(int(m.layer_indices[i]) for i in np.flatnonzero(keep))
    contributing = m.contributing[keep] if m.contributing is not None else None
    return EncodingMatrix(values=values, lags_ms=m.lags_ms.copy(), tag=m.tag,
                          kind=m.kind, condition=m.condition,
                          layer_indices=kept_idx, contributing=contributing,
                          dropped_layers=m.dropped_layers + dropped,
                          scaled=True)


def peak_lags(m: EncodingMatrix) -> PeakLagTable:
    """Lag of each layer's maximum; ties resolve to the earliest lag."""
    rows = m.values
    all_nan = np.all(np.isnan(rows), axis=1)
    if all_nan.any():
        bad = [m.layer_indices[i] for i in np.flatnonzero(all_nan)]
        raise AllNaNRow(f"layers {bad} of {m.tag!r} have no finite cells")
    filled = np.where(np.isnan(rows), -np.inf, rows)
    pos = np.argmax(filled, axis=1)  # first occurrence = earliest lag
    return PeakLagTable(layer_indices=m.layer_indices,
                        peak_lag_ms=m.lags_ms[pos].copy(),
                        peak_r=rows[np.arange(rows.shape[0]), pos].copy(),
                        tag=m.tag, condition=m.condition)


def _encoding_stem(m: EncodingMatrix) -> str:
    tag = m.tag.replace("/", "_").replace("\\", "_")
    return f"{tag}_{m.condition}"


def save_encoding(directory: str | Path, m: EncodingMatrix) -> Path:
    """Write <tag>_<condition>.f32 (row-major [n_layers x n_lags]) + sidecar JSON."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = _encoding_stem(m)
    meta = {
        "tag": m.tag,
        "kind": m.kind,
        "condition": m.condition,
        "n_layers": int(m.values.shape[0]),
        "n_lags": int(m.values.shape[1]),
        "lags_ms": [float(v) for v in m.lags_ms],
        "layer_indices": [int(v) for v in m.layer_indices],
        "dropped_layers": [int(v) for v in m.dropped_layers],
        "contributing": None if m.contributing is None
        else [[int(c) for c in row] for row in m.contributing],
        "scaled": m.scaled,
        "dtype": "<f4",
    }
    try:
        np.ascontiguousarray(m.values, dtype="<f4").tofile(directory / f"{stem}.f32")
        with open(directory / f"{stem}.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write encoding {stem!r}: {exc}") from exc
    return directory / f"{stem}.f32"


def load_encoding(directory: str | Path, tag: str, condition: str) -> EncodingMatrix:
    directory = Path(directory)
    stem = f"{tag}_{condition}"
    json_path = directory / f"{stem}.json"
    raw_path = directory / f"{stem}.f32"
    for p in (json_path, raw_path):
        if not p.exists():
            raise MissingFile(str(p))
    with open(json_path) as fh:
        meta = json.load(fh)
    values = np.fromfile(raw_path, dtype="<f4")
    shape = (meta["n_layers"], meta["n_lags"])
    if values.size != shape[0] * shape[1]:
        raise ShapeMismatch(
            f"{raw_path.name}: {values.size} floats, expected {shape[0] * shape[1]}")
    contributing = meta.get("contributing")
    return EncodingMatrix(
        values=values.reshape(shape).astype(np.float64),
        lags_ms=np.asarray(meta["lags_ms"], dtype=np.float64),
        tag=meta["tag"], kind=meta["kind"], condition=meta["condition"],
        layer_indices=tuple(meta["layer_indices"]),
        contributing=None if contributing is None else np.asarray(contributing),
        dropped_layers=tuple(meta.get("dropped_layers", ())),
        scaled=bool(meta.get("scaled", False)),
    )
