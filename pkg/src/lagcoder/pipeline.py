"""End-to-end orchestration: bundle -> encodings, stats, plots, report.

Stage order: load -> preprocess (skipped when the recording is already a
power envelope) -> optional electrode selection -> per-condition reduce,
encode, region averaging, peak extraction, lag-layer stats -> plots.

Two output files split by purpose: report.json holds only numerics and is
byte-identical across reruns with the same seed and config; run_meta.json
holds timings, versions and input checksums and may differ between runs.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from .bundle import load_bundle
from .encoding import (average_roi, encode_grid, grid_to_matrices, peak_lags,
                       save_encoding, scale_encodings, window_responses)
from .embeddings import reduce_layers
from .errors import LagcoderError, StageError
from .plots import PlotSpec, render
from .preprocess import PreprocessConfig, preprocess_recording
from .seeds import STREAM_FOLDS, STREAM_LAYER_PERM, STREAM_SELECT, rng_for
from .stats import lag_layer_correlation, select_electrodes
from .synth import POWER_DOMAIN_MARK
from .types import (CONDITIONS, Config, EncodingMatrix, SignalRecording,
                    contiguous_folds, random_folds)


def _nan_to_none(obj):
    if isinstance(obj, float):
        return None if not np.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    return obj


def _select_layers(m: EncodingMatrix, layer_indices) -> EncodingMatrix:
    wanted = [int(np.flatnonzero(np.asarray(m.layer_indices) == i)[0])
              for i in layer_indices]
    return EncodingMatrix(
        values=m.values[wanted], lags_ms=m.lags_ms.copy(), tag=m.tag,
        kind=m.kind, condition=m.condition, layer_indices=tuple(layer_indices),
        contributing=None if m.contributing is None else m.contributing[wanted])


def needs_preprocess(rec: SignalRecording) -> bool:
    return ("band_power" not in rec.provenance
            and POWER_DOMAIN_MARK not in rec.provenance)


def _write_peaks_csv(path: Path, peaks) -> None:
    lines = ["layer,peak_lag_ms,peak_r"]
    for layer, lag, r in zip(peaks.layer_indices, peaks.peak_lag_ms, peaks.peak_r):
        lines.append(f"{int(layer)},{float(lag)!r},{float(r)!r}")
    path.write_text("\n".join(lines) + "\n")


def _write_electrode_peaks_csv(path: Path, matrices, roi_by_tag) -> None:
    """Long-format table feeding the mixed-model and spread comparisons."""
    lines = ["electrode,roi,layer,peak_lag_ms,peak_r"]
    for m in matrices:
        peaks = peak_lags(m)
        for layer, lag, r in zip(peaks.layer_indices, peaks.peak_lag_ms,
                                 peaks.peak_r):
            lines.append(f"{m.tag},{roi_by_tag[m.tag]},{int(layer)},"
                         f"{float(lag)!r},{float(r)!r}")
    path.write_text("\n".join(lines) + "\n")


def run_pipeline(cfg: Config, bundle_dir: str | Path, out_dir: str | Path,
                 embedding_set: str = "contextual",
                 conditions: Sequence[str] = CONDITIONS,
                 select_set: str | None = None,
                 select_n_perm: int | None = None,
                 write_plots: bool = True) -> dict:
    """Run every stage and write artifacts under out_dir; returns the report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    cfg_dict = json.loads(cfg.to_json())
    report: dict = {"config": cfg_dict, "conditions": {}, "selection": None}

    def stage(name):
        class _Timer:
            def __enter__(self_inner):
                self_inner.t0 = time.perf_counter()
                return self_inner

            def __exit__(self_inner, exc_type, exc, tb):
                timings[name] = timings.get(name, 0.0) + time.perf_counter() - self_inner.t0
                if exc is not None and isinstance(exc, LagcoderError) \
                        and not isinstance(exc, StageError):
                    raise StageError(name, str(exc)) from exc
                return False
        return _Timer()

    with stage("load"):
        bundle = load_bundle(bundle_dir)
        manifest_bytes = (Path(bundle_dir) / "manifest.json").read_bytes()
        bundle_checksum = hashlib.sha256(manifest_bytes).hexdigest()
        if embedding_set not in bundle.embedding_sets:
            raise StageError("load", f"bundle has no embedding set {embedding_set!r}")

    rec = bundle.recording
    with stage("preprocess"):
        if needs_preprocess(rec):
            rec = preprocess_recording(
                rec, PreprocessConfig(smooth_kernel_ms=cfg.smooth_kernel_ms))

    with stage("select"):
        if select_set is not None:
            if select_set not in bundle.embedding_sets:
                raise StageError(
                    "select", f"selection needs embedding set {select_set!r}, "
                    f"bundle has {sorted(bundle.embedding_sets)}")
            sel = select_electrodes(
                rec, bundle.onsets(), bundle.embedding_sets[select_set],
                cfg.lag_grid_ms(), window_ms=cfg.window_ms, n_folds=cfg.folds,
                n_components=cfg.pca_components,
                n_perm=select_n_perm or cfg.n_perm_select,
                q_threshold=cfg.select_q_threshold,
                rng=rng_for(cfg.master_seed, STREAM_SELECT),
                electrode_ids=bundle.electrode_ids)
            for el, picked in zip(bundle.electrodes, sel.selected):
                el.selected = bool(picked)
            report["selection"] = {
                "selected_ids": list(sel.selected_ids()),
                "p_values": {e: float(p) for e, p in
                             zip(sel.electrode_ids, sel.p_values)},
                "q_values": {e: float(q) for e, q in
                             zip(sel.electrode_ids, sel.q_values)},
                "observed_max_r": {e: float(r) for e, r in
                                   zip(sel.electrode_ids, sel.observed_max_r)},
                "n_perm": sel.n_perm,
                "q_threshold": sel.q_threshold,
            }

    selected_pos = [i for i, el in enumerate(bundle.electrodes) if el.selected]
    if not selected_pos:
        raise StageError("encode", "no selected electrodes to encode")
    sel_ids = [bundle.electrodes[i].id for i in selected_pos]
    roi_by_tag = {bundle.electrodes[i].id: bundle.electrodes[i].roi
                  for i in selected_pos}
    sub_rec = SignalRecording(rec.samples[selected_pos], rec.sample_rate,
                              rec.t0, rec.provenance)
    lags = cfg.lag_grid_ms()
    onsets_all = np.asarray(bundle.onsets())
    enc_dir = out_dir / "encodings"
    scaled_dir = out_dir / "encodings_scaled"
    peaks_dir = out_dir / "peaks"
    plots_dir = out_dir / "plots"

    for ci, condition in enumerate(conditions):
        with stage(f"encode[{condition}]"):
            word_rows = np.asarray(bundle.word_indices_for(condition), dtype=np.intp)
            entry: dict = {"n_words": int(word_rows.size), "rois": {}}
            report["conditions"][condition] = entry
            if word_rows.size < cfg.folds + 2:
                entry["skipped"] = (f"only {word_rows.size} words; "
                                    f"need > {cfg.folds + 1}")
                continue
            es = bundle.embedding_sets[embedding_set]
            es = type(es)(es.name, es.kind, [l[word_rows] for l in es.layers])
            if cfg.fold_scheme == "random":
                folds = random_folds(word_rows.size, cfg.folds,
                                     rng_for(cfg.master_seed, STREAM_FOLDS, ci))
            else:
                folds = contiguous_folds(word_rows.size, cfg.folds)
            responses = window_responses(sub_rec, onsets_all[word_rows], lags,
                                         cfg.window_ms)
            reduced = reduce_layers(es, folds, cfg.pca_mode, cfg.pca_components)
            grid = encode_grid(reduced, responses, folds, threads=cfg.threads)
            matrices = grid_to_matrices(grid, lags, sel_ids, condition)
            for m in matrices:
                save_encoding(enc_dir, m)

        with stage(f"stats[{condition}]"):
            peaks_dir.mkdir(parents=True, exist_ok=True)
            _write_electrode_peaks_csv(
                peaks_dir / f"electrodes_{condition}.csv", matrices, roi_by_tag)
            present = sorted({roi_by_tag[t] for t in sel_ids})
            for ri, roi in enumerate(r for r in cfg.rois if r in present):
                roi_mat = average_roi(matrices, roi, roi_by_tag, condition)
                save_encoding(enc_dir, roi_mat)
                scaled = scale_encodings(roi_mat)
                save_encoding(scaled_dir, scaled)
                peaks = peak_lags(_select_layers(roi_mat, scaled.layer_indices))
                result = lag_layer_correlation(
                    peaks, n_perm=cfg.n_perm_layers,
                    rng=rng_for(cfg.master_seed, STREAM_LAYER_PERM, ci, ri))
                peaks_dir.mkdir(parents=True, exist_ok=True)
                _write_peaks_csv(peaks_dir / f"{roi}_{condition}.csv", peaks)
                entry["rois"][roi] = {
                    "n_electrodes": sum(1 for t in sel_ids if roi_by_tag[t] == roi),
                    "pearson_r": result.pearson_r,
                    "spearman_r": result.spearman_r,
                    "permutation_p": result.permutation_p,
                    "n_perm": result.n_perm,
                    "layer_indices": [int(v) for v in peaks.layer_indices],
                    "peak_lags_ms": [float(v) for v in peaks.peak_lag_ms],
                    "peak_r": [float(v) for v in peaks.peak_r],
                    "dropped_layers": [int(v) for v in scaled.dropped_layers],
                }
                if write_plots:
                    base = f"{roi}_{condition}"
                    render(PlotSpec("encoding_lines", title=base,
                                    out_path=plots_dir / f"{base}_encoding.svg"),
                           roi_mat)
                    render(PlotSpec("scaled_encoding", title=f"{base} scaled",
                                    out_path=plots_dir / f"{base}_scaled.svg"),
                           scaled)
                    render(PlotSpec("lag_layer_scatter", title=f"{base} peaks",
                                    out_path=plots_dir / f"{base}_scatter.svg"),
                           (peaks, f"r={result.pearson_r:.3f}"))

    with stage("report"):
        clean = _nan_to_none(report)
        with open(out_dir / "report.json", "w") as fh:
            json.dump(clean, fh, indent=2, sort_keys=True)
            fh.write("\n")
        meta = {
            "bundle_manifest_sha256": bundle_checksum,
            "config": cfg_dict,
            "versions": {
                "python": sys.version.split()[0],
                "numpy": np.__version__,
            },
            "timings_s": {k: round(v, 3) for k, v in timings.items()},
        }
        try:
            import scipy
            meta["versions"]["scipy"] = scipy.__version__
        except ImportError:
            pass
        with open(out_dir / "run_meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report
