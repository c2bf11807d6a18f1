"""Lagged linear encoding of layered embeddings against electrode band power.

The package turns a dataset bundle (multi-electrode signals, word onsets,
per-layer embeddings) into lag-resolved encoding matrices, peak-lag
statistics, and control analyses, with a deterministic end-to-end pipeline
and a synthetic generator for verification.
"""

from .bundle import (DatasetBundle, add_embedding_set, classify_predictability,
                     load_bundle, write_bundle)
from .controls import (ControlReport, ProjectionReport,
                       run_interpolation_control, run_projection_control)
from .embeddings import (PcaModel, PseudoLayerPool, ReducedEmbeddings,
                         interpolate_pseudo_layers, pca_fit, project_out_layer,
                         reduce_layers, sample_pseudo_set)
from .encoding import (GridEncoder, OlsFit, ResponseTensor, average_roi,
                       cv_encode, encode_grid, grid_to_matrices, load_encoding,
                       ols_fit, peak_lags, save_encoding, scale_encodings,
                       window_responses, window_signal)
from .errors import (AllNaNRow, AllSpikes, ChecksumMismatch, DegenerateGroup,
                     DimensionMismatch, EmptyBand, EmptyRoi, GridOverflow,
                     IoFailure, LagcoderError, MissingFile, MissingRank,
                     NonFiniteValue, NonMonotonicOnsets, NoPositivePeak,
                     NyquistViolation, OutOfRange, PoolTooSmall, ShapeMismatch,
                     StageError, TooFewElectrodes, TooFewPairs)
from .pipeline import needs_preprocess, run_pipeline
from .plots import PlotSpec, render
from .preprocess import (PreprocessConfig, common_average_reference, despike,
                         hamming_smooth, highgamma_power, preprocess_recording)
from .seeds import rng_for
from .stats import (LagLayerResult, LmmFit, PairedTtestResult, SelectionReport,
                    bootstrap_roi_peaks, fdr_bh, fit_lmm, lag_layer_correlation,
                    levene_test, paired_ttest_layers, pearson,
                    permutation_test_layers, phase_randomize, reml_loglik,
                    select_electrodes, spearman)
from .synth import RoiPlan, SynthSpec, load_ground_truth, synth_generate
from .types import (Config, ElectrodeMeta, EmbeddingSet, EncodingMatrix,
                    PeakLagTable, SignalRecording, WordEvent, contiguous_folds,
                    random_folds)

__version__ = "0.1.0"

__all__ = [
    "AllNaNRow", "AllSpikes", "ChecksumMismatch", "Config", "ControlReport",
    "DatasetBundle", "DegenerateGroup", "DimensionMismatch", "ElectrodeMeta",
    "EmbeddingSet", "EmptyBand", "EmptyRoi", "EncodingMatrix", "GridEncoder",
    "GridOverflow", "IoFailure", "LagLayerResult", "LagcoderError", "LmmFit",
    "MissingFile", "MissingRank", "NoPositivePeak", "NonFiniteValue",
    "NonMonotonicOnsets", "NyquistViolation", "OlsFit", "OutOfRange",
    "PairedTtestResult", "PcaModel", "PeakLagTable", "PlotSpec",
    "PoolTooSmall", "PreprocessConfig", "ProjectionReport", "ReducedEmbeddings",
    "ResponseTensor", "RoiPlan", "SelectionReport", "ShapeMismatch",
    "SignalRecording", "StageError", "SynthSpec", "TooFewElectrodes",
    "TooFewPairs", "WordEvent", "add_embedding_set", "average_roi",
    "bootstrap_roi_peaks", "classify_predictability",
    "common_average_reference", "contiguous_folds", "cv_encode", "despike",
    "encode_grid", "fdr_bh", "fit_lmm", "grid_to_matrices", "hamming_smooth",
    "highgamma_power", "interpolate_pseudo_layers", "lag_layer_correlation",
    "levene_test", "load_bundle", "load_encoding", "load_ground_truth",
    "needs_preprocess", "ols_fit", "paired_ttest_layers", "pca_fit",
    "peak_lags", "pearson",
    "permutation_test_layers", "phase_randomize", "preprocess_recording",
    "project_out_layer", "PseudoLayerPool", "random_folds", "reduce_layers",
    "reml_loglik", "render", "rng_for", "run_interpolation_control",
    "run_pipeline", "run_projection_control", "sample_pseudo_set",
    "save_encoding", "scale_encodings", "select_electrodes", "spearman",
    "synth_generate", "window_responses", "window_signal", "write_bundle",
]
