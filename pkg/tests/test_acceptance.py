"""Acceptance suite: one test per end-to-end property of the package.

Each test carries its full protocol inline so a single pytest line reports
pass or fail for one property. The module is slow by design; the electrode
selection sweep and the fifty-bundle null calibration dominate its runtime.
"""

import json
import time

import numpy as np
import pytest

from lagcoder import (Config, RoiPlan, SynthSpec, average_roi, contiguous_folds,
                      encode_grid, fdr_bh, fit_lmm, grid_to_matrices,
                      lag_layer_correlation, levene_test, load_bundle,
                      peak_lags, pearson, phase_randomize, reduce_layers,
                      rng_for, run_interpolation_control, run_pipeline,
                      run_projection_control, select_electrodes, spearman,
                      synth_generate, window_responses)
from lagcoder.seeds import STREAM_SELECT


@pytest.fixture(scope="module")
def planted_dir(tmp_path_factory):
    """Eight driven electrodes; layer k peaks at 100 + 6k ms, default noise."""
    out = tmp_path_factory.mktemp("planted") / "bundle"
    synth_generate(SynthSpec(rois={"IFG": RoiPlan(8, 6.0, 100.0)}, seed=3), out)
    return out


def roi_peak_table(bundle, lags, window_ms, roi, n_components=50, folds_n=10):
    """Encode one roi end to end and return its layer peak table."""
    onsets = np.asarray(bundle.onsets())
    folds = contiguous_folds(onsets.size, folds_n)
    reduced = reduce_layers(bundle.embedding_sets["contextual"], folds,
                            "full", n_components)
    responses = window_responses(bundle.recording, onsets, lags, window_ms)
    grid = encode_grid(reduced, responses, folds, dtype=np.float32)
    mats = grid_to_matrices(grid, lags, bundle.electrode_ids, "all")
    roi_map = {e: roi for e in bundle.electrode_ids}
    return peak_lags(average_roi(mats, roi, roi_map, "all")), grid


def test_criterion_1_planted_recovery(planted_dir, tmp_path):
    cfg = Config(rois=("IFG",), window_ms=100.0)
    t0 = time.perf_counter()
    report = run_pipeline(cfg, planted_dir, tmp_path / "out",
                          conditions=("all",), write_plots=False)
    elapsed = time.perf_counter() - t0
    roi = report["conditions"]["all"]["rois"]["IFG"]
    layers = np.asarray(roi["layer_indices"], dtype=float)
    est = np.asarray(roi["peak_lags_ms"], dtype=float)
    hits = int(np.sum(np.abs(est - (100.0 + 6.0 * layers)) <= 25.0))
    assert roi["pearson_r"] >= 0.95
    assert hits / 48 >= 0.90  # dropped layers count as misses
    assert elapsed <= 600.0


def test_criterion_2_null_calibration():
    # one all-noise bundle: the full encoding grid stays near zero
    spec = SynthSpec(rois={"other": RoiPlan(10, 0.0, 0.0, 0.0)}, seed=1)
    bundle, _ = synth_generate(spec)
    lags = Config(rois=("other",)).lag_grid_ms()
    _, grid = roi_peak_table(bundle, lags, 200.0, "other")
    finite = np.abs(grid[np.isfinite(grid)])
    assert float(np.quantile(finite, 0.95)) < 0.1

    # fifty fresh noise draws: the lag-layer permutation test stays quiet
    coarse = Config(rois=("other",), lag_step_ms=50.0).lag_grid_ms()
    quiet = 0
    for i in range(50):
        noisy, _ = synth_generate(
            SynthSpec(rois={"other": RoiPlan(10, 0.0, 0.0, 0.0)}, seed=100 + i))
        pk, _ = roi_peak_table(noisy, coarse, 200.0, "other")
        res = lag_layer_correlation(pk, n_perm=5000, rng=rng_for(100 + i, 9))
        quiet += int(res.permutation_p > 0.05)
    assert quiet >= 45


def test_criterion_3_interpolation_control_discriminates():
    cfg = Config(lag_min_ms=-600.0, lag_max_ms=600.0, lag_step_ms=50.0,
                 pca_components=30, folds=5)
    base = dict(rois={"IFG": RoiPlan(6, 20.0, 50.0)}, n_words=400, n_layers=16,
                embedding_dim=32, word_spacing_s=0.3, jitter_s=0.03,
                white_sigma=0.2, pink_amplitude=0.2)
    chained, _ = synth_generate(SynthSpec(seed=21, **base))
    rep = run_interpolation_control(chained, "IFG", cfg, n_iter=200,
                                    pool_size=1000)
    assert rep.p_value < 0.01

    mixed, _ = synth_generate(SynthSpec(seed=22, layer_mode="interpolated",
                                        **base))
    rep2 = run_interpolation_control(mixed, "IFG", cfg, n_iter=200,
                                     pool_size=1000)
    assert rep2.p_value > 0.05


def test_criterion_4_projection_out_control(planted_dir):
    bundle = load_bundle(planted_dir)
    cfg = Config(rois=("IFG",), window_ms=100.0)
    rep = run_projection_control(bundle, "IFG", cfg, n_perm=10000)
    assert rep.below_ceiling
    assert rep.remaining_lag_layer.pearson_r >= 0.8


def test_criterion_5_electrode_selection_sweep():
    exact = 0
    for seed in range(20):
        spec = SynthSpec(rois={"IFG": RoiPlan(5, 6.0, 100.0),
                               "other": RoiPlan(15, 0.0, 0.0, 0.0)},
                         n_words=150, n_layers=6, embedding_dim=32,
                         layer_mix=0.1, seed=seed)
        bundle, truth = synth_generate(spec)
        report = select_electrodes(
            bundle.recording, np.asarray(bundle.onsets()),
            bundle.embedding_sets["static"],
            lags_ms=np.arange(-600.0, 601.0, 50.0), n_components=24,
            n_perm=1000, rng=rng_for(seed, STREAM_SELECT),
            electrode_ids=bundle.electrode_ids)
        driven = tuple(e for e, d in truth["driven"].items() if d)
        exact += int(report.selected_ids() == driven)
    assert exact / 20 >= 0.95


def test_criterion_6_statistics_oracles():
    # BH step-up against the direct definition, short and long vectors
    np.testing.assert_allclose(fdr_bh(np.array([0.01, 0.02, 0.03])),
                               [0.03, 0.03, 0.03], atol=1e-12)
    rng = np.random.default_rng(14)
    p = rng.uniform(0.0, 1.0, size=10)
    order = np.argsort(p)
    k = p.size
    q_expected = np.empty(k)
    for pos, idx in enumerate(order):
        q_expected[idx] = min(1.0, min(k * p[order[j]] / (j + 1)
                                       for j in range(pos, k)))
    np.testing.assert_allclose(fdr_bh(p), q_expected, atol=1e-12)

    # correlation moments written out longhand
    x = rng.normal(size=31)
    y = x + rng.normal(size=31)
    dx, dy = x - x.mean(), y - y.mean()
    r_direct = float((dx * dy).sum() / np.sqrt((dx ** 2).sum() * (dy ** 2).sum()))
    assert abs(pearson(x, y) - r_direct) < 1e-12
    rx = np.argsort(np.argsort(x)).astype(float)  # no ties in normal draws
    ry = np.argsort(np.argsort(y)).astype(float)
    assert abs(spearman(x, y) - pearson(rx, ry)) < 1e-12

    # surrogates keep spectrum magnitudes at even and odd lengths
    for n in (256, 255):
        v = np.random.default_rng(7).normal(size=n)
        s = phase_randomize(v, np.random.default_rng(8))
        np.testing.assert_allclose(np.abs(np.fft.rfft(s)),
                                   np.abs(np.fft.rfft(v)), rtol=1e-6)

    # tenfold spread with 48 samples per group
    rng2 = np.random.default_rng(9)
    _, p_lev = levene_test([rng2.normal(0.0, 1.0, 48),
                            rng2.normal(0.0, 10.0, 48)])
    assert p_lev < 0.01

    # mixed model recovers a planted 5 ms/layer slope
    rng3 = np.random.default_rng(22)
    rows = []
    for e in range(20):
        b1 = rng3.normal(0.0, 1.0)
        for layer in range(1, 49):
            lag = 100.0 + (5.0 + b1) * layer + rng3.normal(0.0, 10.0)
            rows.append((f"e{e:02d}", float(layer), lag))
    fit = fit_lmm(rows)
    assert 4.0 <= fit.fixed_slope <= 6.0


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes()
            for p in root.rglob("*") if p.is_file()}


def test_criterion_7_determinism_across_runs_and_threads(tmp_path):
    bundle = tmp_path / "bundle"
    synth_generate(SynthSpec(rois={"IFG": RoiPlan(2, 6.0, 100.0),
                                   "TP": RoiPlan(2, 8.0, 150.0)},
                             n_words=150, n_layers=6, embedding_dim=32,
                             word_spacing_s=0.3, jitter_s=0.03, seed=5), bundle)
    base = dict(lag_min_ms=-600.0, lag_max_ms=600.0, lag_step_ms=50.0,
                pca_components=10, folds=5, n_perm_layers=500,
                rois=("IFG", "TP"))
    outs = []
    for name, threads in (("a", 1), ("b", 1), ("c", 3)):
        out = tmp_path / name
        run_pipeline(Config(threads=threads, **base), bundle, out,
                     conditions=("all",), write_plots=False)
        outs.append(out)
    a, b, c = outs
    assert tree_bytes(a / "encodings") == tree_bytes(b / "encodings")
    assert tree_bytes(a / "peaks") == tree_bytes(b / "peaks")
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    # thread count changes scheduling only, never numbers
    assert tree_bytes(a / "encodings") == tree_bytes(c / "encodings")
    ra = json.loads((a / "report.json").read_text())
    rc = json.loads((c / "report.json").read_text())
    assert ra["conditions"] == rc["conditions"]


def test_criterion_8_window_robustness(planted_dir):
    bundle = load_bundle(planted_dir)
    lags = Config(rois=("IFG",)).lag_grid_ms()
    for window_ms in (50.0, 100.0, 200.0, 300.0):
        pk, _ = roi_peak_table(bundle, lags, window_ms, "IFG")
        layers = np.asarray(pk.layer_indices, dtype=float)
        assert pearson(layers, pk.peak_lag_ms) >= 0.9, f"window {window_ms}"
