"""Command-line interface.

One executable with subcommands covering the full workflow: bundle
preprocessing, embedding reduction, grid encoding, the statistics suite,
both controls, synthetic-data generation, figure rendering, and the
end-to-end pipeline. Thread count defaults to the LAGCODER_THREADS
environment variable; every randomized command takes --seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bundle import DatasetBundle, add_embedding_set, load_bundle, write_bundle
from .controls import run_interpolation_control, run_projection_control
from .embeddings import reduce_layers
from .encoding import (average_roi, encode_grid, grid_to_matrices,
                       load_encoding, peak_lags, save_encoding,
                       scale_encodings, window_responses)
from .errors import LagcoderError, StageError
from .pipeline import (_write_electrode_peaks_csv, needs_preprocess,
                       run_pipeline)
from .plots import KINDS, PlotSpec, render
from .preprocess import PreprocessConfig, preprocess_recording
from .seeds import STREAM_LAYER_PERM, STREAM_SELECT, rng_for
from .stats import (fit_lmm, lag_layer_correlation, levene_test,
                    paired_ttest_layers, select_electrodes)
from .synth import RoiPlan, SynthSpec, synth_generate
from .types import Config, SignalRecording, contiguous_folds


def _env_threads() -> int:
    try:
        return max(1, int(os.environ.get("LAGCODER_THREADS", "1")))
    except ValueError:
        return 1


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _config_from(args) -> Config:
    if getattr(args, "config", None):
        cfg = Config.from_json(Path(args.config).read_text())
    else:
        cfg = Config()
    overrides = {}
    for attr, field in (("seed", "master_seed"), ("threads", "threads"),
                        ("window_ms", "window_ms"), ("folds", "folds"),
                        ("components", "pca_components"),
                        ("pca_mode", "pca_mode"),
                        ("smooth_kernel_ms", "smooth_kernel_ms")):
        v = getattr(args, attr, None)
        if v is not None:
            overrides[field] = v
    if overrides:
        d = json.loads(cfg.to_json())
        d.update(overrides)
        d["rois"] = tuple(d["rois"])
        cfg = Config(**d)
    return cfg


def _loaded_power_recording(bundle: DatasetBundle) -> SignalRecording:
    rec = bundle.recording
    if needs_preprocess(rec):
        rec = preprocess_recording(rec)
    return rec


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_preprocess(args) -> int:
    bundle = load_bundle(args.bundle)
    if not needs_preprocess(bundle.recording) and not args.force:
        raise StageError("preprocess",
                         "recording is already a power envelope (use --force)")
    cfg = PreprocessConfig(smooth_kernel_ms=args.kernel_ms,
                           despike=not args.no_despike)
    rec = preprocess_recording(bundle.recording, cfg)
    out = DatasetBundle(rec, bundle.electrodes, bundle.words,
                        bundle.embedding_sets,
                        provenance=tuple(dict.fromkeys(
                            bundle.provenance + rec.provenance)))
    write_bundle(out, args.out)
    print(f"preprocessed bundle written to {args.out}")
    return 0


def _cmd_reduce(args) -> int:
    bundle = load_bundle(args.bundle)
    if args.set not in bundle.embedding_sets:
        raise StageError("reduce", f"bundle has no embedding set {args.set!r}")
    es = bundle.embedding_sets[args.set]
    folds = contiguous_folds(es.n_words, 10)
    reduced = reduce_layers(es, folds, "full", args.components)
    name = args.name or f"{args.set}_pca{args.components}"
    add_embedding_set(args.bundle, reduced.to_embedding_set(name))
    print(f"added embedding set {name!r} to {args.bundle}")
    return 0


def _cmd_encode(args) -> int:
    cfg = _config_from(args)
    bundle = load_bundle(args.bundle)
    if args.set not in bundle.embedding_sets:
        raise StageError("encode", f"bundle has no embedding set {args.set!r}")
    rec = _loaded_power_recording(bundle)
    positions = [i for i, el in enumerate(bundle.electrodes)
                 if el.selected and (args.roi == "all" or el.roi == args.roi)]
    if not positions:
        raise StageError("encode", f"no selected electrodes for roi {args.roi!r}")
    ids = [bundle.electrodes[i].id for i in positions]
    roi_by_tag = {bundle.electrodes[i].id: bundle.electrodes[i].roi
                  for i in positions}
    word_rows = bundle.word_indices_for(args.condition)
    onsets = bundle.onsets()[word_rows]
    es = bundle.embedding_sets[args.set]
    es = type(es)(es.name, es.kind, [l[word_rows] for l in es.layers])
    folds = contiguous_folds(word_rows.size, cfg.folds)
    sub = SignalRecording(rec.samples[positions], rec.sample_rate, rec.t0,
                          rec.provenance)
    responses = window_responses(sub, onsets, cfg.lag_grid_ms(), cfg.window_ms)
    reduced = reduce_layers(es, folds, cfg.pca_mode, cfg.pca_components)
    grid = encode_grid(reduced, responses, folds, threads=cfg.threads)
    matrices = grid_to_matrices(grid, cfg.lag_grid_ms(), ids, args.condition)
    out = Path(args.out)
    for m in matrices:
        save_encoding(out / "encodings", m)
    (out / "peaks").mkdir(parents=True, exist_ok=True)
    _write_electrode_peaks_csv(
        out / "peaks" / f"electrodes_{args.condition}.csv", matrices, roi_by_tag)
    rois = sorted(set(roi_by_tag.values())) if args.roi == "all" else [args.roi]
    for roi in rois:
        roi_mat = average_roi(matrices, roi, roi_by_tag, args.condition)
        save_encoding(out / "encodings", roi_mat)
        peaks = peak_lags(roi_mat)
        (out / "peaks").mkdir(parents=True, exist_ok=True)
        lines = ["layer,peak_lag_ms,peak_r"]
        lines += [f"{int(l)},{float(lag)!r},{float(r)!r}" for l, lag, r in
                  zip(peaks.layer_indices, peaks.peak_lag_ms, peaks.peak_r)]
        (out / "peaks" / f"{roi}_{args.condition}.csv").write_text(
            "\n".join(lines) + "\n")
        print(f"{roi}/{args.condition}: encoded {len(ids)} electrodes, "
              f"{grid.shape[0]} layers x {grid.shape[1]} lags")
    return 0


def _cmd_stats_lag_layer(args) -> int:
    m = load_encoding(args.encodings, args.tag, args.condition)
    scaled = scale_encodings(m)
    keep = [int(np.flatnonzero(np.asarray(m.layer_indices) == i)[0])
            for i in scaled.layer_indices]
    peaks = peak_lags(type(m)(values=m.values[keep], lags_ms=m.lags_ms,
                              tag=m.tag, kind=m.kind, condition=m.condition,
                              layer_indices=scaled.layer_indices))
    res = lag_layer_correlation(peaks, n_perm=args.n_perm,
                                rng=rng_for(args.seed, STREAM_LAYER_PERM))
    payload = {
        "tag": args.tag, "condition": args.condition,
        "pearson_r": res.pearson_r, "spearman_r": res.spearman_r,
        "permutation_p": res.permutation_p, "n_perm": res.n_perm,
        "layer_indices": list(res.layer_indices),
        "peak_lags_ms": [float(v) for v in res.peak_lags],
    }
    _write_json(args.out, payload)
    return 0


def _cmd_stats_select(args) -> int:
    bundle = load_bundle(args.bundle)
    if args.static_set not in bundle.embedding_sets:
        raise StageError("select",
                         f"bundle has no embedding set {args.static_set!r}")
    cfg = _config_from(args)
    rec = _loaded_power_recording(bundle)
    report = select_electrodes(
        rec, bundle.onsets(), bundle.embedding_sets[args.static_set],
        cfg.lag_grid_ms(), window_ms=cfg.window_ms, n_folds=cfg.folds,
        n_components=cfg.pca_components, n_perm=args.n_perm,
        q_threshold=args.q, rng=rng_for(cfg.master_seed, STREAM_SELECT),
        electrode_ids=bundle.electrode_ids)
    payload = {
        "selected": list(report.selected_ids()),
        "n_perm": report.n_perm,
        "q_threshold": report.q_threshold,
        "electrodes": {
            e: {"max_r": float(r), "p": float(p), "q": float(q),
                "selected": bool(s)}
            for e, r, p, q, s in zip(report.electrode_ids,
                                     report.observed_max_r, report.p_values,
                                     report.q_values, report.selected)
        },
    }
    _write_json(args.out, payload)
    return 0


def _read_peak_rows(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _cmd_stats_lmm(args) -> int:
    rows = [(r["electrode"], float(r["layer"]), float(r["peak_lag_ms"]))
            for r in _read_peak_rows(args.peaks)]
    fit = fit_lmm(rows)
    payload = {
        "fixed_intercept": fit.fixed_intercept,
        "fixed_slope": fit.fixed_slope,
        "slope_std_error": fit.slope_std_error,
        "slope_p": fit.slope_p,
        "intercept_var": fit.intercept_var,
        "slope_var": fit.slope_var,
        "intercept_slope_cov": fit.intercept_slope_cov,
        "residual_var": fit.residual_var,
        "converged": fit.converged,
        "singular": fit.singular,
        "log_restricted_likelihood": fit.log_restricted_likelihood,
        "n_electrodes": fit.n_electrodes,
        "n_rows": fit.n_rows,
    }
    _write_json(args.out, payload)
    return 0


def _cmd_stats_levene(args) -> int:
    groups: dict[str, list[float]] = {}
    for r in _read_peak_rows(args.peaks):
        groups.setdefault(r[args.group_by], []).append(float(r["peak_lag_ms"]))
    names = sorted(groups)
    f_stat, p = levene_test([groups[n] for n in names])
    payload = {"F": f_stat, "p": p,
               "groups": {n: len(groups[n]) for n in names}}
    _write_json(args.out, payload)
    return 0


def _cmd_stats_ttest(args) -> int:
    def pivot(path):
        table: dict[str, dict[int, float]] = {}
        for r in _read_peak_rows(path):
            table.setdefault(r["electrode"], {})[int(float(r["layer"]))] = \
                float(r["peak_lag_ms"])
        return table

    t_pred, t_unpred = pivot(args.pred), pivot(args.unpred)
    electrodes = sorted(set(t_pred) & set(t_unpred))
    if not electrodes:
        raise StageError("ttest", "no shared electrodes between conditions")
    layers = sorted(set.intersection(
        *[set(t_pred[e]) for e in electrodes],
        *[set(t_unpred[e]) for e in electrodes]))
    a = np.array([[t_pred[e][l] for l in layers] for e in electrodes])
    b = np.array([[t_unpred[e][l] for l in layers] for e in electrodes])
    res = paired_ttest_layers(a, b, layer_indices=layers)
    payload = {
        "layers": [
            {"layer": int(l), "t": float(t), "p": float(p), "q": float(q),
             "mean_difference_ms": float(d)}
            for l, t, p, q, d in zip(res.layer_indices, res.t_stats,
                                     res.p_values, res.q_values,
                                     res.mean_difference)
        ],
        "n_electrodes": len(electrodes),
    }
    _write_json(args.out, payload)
    return 0


def _cmd_control_interpolate(args) -> int:
    bundle = load_bundle(args.bundle)
    cfg = _config_from(args)
    report = run_interpolation_control(
        bundle, args.roi, cfg, condition=args.condition, n_iter=args.iters,
        master_seed=cfg.master_seed)
    payload = {
        "roi": report.roi, "condition": report.condition,
        "observed_r": report.observed_r, "p_value": report.p_value,
        "n_iter": report.n_iter,
        "null_r_quantiles": {
            "p05": float(np.quantile(report.null_r, 0.05)),
            "p50": float(np.quantile(report.null_r, 0.50)),
            "p95": float(np.quantile(report.null_r, 0.95)),
        },
    }
    _write_json(args.out, payload)
    return 0


def _cmd_control_project_out(args) -> int:
    bundle = load_bundle(args.bundle)
    cfg = _config_from(args)
    report = run_projection_control(bundle, args.roi, cfg,
                                    condition=args.condition,
                                    master_seed=cfg.master_seed)
    res = report.remaining_lag_layer
    payload = {
        "roi": args.roi, "condition": args.condition,
        "max_layer": report.max_layer,
        "max_layer_peak_before": report.max_layer_peak_before,
        "residual_peak_r": None if np.isnan(report.residual_peak_r)
        else report.residual_peak_r,
        "null_ceiling": report.null_ceiling,
        "below_ceiling": report.below_ceiling,
        "remaining_pearson_r": res.pearson_r,
        "remaining_permutation_p": res.permutation_p,
    }
    _write_json(args.out, payload)
    return 0


def _cmd_synth(args) -> int:
    with open(args.spec) as fh:
        raw = json.load(fh)
    rois = {name: RoiPlan(**plan) for name, plan in raw.pop("rois").items()}
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = SynthSpec(rois=rois, **raw)
    synth_generate(spec, args.out)
    print(f"synthetic bundle written to {args.out} "
          f"({spec.n_electrodes} electrodes, {spec.n_words} words, "
          f"{spec.n_layers} layers)")
    return 0


def _cmd_plot(args) -> int:
    spec = PlotSpec(kind=args.kind, title=args.title or "",
                    out_path=args.out)
    tags = args.tag
    if args.kind == "roi_panel":
        data = [load_encoding(args.encodings, t, args.condition) for t in tags]
    else:
        m = load_encoding(args.encodings, tags[0], args.condition)
        if args.kind == "scaled_encoding":
            data = scale_encodings(m)
        elif args.kind == "lag_layer_scatter":
            data = peak_lags(m)
        elif args.kind == "layer_bar":
            peak = np.nanmax(np.where(np.isnan(m.values), -np.inf, m.values),
                             axis=1)
            data = (list(int(v) for v in m.layer_indices), peak)
        else:
            data = m
    render(spec, data)
    print(f"wrote {args.out}")
    return 0


def _cmd_run(args) -> int:
    cfg = _config_from(args)
    conditions = tuple(args.conditions.split(",")) if args.conditions else \
        ("predictable", "unpredictable", "all")
    report = run_pipeline(cfg, args.bundle, args.out,
                          embedding_set=args.set, conditions=conditions,
                          select_set=args.select_set,
                          select_n_perm=args.select_n_perm,
                          write_plots=not args.no_plots)
    for condition, entry in report["conditions"].items():
        for roi, res in entry.get("rois", {}).items():
            r = res["pearson_r"]
            p = res["permutation_p"]
            r_txt = "nan" if r is None else f"{r:.3f}"
            p_txt = "nan" if p is None else f"{p:.2e}"
            print(f"{condition}/{roi}: lag-layer r={r_txt} p={p_txt}")
    print(f"report written to {Path(args.out) / 'report.json'}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p, seed=True, threads=False, config=False):
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (default: config value)")
    if threads:
        p.add_argument("--threads", type=int, default=_env_threads(),
                       help="worker threads (default: $LAGCODER_THREADS or 1)")
    if config:
        p.add_argument("--config", help="JSON config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lagcoder",
        description="Lagged linear encoding of layered embeddings "
                    "against electrode band power.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="raw signals to band-power envelopes")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kernel-ms", type=float, default=50.0, dest="kernel_ms")
    p.add_argument("--no-despike", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("reduce", help="add a dimensionality-reduced embedding set")
    p.add_argument("--bundle", required=True)
    p.add_argument("--set", default="contextual")
    p.add_argument("--components", type=int, default=50)
    p.add_argument("--name", default=None)
    p.set_defaults(func=_cmd_reduce)

    p = sub.add_parser("encode", help="cross-validated encoding over the lag grid")
    p.add_argument("--bundle", required=True)
    p.add_argument("--condition", default="all",
                   choices=["predictable", "unpredictable", "all"])
    p.add_argument("--roi", default="all")
    p.add_argument("--out", required=True)
    p.add_argument("--set", default="contextual")
    p.add_argument("--window-ms", type=float, default=None, dest="window_ms")
    p.add_argument("--components", type=int, default=None)
    p.add_argument("--pca-mode", default=None, dest="pca_mode",
                   choices=["full", "train_only"])
    p.add_argument("--folds", type=int, default=None)
    _add_common(p, threads=True, config=True)
    p.set_defaults(func=_cmd_encode)

    p_stats = sub.add_parser("stats", help="statistics suite")
    stats_sub = p_stats.add_subparsers(dest="stats_command", required=True)

    p = stats_sub.add_parser("lag-layer", help="layer index vs peak lag")
    p.add_argument("--encodings", required=True)
    p.add_argument("--tag", required=True, help="roi or electrode id")
    p.add_argument("--condition", default="all")
    p.add_argument("--n-perm", type=int, default=100000, dest="n_perm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stats_lag_layer)

    p = stats_sub.add_parser("select", help="surrogate-null electrode selection")
    p.add_argument("--bundle", required=True)
    p.add_argument("--static-set", default="static", dest="static_set")
    p.add_argument("--n-perm", type=int, default=5000, dest="n_perm")
    p.add_argument("--q", type=float, default=0.01)
    p.add_argument("--out", default=None)
    _add_common(p, config=True)
    p.set_defaults(func=_cmd_stats_select)

    p = stats_sub.add_parser("lmm", help="mixed model: peak_lag ~ layer")
    p.add_argument("--peaks", required=True,
                   help="csv with electrode,layer,peak_lag_ms")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stats_lmm)

    p = stats_sub.add_parser("levene", help="spread comparison across groups")
    p.add_argument("--peaks", required=True,
                   help="csv with <group-by>,peak_lag_ms columns")
    p.add_argument("--group-by", default="roi", dest="group_by")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stats_levene)

    p = stats_sub.add_parser("ttest", help="paired per-layer condition contrast")
    p.add_argument("--pred", required=True)
    p.add_argument("--unpred", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stats_ttest)

    p_ctrl = sub.add_parser("control", help="control analyses")
    ctrl_sub = p_ctrl.add_subparsers(dest="control_command", required=True)

    p = ctrl_sub.add_parser("interpolate", help="pseudo-layer null")
    p.add_argument("--bundle", required=True)
    p.add_argument("--roi", required=True)
    p.add_argument("--condition", default="all")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--out", default=None)
    _add_common(p, config=True)
    p.set_defaults(func=_cmd_control_interpolate)

    p = ctrl_sub.add_parser("project-out", help="remove the max layer and re-encode")
    p.add_argument("--bundle", required=True)
    p.add_argument("--roi", required=True)
    p.add_argument("--condition", default="all")
    p.add_argument("--out", default=None)
    _add_common(p, config=True)
    p.set_defaults(func=_cmd_control_project_out)

    p = sub.add_parser("synth", help="generate a planted synthetic bundle")
    p.add_argument("--spec", required=True, help="JSON synthesis spec")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("plot", help="render an SVG figure from saved encodings")
    p.add_argument("--encodings", required=True)
    p.add_argument("--tag", action="append", required=True,
                   help="roi or electrode id (repeat for roi_panel)")
    p.add_argument("--condition", default="all")
    p.add_argument("--kind", default="encoding_lines", choices=list(KINDS))
    p.add_argument("--title", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("run", help="full pipeline: preprocess to report")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--set", default="contextual")
    p.add_argument("--conditions", default=None,
                   help="comma-separated subset of predictable,unpredictable,all")
    p.add_argument("--select-set", default=None, dest="select_set",
                   help="embedding set for electrode selection")
    p.add_argument("--select-n-perm", type=int, default=None,
                   dest="select_n_perm")
    p.add_argument("--no-plots", action="store_true")
    _add_common(p, threads=True, config=True)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except LagcoderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
