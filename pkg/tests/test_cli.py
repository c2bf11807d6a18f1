"""Command-line entry point: exit codes, artifacts, error reporting."""

import json

import pytest

from lagcoder.cli import main

SPEC = {
    "rois": {"IFG": {"n_electrodes": 2, "lag_slope_ms": 6.0,
                     "lag_intercept_ms": 100.0},
             "TP": {"n_electrodes": 2, "lag_slope_ms": 8.0,
                    "lag_intercept_ms": 150.0}},
    "n_words": 120,
    "n_layers": 6,
    "embedding_dim": 32,
    "word_spacing_s": 0.3,
    "jitter_s": 0.03,
    "seed": 7,
}

FAST = {"lag_min_ms": -600.0, "lag_max_ms": 600.0, "lag_step_ms": 50.0,
        "pca_components": 10, "folds": 5, "n_perm_layers": 200,
        "rois": ["IFG", "TP"]}


@pytest.fixture
def bundle(tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(SPEC))
    out = tmp_path / "bundle"
    assert main(["synth", "--spec", str(spec_path), "--out", str(out)]) == 0
    return out


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(FAST))
    return path


def test_synth_writes_bundle(bundle):
    assert (bundle / "manifest.json").exists()
    assert (bundle / "ground_truth.json").exists()


def test_run_produces_report(bundle, cfg_file, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["run", "--bundle", str(bundle), "--out", str(out),
               "--conditions", "all", "--no-plots",
               "--config", str(cfg_file)])
    assert rc == 0
    assert "all/IFG" in capsys.readouterr().out
    report = json.loads((out / "report.json").read_text())
    assert "IFG" in report["conditions"]["all"]["rois"]


def test_preprocess_refuses_power_bundles(bundle, tmp_path, capsys):
    rc = main(["preprocess", "--bundle", str(bundle),
               "--out", str(tmp_path / "pre")])
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("[preprocess]")
    assert "--force" in err
    rc = main(["preprocess", "--bundle", str(bundle),
               "--out", str(tmp_path / "pre"), "--force"])
    assert rc == 0
    assert (tmp_path / "pre" / "manifest.json").exists()


def test_reduce_adds_embedding_set(bundle, capsys):
    rc = main(["reduce", "--bundle", str(bundle), "--components", "5",
               "--name", "ctx5"])
    assert rc == 0
    manifest = json.loads((bundle / "manifest.json").read_text())
    entry = {e["name"]: e for e in manifest["embedding_sets"]}["ctx5"]
    assert entry["dim"] == 5
    layers = list((bundle / "embeddings" / "ctx5").glob("*.f32"))
    assert len(layers) == 6


def test_encode_then_stats_and_plot(bundle, cfg_file, tmp_path, capsys):
    enc = tmp_path / "enc"
    rc = main(["encode", "--bundle", str(bundle), "--out", str(enc),
               "--roi", "IFG", "--config", str(cfg_file)])
    assert rc == 0
    assert (enc / "encodings" / "IFG_all.f32").exists()
    assert (enc / "peaks" / "electrodes_all.csv").exists()
    capsys.readouterr()

    rc = main(["stats", "lag-layer", "--encodings", str(enc / "encodings"),
               "--tag", "IFG", "--n-perm", "500"])
    assert rc == 0
    result = json.loads(capsys.readouterr().out)
    assert set(result) >= {"pearson_r", "spearman_r", "permutation_p"}
    assert -1.0 <= result["pearson_r"] <= 1.0

    svg = tmp_path / "fig.svg"
    rc = main(["plot", "--encodings", str(enc / "encodings"), "--tag", "IFG",
               "--kind", "encoding_lines", "--out", str(svg)])
    assert rc == 0
    assert svg.read_text().startswith("<?xml")


def test_electrode_level_stats_commands(bundle, cfg_file, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--bundle", str(bundle), "--out", str(out), "--no-plots",
          "--config", str(cfg_file)])
    capsys.readouterr()
    peaks = out / "peaks"

    rc = main(["stats", "lmm", "--peaks", str(peaks / "electrodes_all.csv")])
    assert rc == 0
    fit = json.loads(capsys.readouterr().out)
    assert "fixed_slope" in fit and "slope_p" in fit
    assert fit["n_electrodes"] == 4

    rc = main(["stats", "levene", "--peaks",
               str(peaks / "electrodes_all.csv")])
    assert rc == 0
    res = json.loads(capsys.readouterr().out)
    assert res["groups"] == {"IFG": 12, "TP": 12}
    assert 0.0 <= res["p"] <= 1.0

    rc = main(["stats", "ttest",
               "--pred", str(peaks / "electrodes_predictable.csv"),
               "--unpred", str(peaks / "electrodes_unpredictable.csv")])
    assert rc == 0
    res = json.loads(capsys.readouterr().out)
    assert len(res["layers"]) == 6
    assert res["n_electrodes"] == 4


def test_control_interpolate_cli(bundle, cfg_file, tmp_path, capsys):
    rc = main(["control", "interpolate", "--bundle", str(bundle),
               "--roi", "IFG", "--iters", "3", "--config", str(cfg_file)])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_iter"] == 3
    assert 0.0 < report["p_value"] <= 1.0


def test_missing_bundle_reports_error(tmp_path, capsys):
    rc = main(["run", "--bundle", str(tmp_path / "nowhere"),
               "--out", str(tmp_path / "out")])
    assert rc == 2
    assert capsys.readouterr().err != ""


def test_unknown_roi_is_a_stage_error(bundle, cfg_file, tmp_path, capsys):
    rc = main(["encode", "--bundle", str(bundle), "--out", str(tmp_path / "e"),
               "--roi", "mSTG", "--config", str(cfg_file)])
    assert rc == 2
    assert "mSTG" in capsys.readouterr().err
