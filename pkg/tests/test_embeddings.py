"""Dimensionality reduction, layer projection, and pseudo-layer pools."""

import numpy as np
import pytest

from lagcoder import (EmbeddingSet, PseudoLayerPool, ShapeMismatch,
                      interpolate_pseudo_layers, pca_fit, project_out_layer,
                      reduce_layers, sample_pseudo_set)
from lagcoder.types import contiguous_folds


def test_pca_planar_data_has_rank_two():
    """Points confined to a 2-D plane leave no variance beyond component 2."""
    rng = np.random.default_rng(0)
    basis = rng.standard_normal((2, 10))
    coords = rng.standard_normal((200, 2))
    data = coords @ basis + rng.standard_normal(10)
    model = pca_fit(data, 5)
    assert model.rank == 2
    assert model.rank_deficient
    assert np.all(model.explained_variance[2:] < 1e-9)


def test_pca_full_rank_reconstruction():
    rng = np.random.default_rng(1)
    data = rng.standard_normal((60, 8))
    model = pca_fit(data, 8)
    recon = model.transform(data) @ model.components + model.mean
    np.testing.assert_allclose(recon, data, atol=1e-6)


def test_pca_components_orthonormal_variance_sorted():
    rng = np.random.default_rng(2)
    model = pca_fit(rng.standard_normal((500, 80)), 40)
    gram = model.components @ model.components.T
    np.testing.assert_allclose(gram, np.eye(40), atol=1e-6)
    assert np.all(np.diff(model.explained_variance) <= 1e-12)


def test_pca_sign_convention_deterministic():
    """Largest-magnitude loading positive: refit on negated data matches."""
    rng = np.random.default_rng(3)
    data = rng.standard_normal((100, 6))
    a = pca_fit(data, 3)
    b = pca_fit(data.copy(), 3)
    np.testing.assert_array_equal(a.components, b.components)
    for row in a.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_pca_rejects_too_few_rows():
    with pytest.raises(ShapeMismatch):
        pca_fit(np.zeros((3, 10)), 3)


def test_reduce_layers_full_mode_shapes():
    rng = np.random.default_rng(4)
    layers = [rng.standard_normal((80, 30)).astype(np.float32) for _ in range(4)]
    es = EmbeddingSet("contextual", "contextual", layers)
    red = reduce_layers(es, contiguous_folds(80, 10), "full", 12)
    assert red.layer_count == 4
    for k in range(4):
        assert red.matrix(k).shape == (80, 12)


def test_reduce_layers_identical_layers_identical_outputs():
    rng = np.random.default_rng(5)
    layer = rng.standard_normal((50, 20)).astype(np.float32)
    es = EmbeddingSet("contextual", "contextual", [layer, layer.copy()])
    red = reduce_layers(es, contiguous_folds(50, 5), "full", 8)
    np.testing.assert_array_equal(red.matrix(0), red.matrix(1))


def test_reduce_layers_train_only_requires_fold():
    rng = np.random.default_rng(6)
    es = EmbeddingSet("contextual", "contextual",
                      [rng.standard_normal((50, 10)).astype(np.float32)])
    red = reduce_layers(es, contiguous_folds(50, 5), "train_only", 4)
    with pytest.raises(ShapeMismatch):
        red.matrix(0)
    assert red.matrix(0, fold=2).shape == (50, 4)


def test_reduce_layers_train_only_ignores_test_rows():
    """Perturbing a held-out row must not move that fold's projection."""
    rng = np.random.default_rng(7)
    base = rng.standard_normal((40, 10)).astype(np.float32)
    folds = contiguous_folds(40, 4)
    bumped = base.copy()
    test_rows = np.flatnonzero(folds.fold_of_word == 0)
    bumped[test_rows[0]] += 50.0
    red_a = reduce_layers(EmbeddingSet("c", "contextual", [base]), folds,
                          "train_only", 4)
    red_b = reduce_layers(EmbeddingSet("c", "contextual", [bumped]), folds,
                          "train_only", 4)
    train_rows = np.flatnonzero(folds.fold_of_word != 0)
    np.testing.assert_allclose(red_a.matrix(0, fold=0)[train_rows],
                               red_b.matrix(0, fold=0)[train_rows], atol=1e-9)


def test_materialized_reduction_round_trips():
    rng = np.random.default_rng(8)
    es = EmbeddingSet("contextual", "contextual",
                      [rng.standard_normal((30, 9)).astype(np.float32)
                       for _ in range(2)])
    red = reduce_layers(es, contiguous_folds(30, 5), "full", 6)
    stored = red.to_embedding_set("contextual_pca6")
    assert stored.kind == "reduced"
    assert stored.layer_count == 2
    np.testing.assert_allclose(stored.layers[1], red.matrix(1), atol=1e-6)


def test_project_out_reference_layer_zeroed():
    rng = np.random.default_rng(9)
    layers = [rng.standard_normal((25, 7)).astype(np.float32) for _ in range(3)]
    es = EmbeddingSet("contextual", "contextual", layers)
    out, zero_norm = project_out_layer(es, 1)
    assert np.linalg.norm(out.layers[1], axis=1).max() < 1e-9
    assert not zero_norm.any()
    assert out.name.endswith("minus_layer2")


def test_project_out_orthogonal_rows_unchanged():
    ref = np.zeros((4, 3), dtype=np.float32)
    ref[:, 0] = 1.0
    other = np.zeros((4, 3), dtype=np.float32)
    other[:, 1] = 2.0
    es = EmbeddingSet("c", "contextual", [ref, other])
    out, _ = project_out_layer(es, 0)
    np.testing.assert_allclose(out.layers[1], other, atol=1e-9)


def test_project_out_parallel_rows_vanish():
    ref = np.ones((4, 3), dtype=np.float32)
    es = EmbeddingSet("c", "contextual", [ref, 3.0 * ref])
    out, _ = project_out_layer(es, 0)
    np.testing.assert_allclose(out.layers[1], 0.0, atol=1e-6)


def test_project_out_residual_orthogonality():
    rng = np.random.default_rng(10)
    layers = [rng.standard_normal((30, 12)).astype(np.float32) for _ in range(4)]
    es = EmbeddingSet("c", "contextual", layers)
    out, _ = project_out_layer(es, 2)
    unit = layers[2] / np.linalg.norm(layers[2], axis=1, keepdims=True)
    for k in range(4):
        dots = np.einsum("wd,wd->w", out.layers[k].astype(np.float64), unit)
        assert np.abs(dots).max() < 1e-5  # float32 storage bounds the residue


def test_project_out_zero_norm_rows_flagged():
    ref = np.ones((3, 2), dtype=np.float32)
    ref[1] = 0.0
    other = np.full((3, 2), 2.0, dtype=np.float32)
    es = EmbeddingSet("c", "contextual", [ref, other])
    out, zero_norm = project_out_layer(es, 0)
    np.testing.assert_array_equal(zero_norm, [False, True, False])
    np.testing.assert_allclose(out.layers[1][1], other[1])


def test_pseudo_pool_midpoint_and_ordering():
    first = np.zeros((5, 3))
    last = np.ones((5, 3))
    pool = PseudoLayerPool(first, last, grid_size=999)
    mid = pool.layer(499)  # alpha = 500/1000
    np.testing.assert_allclose(mid, 0.5, atol=1e-12)
    assert np.all(np.diff(pool.alphas) > 0)
    assert len(pool) == 999


def test_pseudo_pool_equal_endpoints():
    first = np.full((4, 2), 3.0)
    pool = interpolate_pseudo_layers(first, first.copy(), grid_size=10)
    for i in range(len(pool)):
        np.testing.assert_allclose(pool.layer(i), first, atol=1e-12)


def test_sample_pseudo_set_deterministic_and_bounded():
    rng_a = np.random.default_rng(11)
    rng_b = np.random.default_rng(11)
    first = np.random.default_rng(12).standard_normal((20, 4))
    last = np.random.default_rng(13).standard_normal((20, 4))
    pool = interpolate_pseudo_layers(first, last, grid_size=100)
    set_a, alphas_a = sample_pseudo_set(pool, k=6, rng=rng_a, name="p")
    set_b, alphas_b = sample_pseudo_set(pool, k=6, rng=rng_b, name="p")
    np.testing.assert_array_equal(alphas_a, alphas_b)
    for la, lb in zip(set_a.layers, set_b.layers):
        np.testing.assert_array_equal(la, lb)
    assert set_a.kind == "pseudo"
    assert set_a.layer_count == 8  # endpoints plus k interior draws
    assert alphas_a[0] == 0.0 and alphas_a[-1] == 1.0
    assert np.all(np.diff(alphas_a) > 0)
    np.testing.assert_allclose(set_a.layers[0], first, atol=1e-12)
    np.testing.assert_allclose(set_a.layers[-1], last, atol=1e-12)


def test_sample_pseudo_set_full_pool_is_everything():
    first = np.zeros((6, 2))
    last = np.ones((6, 2))
    pool = interpolate_pseudo_layers(first, last, grid_size=5)
    out, alphas = sample_pseudo_set(pool, k=5, rng=np.random.default_rng(0))
    assert out.layer_count == 7
    np.testing.assert_allclose(alphas[1:-1], pool.alphas, atol=1e-12)
