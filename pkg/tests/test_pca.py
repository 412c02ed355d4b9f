import numpy as np
import pytest

from orthoaudit.design import ProtectedRecord, encode_design
from orthoaudit.errors import EmptyGroupWarning, InvalidInput, ZeroVariance
from orthoaudit.linalg import EmbeddingMatrix, orthogonalize
from orthoaudit.pca import group_marginals, pca_fit, pca_transform


def test_line_through_origin():
    t = np.linspace(-2, 2, 41)
    e = np.column_stack([t, t])
    model = pca_fit(e, k=1)
    np.testing.assert_allclose(np.abs(model.components[0]), [1 / np.sqrt(2)] * 2, atol=1e-12)
    assert model.components[0, 0] > 0  # sign convention
    assert model.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-12)


def test_three_point_segment():
    e = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    model = pca_fit(e, k=1)
    np.testing.assert_allclose(model.mean, [1.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(model.components[0], [1.0, 0.0], atol=1e-12)
    assert model.explained_variance_ratio[0] == pytest.approx(1.0)


def test_isotropic_cloud_flat_spectrum():
    rng = np.random.default_rng(0)
    e = rng.standard_normal((20000, 3))
    model = pca_fit(e, k=3)
    ratios = model.explained_variance_ratio
    assert np.all(np.abs(ratios - 1.0 / 3.0) < 0.05)
    assert ratios[0] >= ratios[1] >= ratios[2]


def test_scores_centered_and_decorrelated():
    rng = np.random.default_rng(1)
    e = rng.standard_normal((500, 6)) @ rng.standard_normal((6, 6))
    model = pca_fit(e, k=3)
    scores = pca_transform(model, e)
    np.testing.assert_allclose(scores.mean(axis=0), 0.0, atol=1e-10)
    corr = np.corrcoef(scores, rowvar=False)
    off_diag = corr - np.diag(np.diag(corr))
    assert np.max(np.abs(off_diag)) < 1e-6


def test_mean_row_maps_to_origin():
    rng = np.random.default_rng(2)
    e = rng.standard_normal((100, 4))
    model = pca_fit(e, k=2)
    out = pca_transform(model, e.mean(axis=0, keepdims=True))
    np.testing.assert_allclose(out, 0.0, atol=1e-10)


def test_full_rank_reconstruction():
    rng = np.random.default_rng(3)
    e = rng.standard_normal((40, 5))
    model = pca_fit(e, k=5)
    scores = pca_transform(model, e)
    rebuilt = scores @ model.components + model.mean
    rel = np.linalg.norm(rebuilt - e) / np.linalg.norm(e)
    assert rel < 1e-6


def test_component_rows_orthonormal():
    rng = np.random.default_rng(4)
    e = rng.standard_normal((200, 8))
    model = pca_fit(e, k=4)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(4), atol=1e-8)
    for row in model.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_embedding_matrix_accepted():
    rng = np.random.default_rng(5)
    emb = EmbeddingMatrix.from_array(rng.standard_normal((50, 4)))
    model = pca_fit(emb, k=2)
    scores = pca_transform(model, emb)
    assert scores.shape == (50, 2)


def test_power_iteration_path_recovers_planted_directions():
    # d > 512 switches to the iterative solver
    rng = np.random.default_rng(6)
    n, d = 400, 600
    basis, _ = np.linalg.qr(rng.standard_normal((d, 2)))
    scores = np.column_stack([3.0 * rng.standard_normal(n), 1.5 * rng.standard_normal(n)])
    e = scores @ basis.T + 0.01 * rng.standard_normal((n, d))
    model = pca_fit(e, k=2)
    for i in range(2):
        overlap = abs(model.components[i] @ basis[:, i])
        assert overlap > 0.999
    assert model.explained_variance_ratio[0] > model.explained_variance_ratio[1]
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(2), atol=1e-8)


def test_dense_and_power_paths_agree():
    from orthoaudit import pca as pca_mod

    rng = np.random.default_rng(7)
    e = rng.standard_normal((150, 20)) * np.linspace(1.0, 3.0, 20)
    dense = pca_fit(e, k=3)
    original = pca_mod._DENSE_MAX_D
    pca_mod._DENSE_MAX_D = 1  # force the iterative path
    try:
        power = pca_fit(e, k=3)
    finally:
        pca_mod._DENSE_MAX_D = original
    np.testing.assert_allclose(dense.components, power.components, atol=1e-6)
    np.testing.assert_allclose(
        dense.explained_variance_ratio, power.explained_variance_ratio, atol=1e-8
    )


def test_pca_input_validation():
    rng = np.random.default_rng(8)
    e = rng.standard_normal((10, 3))
    with pytest.raises(InvalidInput):
        pca_fit(e, k=0)
    with pytest.raises(InvalidInput):
        pca_fit(e, k=4)
    with pytest.raises(InvalidInput):
        pca_fit(e[:1], k=1)
    with pytest.raises(ZeroVariance):
        pca_fit(np.ones((5, 3)), k=1)


# ---------------------------------------------------------------------------
# group marginals


def test_identical_groups_identical_marginals():
    rng = np.random.default_rng(9)
    scores = rng.standard_normal((200, 2))
    half = np.concatenate([scores, scores])
    groups = ["a"] * 200 + ["b"] * 200
    report = group_marginals(half, groups)
    rows = {(r.group, r.component): r for r in report.rows}
    for c in range(2):
        ra, rb = rows[("a", c)], rows[("b", c)]
        assert ra.mean == rb.mean and ra.std == rb.std
        assert np.array_equal(ra.counts, rb.counts)


def test_planted_group_shift_visible():
    rng = np.random.default_rng(10)
    a = rng.standard_normal((300, 1))
    b = rng.standard_normal((300, 1)) + 2.0
    scores = np.concatenate([a, b])
    groups = ["a"] * 300 + ["b"] * 300
    report = group_marginals(scores, groups)
    rows = {r.group: r for r in report.rows}
    assert rows["b"].mean - rows["a"].mean == pytest.approx(2.0, abs=0.3)
    assert len(report.edges[0]) == 65  # 64 bins share one edge grid


def test_marginal_counts_partition_group():
    rng = np.random.default_rng(11)
    scores = rng.standard_normal((120, 1))
    groups = np.where(np.arange(120) % 3 == 0, "x", "y")
    report = group_marginals(scores, groups, bins=16)
    for row in report.rows:
        assert sum(row.counts) == row.n
        assert len(row.counts) == 16


def test_declared_empty_category_warns_and_skips():
    scores = np.zeros((4, 1)) + np.arange(4).reshape(-1, 1)
    with pytest.warns(EmptyGroupWarning):
        report = group_marginals(scores, ["a"] * 4, categories=("a", "ghost"))
    assert {r.group for r in report.rows} == {"a"}


def test_marginal_means_coincide_after_sex_orthogonalization():
    rng = np.random.default_rng(12)
    n = 300
    sexes = np.where(rng.random(n) < 0.5, "Male", "Female")
    records = [
        ProtectedRecord(f"r{i}", float(rng.integers(20, 90)), s, "White")
        for i, s in enumerate(sexes)
    ]
    x = encode_design(records)
    raw = rng.standard_normal((n, 10))
    raw[sexes == "Female"] += 1.5  # sex signal in every coordinate
    emb = EmbeddingMatrix(tuple(r.rid for r in records), raw)
    corrected = orthogonalize(emb, x)
    model = pca_fit(corrected.data, k=2)
    scores = pca_transform(model, corrected.data)
    report = group_marginals(scores, sexes)
    rows = {(r.group, r.component): r for r in report.rows}
    for c in range(2):
        assert abs(rows[("Male", c)].mean - rows[("Female", c)].mean) < 1e-8
