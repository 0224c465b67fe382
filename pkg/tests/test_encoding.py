import time

import numpy as np
import pytest

from src.analytics import encoding
from src.analytics.encoding import (Codebook, PcaModel, VladConfig, hard_assign_vlad,
                                    kmeans_fit, l2_normalize, normalize_chain, pca_fit,
                                    pca_transform, soft_assign, vlad_dim, vlad_encode)
from src.utils import InvalidArgumentError, NumericalError


def brute_force_hard_vlad(centers, patches):
    """Classic VLAD written out with explicit loops."""
    k, d = centers.shape
    out = np.zeros((k, d))
    for p in patches:
        best, best_d2 = 0, None
        for i in range(k):
            d2 = sum((p[j] - centers[i, j]) ** 2 for j in range(d))
            if best_d2 is None or d2 < best_d2:
                best, best_d2 = i, d2
        out[best] += p - centers[best]
    return out.ravel()


# ============================================================
# VLAD
# ============================================================

def test_soft_vlad_with_one_neighbour_matches_hard_vlad():
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    for _ in range(200):
        d = int(rng.integers(1, 9))
        k = int(rng.integers(1, 6))
        n = int(rng.integers(1, 21))
        centers = rng.normal(size=(k, d))
        patches = rng.normal(size=(n, d))
        book = Codebook(centers=centers)
        cfg = VladConfig(r=1, sigma=float(rng.uniform(0.1, 20.0)))
        soft = vlad_encode(cfg, book, patches)
        assert np.max(np.abs(soft - brute_force_hard_vlad(centers, patches))) < 1e-12
        assert np.max(np.abs(soft - hard_assign_vlad(book, patches))) < 1e-12
    assert time.perf_counter() - start < 5.0


def test_vlad_is_orderless():
    rng = np.random.default_rng(1)
    for _ in range(50):
        d, k = int(rng.integers(1, 9)), int(rng.integers(2, 6))
        n = int(rng.integers(2, 21))
        book = Codebook(centers=rng.normal(size=(k, d)))
        patches = rng.normal(size=(n, d))
        cfg = VladConfig(r=int(rng.integers(1, k + 1)), sigma=1.0)
        a = vlad_encode(cfg, book, patches)
        b = vlad_encode(cfg, book, patches[rng.permutation(n)])
        assert np.max(np.abs(a - b)) < 1e-10


def test_vlad_hand_examples():
    one = Codebook(centers=np.zeros((1, 2)))
    assert vlad_encode(VladConfig(r=1), one, [[3.0, 4.0]]).tolist() == [3.0, 4.0]

    two = Codebook(centers=np.array([[0.0, 0.0], [10.0, 0.0]]))
    hard = vlad_encode(VladConfig(r=1), two, [[1.0, 0.0], [9.0, 0.0]])
    assert hard.tolist() == [1.0, 0.0, -1.0, 0.0]

    soft = vlad_encode(VladConfig(r=2, sigma=10.0), two, [[1.0, 0.0]])
    assert soft[0] == pytest.approx(0.598687, abs=1e-5)
    assert soft[1] == 0.0
    assert soft[2] == pytest.approx(-9 * (1 - 0.598687), abs=1e-5)
    assert soft[3] == 0.0
    assert vlad_dim(100, 500) == 50_000


def test_soft_assign_weights():
    book = Codebook(centers=np.array([[0.0, 0.0], [10.0, 0.0]]))
    pairs = soft_assign(VladConfig(r=2, sigma=10.0), book, [1.0, 0.0])
    assert [i for i, _ in pairs] == [0, 1]
    a, b = np.exp(-1 / 200), np.exp(-81 / 200)
    assert pairs[0][1] == pytest.approx(a / (a + b), abs=1e-12)
    assert pairs[0][1] == pytest.approx(0.598687, abs=1e-6)
    assert pairs[1][1] == pytest.approx(0.401313, abs=1e-6)

    single = soft_assign(VladConfig(r=1, sigma=0.001), book, [6.0, 0.0])
    assert single == [(1, 1.0)]


def test_soft_assign_ties_go_to_lower_index():
    centers = np.array([[5.0, 5.0], [9.0, 9.0], [-1.0, 0.0], [8.0, 8.0], [7.0, 7.0], [1.0, 0.0]])
    pairs = soft_assign(VladConfig(r=1), Codebook(centers=centers), [0.0, 0.0])
    assert pairs == [(2, 1.0)]


def test_soft_assign_underflow_falls_back_to_uniform():
    book = Codebook(centers=np.array([[1000.0], [1001.0]]))
    pairs = soft_assign(VladConfig(r=2, sigma=0.01), book, [0.0])
    assert [w for _, w in pairs] == [0.5, 0.5]


def test_vlad_input_checks():
    book = Codebook(centers=np.zeros((2, 3)))
    with pytest.raises(InvalidArgumentError):
        vlad_encode(VladConfig(r=1), book, np.zeros((0, 3)))
    with pytest.raises(InvalidArgumentError):
        vlad_encode(VladConfig(r=1), book, np.zeros((4, 2)))
    with pytest.raises(InvalidArgumentError):
        vlad_encode(VladConfig(r=3), book, np.zeros((4, 3)))
    with pytest.raises(InvalidArgumentError):
        VladConfig(power_alpha=0.0)


# ============================================================
# Normalization
# ============================================================

def test_normalize_chain():
    out = normalize_chain([4.0, -9.0, 0.0], 0.5)
    assert out == pytest.approx([2 / np.sqrt(13), -3 / np.sqrt(13), 0.0], abs=1e-12)
    unit = np.array([0.6, 0.0, -0.8])
    assert normalize_chain(unit, 1.0) == pytest.approx(unit, abs=1e-15)
    assert normalize_chain(np.zeros(4), 0.5).tolist() == [0.0] * 4
    assert l2_normalize(np.zeros(3)).tolist() == [0.0] * 3


# ============================================================
# k-means
# ============================================================

def test_kmeans_hand_instance():
    book = kmeans_fit(np.array([[0.0], [1.0], [10.0], [11.0]]), k=2, seed=3)
    assert sorted(book.centers[:, 0].tolist()) == [0.5, 10.5]
    assert book.inertia == pytest.approx(1.0)


def test_kmeans_with_as_many_points_as_centers():
    points = np.array([[0.0, 1.0], [4.0, 4.0], [-3.0, 2.0]])
    book = kmeans_fit(points, k=3, seed=0)
    assert book.inertia == 0.0
    assert sorted(map(tuple, book.centers.tolist())) == sorted(map(tuple, points.tolist()))


def test_kmeans_inertia_never_increases():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    for trial in range(100):
        n, d, k = int(rng.integers(10, 60)), int(rng.integers(1, 6)), int(rng.integers(1, 8))
        book = kmeans_fit(rng.normal(size=(n, d)), k=k, seed=trial, max_iters=50)
        history = np.array(book.inertia_history)
        assert np.all(history[1:] <= history[:-1] * (1 + 1e-12) + 1e-12)
    assert time.perf_counter() - start < 5.0


def test_kmeans_is_deterministic():
    data = np.random.default_rng(4).normal(size=(80, 3))
    a = kmeans_fit(data, k=5, seed=11)
    b = kmeans_fit(data, k=5, seed=11)
    assert np.array_equal(a.centers, b.centers)
    assert a.inertia_history == b.inertia_history


def test_kmeans_needs_enough_points():
    with pytest.raises(InvalidArgumentError, match="codebook: N < k"):
        kmeans_fit(np.zeros((99, 2)), k=100, seed=0)


def test_codebook_assign_prefers_lower_index_on_ties():
    book = Codebook(centers=np.array([[-1.0], [1.0]]))
    assert book.assign([[0.0], [0.9]]).tolist() == [0, 1]


# ============================================================
# PCA
# ============================================================

def test_pca_on_the_diagonal():
    t = np.linspace(-3, 3, 7)
    model = pca_fit(np.column_stack([t, t]), 1)
    assert model.components[0] == pytest.approx([1 / np.sqrt(2), 1 / np.sqrt(2)], abs=1e-12)


def test_pca_eigenvalue_uses_unbiased_variance():
    model = pca_fit(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]), 1)
    assert model.eigenvalues[0] == pytest.approx(5 / 3)
    assert model.components[0] == pytest.approx([1.0, 0.0], abs=1e-12)


def test_pca_transform_of_mean_is_zero(rng):
    data = rng.normal(size=(50, 6)) * [1, 2, 3, 4, 5, 6] + 10
    model = pca_fit(data, 4)
    assert np.allclose(pca_transform(model, model.mean), 0.0, atol=1e-12)
    assert model.transform(data).shape == (50, 4)
    assert np.all(np.diff(model.eigenvalues) <= 1e-12)


def test_pca_components_are_orthonormal(rng):
    model = pca_fit(rng.normal(size=(200, 12)), 8)
    gram = model.components @ model.components.T
    assert np.max(np.abs(gram - np.eye(8))) < 1e-6


def test_whitened_training_covariance_is_identity(rng):
    mixing = rng.normal(size=(10, 10))
    data = rng.normal(size=(2000, 10)) @ mixing
    model = pca_fit(data, 10, whiten=True)
    cov = np.cov(model.transform(data), rowvar=False)
    assert np.max(np.abs(np.diag(cov) - 1.0)) < 1e-3


def test_whitening_divides_by_root_eigenvalue():
    plain = PcaModel(mean=np.zeros(2), components=np.eye(2), eigenvalues=np.array([4.0, 1.0]),
                     whiten=False, epsilon=0.0)
    white = PcaModel(mean=np.zeros(2), components=np.eye(2), eigenvalues=np.array([4.0, 1.0]),
                     whiten=True, epsilon=0.0)
    v = np.array([3.0, -2.0])
    assert plain.transform(v).tolist() == [3.0, -2.0]
    assert white.transform(v).tolist() == [1.5, -2.0]
    assert white.reconstruct(white.transform(v)) == pytest.approx(v)


def test_pca_output_dim_is_clamped(rng):
    model = pca_fit(rng.normal(size=(3, 5)), 4)
    assert model.d_out == 2


def test_pca_input_checks(rng):
    with pytest.raises(InvalidArgumentError):
        pca_fit(rng.normal(size=(1, 4)), 2)
    model = pca_fit(rng.normal(size=(10, 4)), 2)
    with pytest.raises(InvalidArgumentError):
        model.transform(np.zeros(3))


def test_reconstruction_error_shrinks_with_more_components(rng):
    data = rng.normal(size=(80, 12)) * np.arange(12, 0, -1)
    errors = []
    for d_out in range(1, 13):
        model = pca_fit(data, d_out)
        residual = data - model.reconstruct(model.transform(data))
        errors.append(float(np.sum(residual ** 2)))
    assert all(later <= earlier + 1e-9 for earlier, later in zip(errors, errors[1:]))
    assert errors[-1] < 1e-9


def test_svd_failure_is_a_numerical_error(monkeypatch, rng):
    def diverge(*args, **kwargs):
        raise encoding.linalg.LinAlgError("SVD did not converge")

    monkeypatch.setattr(encoding.linalg, "svd", diverge)
    with pytest.raises(NumericalError, match="did not converge"):
        pca_fit(rng.normal(size=(10, 4)), 2)
