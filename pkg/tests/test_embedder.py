import numpy as np
import pytest

from conplan.clusterer import ClusterParams, cluster
from conplan.dataset import generate_swissroll
from conplan.embedder import (
    EmbedParams,
    embed,
    fit_curve_params,
    knn_graph,
    neighborhood_jaccard,
)
from conplan.errors import InvalidArgumentError


def brute_knn(X, k):
    n = len(X)
    idx = np.empty((n, k), dtype=np.int64)
    dst = np.empty((n, k))
    for i in range(n):
        cand = []
        for j in range(n):
            if j != i:
                cand.append((float(np.linalg.norm(X[i] - X[j])), j))
        cand.sort()
        idx[i] = [c[1] for c in cand[:k]]
        dst[i] = [c[0] for c in cand[:k]]
    return idx, dst


class TestKnnGraph:
    def test_collinear_points(self):
        X = np.array([[0.0], [1.0], [3.0]])
        idx, dst = knn_graph(X, 1)
        assert idx[:, 0].tolist() == [1, 0, 1]
        assert dst[:, 0] == pytest.approx([1.0, 1.0, 2.0])

    def test_duplicate_points(self):
        X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
        idx, dst = knn_graph(X, 2)
        assert dst[0, 0] == 0.0
        assert idx[0, 0] == 1  # self excluded, duplicate allowed
        assert idx[1, 0] == 0

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(100, 5))
        idx, dst = knn_graph(X, 10)
        bidx, bdst = brute_knn(X, 10)
        assert np.array_equal(idx, bidx)
        assert np.allclose(dst, bdst, atol=1e-12)

    def test_k_too_large(self):
        with pytest.raises(InvalidArgumentError):
            knn_graph(np.zeros((5, 2)), 5)

    def test_symmetric_distances(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(50, 3))
        idx, dst = knn_graph(X, 49)
        # d(i, j) recovered from row i equals d(j, i) from row j
        for i in range(50):
            for pos, j in enumerate(idx[i]):
                back = np.where(idx[j] == i)[0][0]
                assert dst[i, pos] == pytest.approx(dst[j, back], abs=1e-12)


class TestCurveFit:
    def test_min_dist_01_reference_values(self):
        a, b = fit_curve_params(1.0, 0.1)
        # well-known fitted values for (spread=1, min_dist=0.1)
        assert a == pytest.approx(1.577, abs=0.01)
        assert b == pytest.approx(0.8951, abs=0.01)


class TestEmbed:
    @pytest.fixture(scope="class")
    def roll(self):
        return generate_swissroll(n=2000, n_pieces=1, passage_width=0.0, seed=0)

    def test_jaccard_floor_on_swiss_roll(self, roll):
        emb = embed(roll.points, EmbedParams(n_neighbors=15, min_dist=0.1, seed=0))
        assert neighborhood_jaccard(roll.points, emb.coords, 15) >= 0.3

    def test_two_pieces_separate_in_latent(self):
        sr = generate_swissroll(n=1500, n_pieces=2, passage_width=0.0, seed=1)
        emb = embed(sr.points, EmbedParams(n_neighbors=5, min_dist=0.1, seed=0))
        a = emb.coords[sr.piece_label == 0]
        b = emb.coords[sr.piece_label == 1]
        linkage = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)).min()
        _idx, d = knn_graph(emb.coords, 5)
        assert linkage > 3.0 * np.median(d)

    def test_identical_points_collapse(self):
        X = np.ones((50, 4))
        emb = embed(X, EmbedParams(n_neighbors=5, min_dist=0.1, seed=0))
        assert np.all(np.linalg.norm(emb.coords, axis=1) <= 1e-3)

    def test_bit_deterministic(self, roll):
        p = EmbedParams(n_neighbors=10, min_dist=0.1, seed=42)
        a = embed(roll.points[:400], p)
        b = embed(roll.points[:400], p)
        assert np.array_equal(a.coords, b.coords)

    def test_seed_changes_layout(self, roll):
        a = embed(roll.points[:400], EmbedParams(n_neighbors=10, seed=1))
        b = embed(roll.points[:400], EmbedParams(n_neighbors=10, seed=2))
        assert not np.array_equal(a.coords, b.coords)

    def test_random_init_supported(self, roll):
        p = EmbedParams(n_neighbors=10, min_dist=0.1, seed=7, init="random",
                        n_epochs=50)
        emb = embed(roll.points[:300], p)
        assert np.all(np.isfinite(emb.coords))

    def test_n_too_small(self):
        with pytest.raises(InvalidArgumentError):
            embed(np.zeros((10, 2)), EmbedParams(n_neighbors=15))


class TestScaleBehavior:
    def test_fine_scale_splits_narrow_passage(self):
        sr = generate_swissroll(n=1500, n_pieces=2, passage_width=0.1, seed=5)
        counts = {}
        for k in (3, 50):
            emb = embed(sr.points, EmbedParams(n_neighbors=k, min_dist=0.1, seed=0))
            out = cluster(emb.coords, ClusterParams(min_cluster_size=20, min_samples=10))
            counts[k] = len([v for v in np.unique(out.labels) if v != -1])
        assert counts[3] >= 2
        assert counts[50] <= counts[3]


class TestEmbedParamsValidation:
    def test_bounds(self):
        with pytest.raises(InvalidArgumentError):
            EmbedParams(n_neighbors=1)
        with pytest.raises(InvalidArgumentError):
            EmbedParams(n_neighbors=5, min_dist=1.0)
        with pytest.raises(InvalidArgumentError):
            EmbedParams(n_neighbors=5, out_dim=4)
        with pytest.raises(InvalidArgumentError):
            EmbedParams(n_neighbors=5, init="pca")
