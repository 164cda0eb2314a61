import numpy as np
import pytest

from oracles import naive_agglomeration
from robustclust.baselines import METHODS, BaselineConfig, em_gmm, fuzzy_cmeans, kmeans, \
    run_baseline
from robustclust.experiments import random_expected_error
from robustclust.partitions import Partition, enumerate_partitions, natural_cost


def two_blobs(seed, n=20, gap=20.0, d=2):
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.normal(size=(n, d)), rng.normal(size=(n, d)) + gap])
    return pts, Partition.from_labels([1] * n + [2] * n)


@pytest.mark.parametrize("method", METHODS)
class TestAllMethods:
    def test_valid_partition(self, method):
        pts, _ = two_blobs(0)
        res = run_baseline(pts, BaselineConfig(method, seed=1))
        assert res.partition.n == 40 and res.partition.n_blocks <= 2

    def test_k_one(self, method):
        pts, _ = two_blobs(0)
        res = run_baseline(pts, BaselineConfig(method, k=1, seed=1, sizes=(40,)))
        assert res.partition.n_blocks == 1

    def test_deterministic(self, method):
        pts, _ = two_blobs(2)
        a = run_baseline(pts, BaselineConfig(method, seed=5))
        b = run_baseline(pts, BaselineConfig(method, seed=5))
        assert a.partition == b.partition

    def test_identical_points(self, method):
        res = run_baseline(np.zeros((6, 2)), BaselineConfig(method, seed=0))
        assert res.partition.n == 6 and res.partition.n_blocks <= 2


@pytest.mark.parametrize("method", [m for m in METHODS if m != "random"])
def test_separated_recovered(method):
    pts, truth = two_blobs(3)
    res = run_baseline(pts, BaselineConfig(method, seed=3))
    assert natural_cost(res.partition, truth, 2) == 0


@pytest.mark.parametrize("method, linkage", [("hier-s", "single"), ("hier-a", "average"),
                                             ("hier-c", "complete")])
@pytest.mark.parametrize("seed", range(5))
def test_hierarchical_matches_naive(method, linkage, seed):
    rng = np.random.default_rng(seed)
    n, d, k = int(rng.integers(5, 51)), int(rng.integers(1, 4)), int(rng.integers(2, 5))
    pts = rng.normal(size=(n, d)) + rng.integers(0, 3, size=(n, 1)) * 4.0
    got = run_baseline(pts, BaselineConfig(method, k=k)).partition
    assert got == Partition.from_labels(naive_agglomeration(pts, k, linkage) + 1)


class TestObjectives:
    def test_kmeans_inertia_nonincreasing(self):
        pts, _ = two_blobs(4, gap=1.5)
        hist = kmeans(pts, BaselineConfig("kmeans", seed=0, restarts=1)).diagnostics["history"]
        assert np.all(np.diff(hist) <= 1e-9)

    def test_fcm_objective_nonincreasing(self):
        pts, _ = two_blobs(4, gap=1.5)
        hist = fuzzy_cmeans(pts, BaselineConfig("fcm", seed=0, restarts=1)).diagnostics["history"]
        assert np.all(np.diff(hist) <= 1e-9)

    def test_em_loglik_nondecreasing(self):
        pts, _ = two_blobs(4, gap=1.5)
        res = em_gmm(pts, BaselineConfig("em", seed=0))
        assert np.all(np.diff(res.diagnostics["history"]) >= -1e-9)

    def test_em_k1_sample_stats(self):
        pts, _ = two_blobs(5)
        res = em_gmm(pts, BaselineConfig("em", k=1))
        np.testing.assert_allclose(res.diagnostics["means"][0], pts.mean(axis=0))
        np.testing.assert_allclose(res.diagnostics["covs"][0], np.cov(pts.T, bias=True))

    def test_em_matches_kmeans_when_separated(self):
        for seed in range(5):
            pts, _ = two_blobs(seed, gap=10.0)
            a = run_baseline(pts, BaselineConfig("em", seed=seed)).partition
            b = run_baseline(pts, BaselineConfig("kmeans", seed=seed)).partition
            assert a == b


class TestRandom:
    def test_sizes_respected(self):
        pts = np.zeros((10, 1))
        res = run_baseline(pts, BaselineConfig("random", sizes=(7, 3), seed=0))
        assert sorted(res.partition.sizes) == [3, 7]

    def test_expected_error_closed_form(self):
        # hypergeometric overlap k with the truth: cost 0.2 when k in {1, 4}, 0.4 when k in {2, 3}
        want = (50 * 0.2 + 200 * 0.4) / 252
        assert random_expected_error((5, 5)) == pytest.approx(want, abs=1e-15)

    def test_uniform_over_partitions(self):
        pts = np.zeros((4, 1))
        counts = {}
        for seed in range(3000):
            p = run_baseline(pts, BaselineConfig("random", sizes=(2, 2), seed=seed)).partition
            counts[p] = counts.get(p, 0) + 1
        assert set(counts) == set(enumerate_partitions(4, 2, (2, 2)))
        assert max(counts.values()) - min(counts.values()) < 150

    def test_sizes_must_match(self):
        with pytest.raises(ValueError):
            run_baseline(np.zeros((5, 1)), BaselineConfig("random", sizes=(2, 2)))


class TestConfig:
    def test_unknown_method(self):
        with pytest.raises(ValueError):
            BaselineConfig("dbscan")

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            run_baseline(np.zeros((1, 2)), BaselineConfig("kmeans", k=2))
