import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wkcc.errors import LengthMismatch, SingleCluster
from wkcc.geometry import Grid, make_distribution, wasserstein_distance
from wkcc.metrics import (
    Partition,
    adjusted_rand_index,
    contingency,
    correct_classification_rate,
    silhouette,
    wasserstein_distance_matrix,
)


def brute_crate(pred, truth):
    pl, tl = np.unique(pred), np.unique(truth)
    k = max(len(pl), len(tl))
    best = 0
    for perm in itertools.permutations(range(k)):
        hits = sum(np.sum((pred == pl[i]) & (truth == tl[perm[i]])) for i in range(len(pl)) if perm[i] < len(tl))
        best = max(best, hits)
    return best / len(pred)


def pair_ari(pred, truth):
    """Adjusted Rand index from explicit pair counts."""
    n = len(pred)
    a = b = c = d = 0
    for i, j in itertools.combinations(range(n), 2):
        same_p, same_t = pred[i] == pred[j], truth[i] == truth[j]
        a += same_p and same_t
        b += same_p and not same_t
        c += same_t and not same_p
        d += not same_p and not same_t
    total = a + b + c + d
    expected = (a + b) * (a + c) / total
    maximum = ((a + b) + (a + c)) / 2
    if maximum == expected:
        return 1.0
    return (a - expected) / (maximum - expected)


class TestPartition:
    def test_canonical_first_appearance(self):
        assert Partition.of(["b", "a", "b", "c"]).labels.tolist() == [0, 1, 0, 2]

    def test_contingency(self):
        t = contingency([0, 0, 1, 1], [1, 1, 1, 0])
        assert t.tolist() == [[2, 0], [1, 1]]

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            contingency([0, 1], [0, 1, 1])


class TestCorrectClassificationRate:
    def test_identical(self):
        assert correct_classification_rate([0, 0, 1], [0, 0, 1]) == 1.0

    def test_swapped(self):
        assert correct_classification_rate([1, 1, 0], [0, 0, 1]) == 1.0

    def test_worked_example(self):
        truth = np.array([1, 1, 1, 2, 2, 2])
        pred = np.array([1, 2, 1, 2, 1, 2])
        assert correct_classification_rate(pred, truth) == pytest.approx(4 / 6)
        assert brute_crate(pred, truth) == pytest.approx(4 / 6)

    def test_different_K(self):
        pred = np.array([0, 1, 2, 2])
        truth = np.array([0, 0, 1, 1])
        assert correct_classification_rate(pred, truth) == brute_crate(pred, truth)

    def test_matches_brute_force(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 13))
            K = int(rng.integers(1, 5))
            pred, truth = rng.integers(K, size=n), rng.integers(K, size=n)
            assert correct_classification_rate(pred, truth) == pytest.approx(brute_crate(pred, truth), abs=1e-15)

    def test_lower_bound(self, rng):
        for _ in range(50):
            truth = rng.integers(3, size=20)
            pred = rng.integers(3, size=20)
            assert correct_classification_rate(pred, truth) >= 1 / 3 - 1e-12


class TestAdjustedRandIndex:
    def test_identical(self):
        assert adjusted_rand_index([0, 1, 1, 2], [0, 1, 1, 2]) == 1.0

    def test_permuted(self):
        assert adjusted_rand_index([2, 0, 0, 1], [0, 1, 1, 2]) == 1.0

    def test_worked_example(self):
        truth = [1, 1, 1, 2, 2, 2]
        pred = [1, 2, 1, 2, 1, 2]
        assert adjusted_rand_index(pred, truth) == pytest.approx(pair_ari(pred, truth), abs=1e-12)

    def test_matches_pair_counting(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 25))
            pred, truth = rng.integers(4, size=n), rng.integers(3, size=n)
            assert adjusted_rand_index(pred, truth) == pytest.approx(pair_ari(pred, truth), abs=1e-12)

    def test_trivial_partitions(self):
        assert adjusted_rand_index([0, 0, 0], [0, 0, 0]) == 1.0

    def test_zero_mean_under_shuffles(self, rng):
        truth = np.repeat([0, 1, 2], 20)
        vals = [adjusted_rand_index(rng.permutation(truth), truth) for _ in range(10_000)]
        assert abs(np.mean(vals)) < 0.01

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=2, max_size=20), st.integers(0, 2**31))
    def test_relabel_invariance(self, labels, seed):
        rng = np.random.default_rng(seed)
        truth = rng.integers(3, size=len(labels))
        relabel = rng.permutation(4)
        pred = np.array(labels)
        assert adjusted_rand_index(relabel[pred], truth) == pytest.approx(adjusted_rand_index(pred, truth), abs=1e-12)
        assert correct_classification_rate(relabel[pred], truth) == correct_classification_rate(pred, truth)


class TestSilhouette:
    def test_separated(self, rng):
        g = Grid(50)
        ds = [make_distribution(g, np.full(50, c + 0.01 * rng.random())) for c in (0.1, 0.1, 0.1, 0.8, 0.8, 0.8)]
        assert silhouette(ds, [0, 0, 0, 1, 1, 1]) > 0.9

    def test_identical_points(self):
        g = Grid(10)
        ds = [make_distribution(g, np.full(10, 0.5))] * 4
        assert silhouette(ds, [0, 0, 1, 1]) == 0.0

    def test_single_cluster(self):
        g = Grid(10)
        ds = [make_distribution(g, np.full(10, 0.5))] * 3
        with pytest.raises(SingleCluster):
            silhouette(ds, [0, 0, 0])

    def test_distance_matrix(self, rng):
        from conftest import random_distribution

        g = Grid(100)
        ds = [random_distribution(rng, g) for _ in range(5)]
        D = wasserstein_distance_matrix(ds)
        for i in range(5):
            for j in range(5):
                assert D[i, j] == pytest.approx(wasserstein_distance(ds[i], ds[j]), abs=1e-7)

    def test_manual_value(self):
        g = Grid(4)
        pts = [0.0, 0.1, 0.5, 0.7]
        ds = [make_distribution(g, np.full(4, p)) for p in pts]
        labels = [0, 0, 1, 1]
        s = []
        for i, p in enumerate(pts):
            own = [abs(p - q) for j, q in enumerate(pts) if labels[j] == labels[i] and j != i]
            other = [abs(p - q) for j, q in enumerate(pts) if labels[j] != labels[i]]
            a, b = np.mean(own), np.mean(other)
            s.append((b - a) / max(a, b))
        assert silhouette(ds, labels) == pytest.approx(np.mean(s), abs=1e-7)
