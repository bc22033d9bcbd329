"""Codebook construction and nearest-word assignment."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from oracles import euclid
from proxkit.codebook import (
    Codebook,
    assign_hard,
    centroid_distances,
    distance,
    kmeans,
)
from proxkit.errors import DataError


class TestDistance:
    def test_matches_direct_formula(self, rng):
        for _ in range(20):
            a = rng.normal(size=5)
            b = rng.normal(size=5)
            assert_allclose(distance(a, b), euclid(a, b), rtol=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            distance(np.zeros(3), np.zeros(4))


class TestCodebookValidation:
    def test_duplicate_centroids_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            Codebook(
                centroids=np.array([[1.0, 0.0], [1.0, 0.0]]),
                trained_on=10,
                mean_nn_dist=0.1,
            )

    def test_trained_on_below_k_rejected(self):
        with pytest.raises(ValueError, match="trained_on"):
            Codebook(
                centroids=np.array([[0.0], [1.0], [2.0]]),
                trained_on=2,
                mean_nn_dist=0.1,
            )


class TestAssignment:
    def _cb(self):
        return Codebook(
            centroids=np.array([[-1.0], [1.0]]), trained_on=4, mean_nn_dist=0.5
        )

    def test_nearest_word_wins(self):
        cb = self._cb()
        assert assign_hard(cb, np.array([0.9])) == 1
        assert assign_hard(cb, np.array([-0.2])) == 0

    def test_equidistant_tie_takes_smaller_index(self):
        assert assign_hard(self._cb(), np.array([0.0])) == 0

    def test_centroid_distances_values(self):
        d = centroid_distances(self._cb(), np.array([0.25]))
        assert_allclose(d, [1.25, 0.75], rtol=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dimension"):
            centroid_distances(self._cb(), np.array([0.0, 1.0]))


class TestKmeans:
    def test_two_clear_clusters(self):
        """Pairs near 0 and near 10 split cleanly; the centroids are the means."""
        X = np.array([[0.0], [0.05], [10.0], [10.05]])
        history = []
        cb = kmeans(X, 2, seed=0, history=history)
        assert_allclose(sorted(cb.centroids[:, 0]), [0.025, 10.025], atol=1e-12)
        assert cb.trained_on == 4
        assert_allclose(cb.mean_nn_dist, 0.025, rtol=1e-9)
        assert_allclose(history[-1], 0.0025, rtol=1e-9)

    def test_k_equal_to_point_count_reaches_zero_inertia(self):
        X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        history = []
        cb = kmeans(X, 3, seed=1, history=history)
        assert cb.mean_nn_dist == 0.0
        assert history[-1] == 0.0
        got = {tuple(c) for c in cb.centroids}
        assert got == {(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)}

    def test_deterministic_for_fixed_seed(self, rng):
        X = rng.normal(size=(60, 3))
        a = kmeans(X, 5, seed=7)
        b = kmeans(X, 5, seed=7)
        assert_array_equal(a.centroids, b.centroids)
        assert a.mean_nn_dist == b.mean_nn_dist

    def test_inertia_never_increases(self, rng):
        X = rng.normal(size=(120, 4))
        history = []
        kmeans(X, 6, seed=3, history=history)
        assert len(history) >= 2
        diffs = np.diff(np.array(history))
        assert np.all(diffs <= 1e-9 * max(1.0, history[0]))

    def test_every_sample_near_some_centroid(self, rng):
        X = rng.normal(size=(80, 2))
        cb = kmeans(X, 4, seed=0)
        d = np.linalg.norm(X[:, None, :] - cb.centroids[None, :, :], axis=2)
        assert_allclose(d.min(axis=1).mean(), cb.mean_nn_dist, rtol=1e-9)

    def test_too_few_samples_rejected(self, rng):
        with pytest.raises(DataError, match="at least"):
            kmeans(rng.normal(size=(3, 2)), 4)

    def test_too_few_distinct_samples_rejected(self):
        X = np.ones((6, 2))
        with pytest.raises(DataError, match="distinct"):
            kmeans(X, 2, seed=0)

    def test_k_below_two_rejected(self, rng):
        with pytest.raises(ValueError, match="K"):
            kmeans(rng.normal(size=(10, 2)), 1)
