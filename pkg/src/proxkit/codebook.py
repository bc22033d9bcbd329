"""Visual vocabulary: k-means codebook over descriptor space.

Distances are Euclidean throughout. All argmin ties break toward the
smallest index so assignments are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Codebook:
    """K centroid vectors plus fit statistics.

    mean_nn_dist is the mean distance from each training sample to its
    nearest centroid at convergence; it is the default kernel bandwidth
    downstream.
    """

    centroids: np.ndarray
    trained_on: int
    mean_nn_dist: float

    def __post_init__(self):
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 2:
            raise ValueError("centroids must be a (K >= 2, d) array")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids must be finite")
        if self.trained_on < self.K:
            raise ValueError("trained_on must be at least K")
        if self.mean_nn_dist < 0:
            raise ValueError("mean_nn_dist must be nonnegative")
        # Duplicate centroids would make hard assignment ill-defined.
        d2 = _sq_dists(self.centroids, self.centroids)
        np.fill_diagonal(d2, np.inf)
        if float(d2.min()) <= 0.0:
            raise ValueError("centroids must be pairwise distinct")

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def distance(v: np.ndarray, x: np.ndarray) -> float:
    """Euclidean distance between two equal-length vectors."""
    a = np.asarray(v, dtype=np.float64)
    b = np.asarray(x, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (n, K). Clipped at 0 against fp dust."""
    xx = np.sum(X * X, axis=1)[:, None]
    cc = np.sum(C * C, axis=1)[None, :]
    d2 = xx + cc - 2.0 * (X @ C.T)
    return np.maximum(d2, 0.0)


def centroid_distances(cb: Codebook, x: np.ndarray) -> np.ndarray:
    """Distances from one descriptor to every centroid, shape (K,)."""
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (cb.dim,):
        raise ValueError(f"descriptor length {v.shape} != codebook dimension {cb.dim}")
    return np.sqrt(_sq_dists(v[None, :], cb.centroids)[0])


def assign_hard(cb: Codebook, x: np.ndarray) -> int:
    """Index of the nearest centroid (0-based); ties go to the smaller index."""
    return int(np.argmin(centroid_distances(cb, x)))


def _seed_plus_plus(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first center uniform, then proportional to D^2."""
    n = X.shape[0]
    centers = np.empty((K, X.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = X[first]
    d2 = _sq_dists(X, centers[0:1])[:, 0]
    for k in range(1, K):
        total = float(d2.sum())
        if total <= 0.0:
            raise DataError(
                f"fewer than {K} distinct samples; cannot seed {K} centroids"
            )
        idx = int(rng.choice(n, p=d2 / total))
        centers[k] = X[idx]
        d2 = np.minimum(d2, _sq_dists(X, centers[k : k + 1])[:, 0])
    return centers


def kmeans(
    samples: np.ndarray,
    K: int,
    max_iter: int = 100,
    seed: int = 0,
    *,
    history: list[float] | None = None,
) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when assignments stop changing or after max_iter sweeps. Empty
    clusters are re-seeded to the sample currently farthest from its
    centroid. Bit-for-bit deterministic for a fixed seed. When ``history``
    is given, the inertia of each sweep is appended to it.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("samples must be a 2-D array")
    n = X.shape[0]
    if K < 2:
        raise ValueError("K must be >= 2")
    if n < K:
        raise DataError(f"need at least K={K} samples, got {n}")
    rng = np.random.default_rng(seed)
    centers = _seed_plus_plus(X, K, rng)

    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists(X, centers)
        new_assign = np.argmin(d2, axis=1)
        nn_d2 = d2[np.arange(n), new_assign]
        if history is not None:
            history.append(float(nn_d2.sum()))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        counts = np.bincount(assign, minlength=K)
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, X)
        empties = np.flatnonzero(counts == 0)
        far_d2 = nn_d2.copy()
        for k in empties:
            far = int(np.argmax(far_d2))
            centers[k] = X[far]
            far_d2[far] = -1.0
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]

    final_d2 = _sq_dists(X, centers)
    nn = np.sqrt(final_d2[np.arange(n), np.argmin(final_d2, axis=1)])
    return Codebook(
        centroids=centers,
        trained_on=n,
        mean_nn_dist=float(nn.mean()),
    )
