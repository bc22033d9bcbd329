"""Spatial proximity distributions over visual-word pairs.

For an image with L features, each feature l has a spatial neighbor list
(other features ordered by position distance). The distribution H assigns
cell (i, j, r) the total contribution-weight product of ordered feature
pairs (l, m) where m is among l's r nearest neighbors:

    H(i, j, r) = sum_l sum_{m != l} w_l(i) * w_m(j) * [rank_l(m) <= r]

H is cumulative in r (nondecreasing), kept sparse over (i, j) word pairs.
Self-pairs (m = l) are excluded by default; ``include_self=True`` re-enables
them, counting each feature against itself at every rank.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .contribution import SoftAssignment
from .features import FeatureSet

# Above this many K*K*R cells the builder switches from a dense accumulator
# to a dictionary of touched cells to bound memory.
DENSE_CELL_LIMIT = 4_000_000


@dataclass(frozen=True)
class RankNeighbors:
    """Per-feature spatial neighbor indices, nearest first.

    neighbors is (L, width) with width = min(R, L-1); entry [l, r-1] is the
    index of feature l's r-th nearest neighbor. Distance ties break toward
    the smaller feature index.
    """

    neighbors: np.ndarray
    R: int

    def __post_init__(self):
        if self.neighbors.ndim != 2:
            raise ValueError("neighbors must be a 2-D array")
        if self.R < 1:
            raise ValueError("R must be >= 1")

    @property
    def L(self) -> int:
        return self.neighbors.shape[0]

    @property
    def width(self) -> int:
        return self.neighbors.shape[1]


@dataclass(frozen=True)
class VwHistogram:
    """Visual-word histogram: bins[i] is the total weight landing on word i."""

    bins: np.ndarray
    normalized: bool

    def __post_init__(self):
        if self.bins.ndim != 1:
            raise ValueError("bins must be 1-D")
        if np.any(self.bins < 0):
            raise ValueError("bins must be nonnegative")

    @property
    def K(self) -> int:
        return self.bins.shape[0]


@dataclass(frozen=True)
class ProximityDistribution:
    """Sparse cumulative tensor over (word i, word j, rank r).

    keys holds sorted encoded word pairs (i * K + j); vectors[s] is the
    length-R cumulative rank profile of keys[s]. Absent pairs are identically
    zero. total_mass is the sum of the top-rank slice H(., ., R).
    """

    K: int
    R: int
    keys: np.ndarray
    vectors: np.ndarray
    total_mass: float

    def __post_init__(self):
        if self.keys.ndim != 1 or self.vectors.ndim != 2:
            raise ValueError("keys must be 1-D and vectors 2-D")
        if self.vectors.shape != (self.keys.shape[0], self.R):
            raise ValueError("vectors must be (len(keys), R)")

    @property
    def nkeys(self) -> int:
        return self.keys.shape[0]

    def value(self, i: int, j: int) -> np.ndarray:
        """Cumulative rank profile of word pair (i, j); zeros when absent."""
        pos = np.searchsorted(self.keys, i * self.K + j)
        if pos < self.nkeys and self.keys[pos] == i * self.K + j:
            return self.vectors[pos].copy()
        return np.zeros(self.R)

    def items(self) -> Iterator[tuple[tuple[int, int], np.ndarray]]:
        for s in range(self.nkeys):
            key = int(self.keys[s])
            yield (key // self.K, key % self.K), self.vectors[s]

    def grand_total(self) -> float:
        """Sum over every (i, j, r) cell; equals the self-kernel value."""
        return float(self.vectors.sum())


def rank_neighbors(fs: FeatureSet, R: int) -> RankNeighbors:
    """Order the other features of each feature by spatial distance.

    Keeps min(R, L-1) neighbors per feature. Ties in distance break toward
    the smaller feature index (stable sort over exact squared distances).
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    L = fs.L
    if L < 2:
        raise ValueError(f"need at least 2 features to rank neighbors, got {L}")
    P = fs.positions
    diff = P[:, None, :] - P[None, :, :]
    d2 = np.einsum("lmk,lmk->lm", diff, diff)
    np.fill_diagonal(d2, np.inf)
    width = min(R, L - 1)
    order = np.argsort(d2, axis=1, kind="stable")[:, :width]
    return RankNeighbors(neighbors=order.astype(np.int64), R=R)


def vw_histogram(sa: SoftAssignment, K: int, *, normalize: bool = False) -> VwHistogram:
    """Accumulate per-feature word weights into a K-bin histogram."""
    if K != sa.K:
        raise ValueError(f"histogram size {K} != assignment vocabulary {sa.K}")
    bins = np.zeros(K, dtype=np.float64)
    for idx, w in zip(sa.indices, sa.weights):
        if idx.size and (idx.min() < 0 or idx.max() >= K):
            raise ValueError("word index out of range")
        bins[idx] += w
    if normalize:
        total = float(bins.sum())
        if total <= 0:
            raise ValueError("cannot normalize an all-zero histogram")
        bins /= total
    return VwHistogram(bins=bins, normalized=normalize)


def build_distribution(
    sa: SoftAssignment,
    rn: RankNeighbors,
    K: int,
    R: int,
    *,
    include_self: bool = False,
    dense_cell_limit: int = DENSE_CELL_LIMIT,
) -> ProximityDistribution:
    """Accumulate pair contributions per rank, then prefix-sum over ranks.

    Accumulation order is fixed (feature index ascending, then rank), so the
    result is bit-stable for a given input. The dense and sparse accumulation
    paths add per-cell contributions in the same order and agree bitwise.
    """
    if sa.L != rn.L:
        raise ValueError(f"assignment has {sa.L} features but neighbors has {rn.L}")
    if R != rn.R:
        raise ValueError(f"requested R={R} but neighbors were built with R={rn.R}")
    if K != sa.K:
        raise ValueError(f"requested K={K} but assignment has K={sa.K}")
    L = sa.L
    width = rn.width
    if K * K * R <= dense_cell_limit:
        acc = np.zeros((K, K, R), dtype=np.float64)
        for l in range(L):
            il = sa.indices[l]
            wl = sa.weights[l]
            if include_self:
                acc[il[:, None], il[None, :], 0] += wl[:, None] * wl[None, :]
            row = rn.neighbors[l]
            for rho in range(width):
                m = row[rho]
                jm = sa.indices[m]
                wm = sa.weights[m]
                acc[il[:, None], jm[None, :], rho] += wl[:, None] * wm[None, :]
        np.cumsum(acc, axis=2, out=acc)
        top = acc[:, :, R - 1]
        inz, jnz = np.nonzero(top)
        keys = (inz.astype(np.int64) * K + jnz.astype(np.int64))
        vectors = acc[inz, jnz, :].astype(np.float64)
    else:
        cells: dict[int, np.ndarray] = {}
        for l in range(L):
            il = sa.indices[l]
            wl = sa.weights[l]
            if include_self:
                _scatter(cells, il, wl, il, wl, 0, K, R)
            row = rn.neighbors[l]
            for rho in range(width):
                m = row[rho]
                _scatter(cells, il, wl, sa.indices[m], sa.weights[m], rho, K, R)
        keys = np.array(sorted(cells.keys()), dtype=np.int64)
        vectors = np.zeros((keys.shape[0], R), dtype=np.float64)
        for s, key in enumerate(keys):
            vectors[s] = np.cumsum(cells[int(key)])
        nonzero = vectors[:, R - 1] > 0
        keys = keys[nonzero]
        vectors = vectors[nonzero]
    total_mass = float(vectors[:, R - 1].sum()) if keys.size else 0.0
    return ProximityDistribution(K=K, R=R, keys=keys, vectors=vectors, total_mass=total_mass)


def _scatter(
    cells: dict[int, np.ndarray],
    il: np.ndarray,
    wl: np.ndarray,
    jm: np.ndarray,
    wm: np.ndarray,
    rho: int,
    K: int,
    R: int,
) -> None:
    for a in range(il.shape[0]):
        base = int(il[a]) * K
        wa = wl[a]
        for b in range(jm.shape[0]):
            key = base + int(jm[b])
            vec = cells.get(key)
            if vec is None:
                vec = cells[key] = np.zeros(R, dtype=np.float64)
            vec[rho] += wa * wm[b]
