"""Min-intersection kernels over proximity distributions, plus the L1 baseline.

The kernel between two distributions is the sum over every (word-pair, rank)
cell of the elementwise minimum:

    k(Y, Z) = sum_{i,j,r} min(H_Y(i,j,r), H_Z(i,j,r))

Only cells present in both sparse supports can contribute. Per-key partial
sums are accumulated with math.fsum in sorted key order, so evaluation is
deterministic and exactly symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .proximity import ProximityDistribution, VwHistogram


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric kernel matrix with the ids of the items it was built from."""

    values: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("gram values must be square")
        if len(self.ids) != v.shape[0]:
            raise ValueError("ids length must match gram size")
        if not np.all(np.isfinite(v)):
            raise ValueError("gram entries must be finite")
        if np.any(v < 0):
            raise ValueError("min-intersection kernel values are nonnegative")
        if not np.allclose(v, v.T, atol=1e-9):
            raise ValueError("gram must be symmetric within 1e-9")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _check_compatible(hy: ProximityDistribution, hz: ProximityDistribution) -> None:
    if hy.K != hz.K:
        raise ValueError(f"vocabulary mismatch: {hy.K} vs {hz.K}")
    if hy.R != hz.R:
        raise ValueError(f"rank-depth mismatch: {hy.R} vs {hz.R}")


def pdk(
    hy: ProximityDistribution,
    hz: ProximityDistribution,
    *,
    normalize: bool = False,
) -> float:
    """Min-intersection kernel value of two distributions.

    With normalize=True returns k(Y,Z) / sqrt(k(Y,Y) k(Z,Z)) (0 when either
    self-kernel is 0).
    """
    _check_compatible(hy, hz)
    value = _pdk_raw(hy, hz)
    if not normalize:
        return value
    yy = hy.grand_total()
    zz = hz.grand_total()
    if yy <= 0.0 or zz <= 0.0:
        return 0.0
    return value / math.sqrt(yy * zz)


def _pdk_raw(hy: ProximityDistribution, hz: ProximityDistribution) -> float:
    # min(a, b) = a when Y == Z, so the self-kernel is the grand total.
    if hy.nkeys == 0 or hz.nkeys == 0:
        return 0.0
    common, ia, ib = np.intersect1d(
        hy.keys, hz.keys, assume_unique=True, return_indices=True
    )
    if common.size == 0:
        return 0.0
    mins = np.minimum(hy.vectors[ia], hz.vectors[ib])
    return math.fsum(mins.sum(axis=1))


def l1_distance(hx: VwHistogram, hy: VwHistogram) -> float:
    """L1 distance between two visual-word histograms (the flat baseline)."""
    if hx.K != hy.K:
        raise ValueError(f"histogram size mismatch: {hx.K} vs {hy.K}")
    if hx.normalized != hy.normalized:
        raise ValueError("cannot mix normalized and unnormalized histograms")
    return float(np.abs(hx.bins - hy.bins).sum())


def gram(
    dists: list[ProximityDistribution],
    ids: list[str] | tuple[str, ...],
    *,
    normalize: bool = False,
) -> GramMatrix:
    """Pairwise kernel matrix; computed for the lower triangle and mirrored."""
    n = len(dists)
    if n < 1:
        raise ValueError("gram needs at least one distribution")
    if len(ids) != n:
        raise ValueError("ids length must match number of distributions")
    values = np.zeros((n, n), dtype=np.float64)
    for a in range(n):
        for b in range(a + 1):
            v = pdk(dists[a], dists[b], normalize=normalize)
            values[a, b] = v
            values[b, a] = v
    return GramMatrix(values=values, ids=tuple(ids))


def kernel_row(
    query: ProximityDistribution,
    dists: list[ProximityDistribution],
    *,
    normalize: bool = False,
) -> np.ndarray:
    """Kernel values of one query against a list of distributions."""
    return np.array([pdk(query, d, normalize=normalize) for d in dists], dtype=np.float64)
