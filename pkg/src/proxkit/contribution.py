"""Per-feature visual-word weights: four assignment variants.

Every variant maps one descriptor to a sparse set of (word index, weight)
entries:

  hard          1 at the nearest word, 0 elsewhere.
  kernel        g(D_i) at every word, where g is a normalized Gaussian of
                the descriptor-to-word distance.
  uncertainty   g(D_i) / sum_j g(D_j), the full-vocabulary normalization.
  plausibility  g(D_argmin) at the nearest word only.

Kernel and uncertainty outputs are truncated to the top_t largest weights
and then epsilon-floored; the normalizing sum for uncertainty is taken over
the FULL vocabulary before truncation. If flooring would empty the support,
the single largest pre-floor entry is kept instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codebook import Codebook, centroid_distances, _sq_dists
from .features import FeatureSet

VARIANTS = ("hard", "kernel", "uncertainty", "plausibility")

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def gaussian(sigma: float, x: float) -> float:
    """Normalized Gaussian kernel value: exp(-x^2 / (2 sigma^2)) / (sqrt(2 pi) sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return math.exp(-0.5 * (x / sigma) ** 2) / (_SQRT_2PI * sigma)


@dataclass(frozen=True)
class ContributionMode:
    """Which variant to apply plus its parameters.

    sigma is the kernel bandwidth (ignored by hard); top_t caps the number of
    retained words per feature; weights below epsilon are dropped after
    truncation.
    """

    variant: str
    sigma: float | None = None
    top_t: int = 5
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant != "hard":
            if self.sigma is None or self.sigma <= 0:
                raise ValueError(f"variant {self.variant!r} needs sigma > 0, got {self.sigma}")
        if self.top_t < 1:
            raise ValueError("top_t must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class SoftAssignment:
    """Sparse per-feature word weights for one image.

    indices[l] and weights[l] are parallel arrays for feature l, sorted by
    word index, nonempty, with nonnegative weights. K is the vocabulary size.
    """

    indices: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]
    K: int

    def __post_init__(self):
        if len(self.indices) != len(self.weights):
            raise ValueError("indices and weights must have equal length")
        if len(self.indices) < 1:
            raise ValueError("SoftAssignment needs at least one feature")

    @property
    def L(self) -> int:
        return len(self.indices)

    def __len__(self) -> int:
        return self.L


def _truncate_and_floor(
    weights_row: np.ndarray, top_t: int, epsilon: float
) -> tuple[np.ndarray, np.ndarray]:
    """Keep the top_t largest weights, drop those below epsilon, sort by index.

    Ties at the truncation boundary go to smaller word indices. Never returns
    an empty set: if every retained weight falls below epsilon, the single
    largest pre-floor entry survives.
    """
    order = np.argsort(-weights_row, kind="stable")[:top_t]
    kept_w = weights_row[order]
    mask = kept_w >= epsilon
    if not mask.any():
        order = order[:1]
        kept_w = kept_w[:1]
    else:
        order = order[mask]
        kept_w = kept_w[mask]
    by_index = np.argsort(order, kind="stable")
    return order[by_index].astype(np.int64), kept_w[by_index].astype(np.float64)


def contribute(
    cb: Codebook, x: np.ndarray, mode: ContributionMode
) -> tuple[np.ndarray, np.ndarray]:
    """Word weights for one descriptor: parallel (indices, weights) arrays."""
    dists = centroid_distances(cb, x)
    return _contribute_from_distances(dists[None, :], mode)[0]


def _contribute_from_distances(
    D: np.ndarray, mode: ContributionMode
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Vectorized core: D is (L, K) distances, one row per feature."""
    L, K = D.shape
    out: list[tuple[np.ndarray, np.ndarray]] = []
    if mode.variant == "hard":
        nearest = np.argmin(D, axis=1)
        one = np.array([1.0])
        for l in range(L):
            out.append((np.array([nearest[l]], dtype=np.int64), one.copy()))
        return out
    sigma = float(mode.sigma)  # validated > 0 by ContributionMode
    if mode.variant == "plausibility":
        nearest = np.argmin(D, axis=1)
        for l in range(L):
            a = int(nearest[l])
            w = gaussian(sigma, float(D[l, a]))
            out.append((np.array([a], dtype=np.int64), np.array([w])))
        return out
    if mode.variant == "kernel":
        W = np.exp(-0.5 * (D / sigma) ** 2) / (_SQRT_2PI * sigma)
    else:  # uncertainty
        # Softmax of -D^2/(2 sigma^2), shifted by the row maximum so the
        # nearest word's exponent is 0; the Gaussian's constant factor and
        # the shift cancel in the ratio, so this equals the direct formula
        # while staying finite as sigma -> 0.
        expo = -0.5 * (D / sigma) ** 2
        expo -= expo.max(axis=1, keepdims=True)
        E = np.exp(expo)
        W = E / E.sum(axis=1, keepdims=True)
    for l in range(L):
        out.append(_truncate_and_floor(W[l], mode.top_t, mode.epsilon))
    return out


def assign_all(cb: Codebook, fs: FeatureSet, mode: ContributionMode) -> SoftAssignment:
    """Apply the contribution function to every feature of an image."""
    if fs.dim != cb.dim:
        raise ValueError(
            f"descriptor dimension {fs.dim} != codebook dimension {cb.dim}"
        )
    D = np.sqrt(_sq_dists(fs.descriptors, cb.centroids))
    rows = _contribute_from_distances(D, mode)
    return SoftAssignment(
        indices=tuple(r[0] for r in rows),
        weights=tuple(r[1] for r in rows),
        K=cb.K,
    )
