"""Dense patch extraction and PCA projection to low-dimensional descriptors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataError
from .imageio import GrayImage

PCA_SAMPLE_CAP = 100_000


class LocalFeature(NamedTuple):
    descriptor: np.ndarray
    position: tuple[float, float]


@dataclass(frozen=True)
class FeatureSet:
    """Local features of one image: descriptors (L, d), positions (L, 2).

    Positions are (row, col) patch centers in pixel units. L >= 1 here;
    the proximity stage additionally needs L >= 2 to form pairs.
    """

    descriptors: np.ndarray
    positions: np.ndarray
    source: str = ""

    def __post_init__(self):
        if self.descriptors.ndim != 2 or self.positions.ndim != 2:
            raise ValueError("descriptors and positions must be 2-D arrays")
        if self.positions.shape != (self.descriptors.shape[0], 2):
            raise ValueError("positions must be (L, 2) matching descriptors")
        if self.descriptors.shape[0] < 1:
            raise ValueError("a FeatureSet needs at least one feature")
        if not (np.all(np.isfinite(self.descriptors)) and np.all(np.isfinite(self.positions))):
            raise ValueError("descriptors and positions must be finite")

    @property
    def L(self) -> int:
        return self.descriptors.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def __len__(self) -> int:
        return self.L

    def __getitem__(self, l: int) -> LocalFeature:
        return LocalFeature(self.descriptors[l], (float(self.positions[l, 0]), float(self.positions[l, 1])))


@dataclass(frozen=True)
class PcaModel:
    """Linear projection: code = basis^T (raw - mean).

    basis columns are orthonormal; explained_variance is nonincreasing.
    Each basis column is sign-fixed so its largest-magnitude entry is
    nonnegative, making the fit deterministic.
    """

    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray

    def __post_init__(self):
        d_raw, d = self.basis.shape
        if self.mean.shape != (d_raw,):
            raise ValueError("mean length must match basis rows")
        if self.explained_variance.shape != (d,):
            raise ValueError("explained_variance length must match basis columns")
        gram = self.basis.T @ self.basis
        if not np.allclose(gram, np.eye(d), atol=1e-8):
            raise ValueError("basis columns must be orthonormal (within 1e-8)")
        ev = self.explained_variance
        if np.any(ev < -1e-12) or np.any(np.diff(ev) > 1e-12):
            raise ValueError("explained_variance must be nonnegative and nonincreasing")

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def extract_patches(img: GrayImage, patch: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Slide a patch x patch window over the image; return (raw, positions).

    raw is (N, patch*patch): each window flattened row-major with its own
    mean subtracted (per-patch DC removal). positions is (N, 2) window
    centers as (row, col). Windows lie fully inside the image; the grid is
    row-major with top-left corners at multiples of stride.
    """
    if patch < 1 or patch % 2 == 0:
        raise ValueError(f"patch must be odd and positive, got {patch}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if patch > min(img.width, img.height):
        raise ValueError(
            f"image {img.width}x{img.height} smaller than patch {patch}"
        )
    windows = np.lib.stride_tricks.sliding_window_view(img.pixels, (patch, patch))
    windows = windows[::stride, ::stride]
    grid_r, grid_c = windows.shape[:2]
    raw = windows.reshape(grid_r * grid_c, patch * patch).astype(np.float64)
    raw = raw - raw.mean(axis=1, keepdims=True)
    half = patch // 2
    rows = np.arange(grid_r) * stride + half
    cols = np.arange(grid_c) * stride + half
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    positions = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.float64)
    return raw, positions


def fit_pca(
    samples: np.ndarray,
    d: int,
    *,
    max_samples: int = PCA_SAMPLE_CAP,
    seed: int = 0,
) -> PcaModel:
    """Fit a PCA model on (n, d_raw) samples, keeping the top d components.

    When n exceeds max_samples, a seeded uniform subsample of max_samples
    rows is used. Raises DataError when the sample covariance has rank < d.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("samples must be a 2-D array")
    n, d_raw = X.shape
    if not (1 <= d <= d_raw):
        raise ValueError(f"d must be in [1, {d_raw}], got {d}")
    if n < d + 1:
        raise ValueError(f"need at least d+1={d + 1} samples, got {n}")
    if n > max_samples:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(n, size=max_samples, replace=False))
        X = X[keep]
        n = max_samples
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(d_raw, d_raw)
    evals, evecs = np.linalg.eigh(cov)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    top = float(max(evals[0], 0.0))
    rank = int(np.sum(evals > top * 1e-10)) if top > 0 else 0
    if rank < d:
        raise DataError(
            f"degenerate covariance: rank {rank} < requested dimension {d}; lower d"
        )
    basis = evecs[:, :d].copy()
    for col in range(d):
        j = int(np.argmax(np.abs(basis[:, col])))
        if basis[j, col] < 0:
            basis[:, col] = -basis[:, col]
    explained = np.clip(evals[:d], 0.0, None)
    return PcaModel(mean=mean, basis=basis, explained_variance=explained)


def transform(model: PcaModel, raw: np.ndarray) -> np.ndarray:
    """Project raw descriptors: basis^T (raw - mean). Accepts 1-D or (n, d_raw)."""
    arr = np.asarray(raw, dtype=np.float64)
    d_raw = model.basis.shape[0]
    if arr.ndim == 1:
        if arr.shape[0] != d_raw:
            raise ValueError(f"raw length {arr.shape[0]} != model dimension {d_raw}")
        return (arr - model.mean) @ model.basis
    if arr.ndim == 2:
        if arr.shape[1] != d_raw:
            raise ValueError(f"raw width {arr.shape[1]} != model dimension {d_raw}")
        return (arr - model.mean) @ model.basis
    raise ValueError("raw must be 1-D or 2-D")


def extract_features(
    img: GrayImage,
    patch: int,
    stride: int,
    model: PcaModel,
    *,
    source: str = "",
) -> FeatureSet:
    """Dense patches -> PCA codes, packaged with patch-center positions."""
    raw, positions = extract_patches(img, patch, stride)
    codes = transform(model, raw)
    if codes.shape[0] < 2:
        warnings.warn(
            f"image {source or '<unnamed>'} yields only {codes.shape[0]} feature(s); "
            "proximity distributions need at least 2",
            stacklevel=2,
        )
    return FeatureSet(descriptors=codes, positions=positions, source=source)
