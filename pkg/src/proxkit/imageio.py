"""Grayscale image IO, dataset manifests, and a synthetic texture benchmark.

Images are 8-bit PGM (binary P5) or PNG (8-bit grayscale or RGB) on disk and
float64 intensities in [0, 1] in memory. RGB collapses to luma with the
0.299/0.587/0.114 weights; all 8-bit values scale by 1/255.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_LUMA = (0.299, 0.587, 0.114)

SPLIT_TOKENS = ("train", "test")


@dataclass(frozen=True)
class GrayImage:
    """A grayscale image: ``pixels`` is a (height, width) float64 array.

    Intensities live in [0, 1]. Row-major layout, row 0 at the top.
    """

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DataError("image dimensions must be at least 1x1")
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"(height, width)=({self.height}, {self.width})"
            )
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("pixel intensities must be finite")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel intensities outside [0, 1]: [{lo}, {hi}]")

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> "GrayImage":
        arr = np.asarray(pixels, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D pixel array")
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr)


def _parse_pgm(data: bytes, name: str) -> GrayImage:
    # Header tokens may be separated by arbitrary whitespace and '#' comments.
    if data[:2] != b"P5":
        raise DataError(f"unreadable file {name}: not a P5 PGM")
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise DataError(f"unreadable file {name}: truncated header")
            pos = nl + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"unreadable file {name}: truncated header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError:
            raise DataError(f"unreadable file {name}: bad header token") from None
    width, height, maxval = tokens
    if maxval > 255:
        raise DataError(f"unsupported bit depth in {name}: maxval {maxval} > 255")
    if maxval < 1:
        raise DataError(f"unreadable file {name}: maxval {maxval}")
    if width < 1 or height < 1:
        raise DataError(f"image dimension 0 in {name}")
    # Exactly one whitespace byte separates the header from the raster.
    pos += 1
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise DataError(f"unreadable file {name}: truncated raster")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(width, height, pixels.astype(np.float64) / 255.0)


def _parse_png(data: bytes, name: str) -> GrayImage:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - Pillow is a dependency
        raise DataError(f"cannot read PNG {name}: Pillow unavailable") from exc
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise DataError(f"unreadable file {name}: {exc}") from exc
    mode = img.mode
    if mode == "L":
        arr = np.asarray(img, dtype=np.float64)
    elif mode == "RGB":
        rgb = np.asarray(img, dtype=np.float64)
        arr = _LUMA[0] * rgb[..., 0] + _LUMA[1] * rgb[..., 1] + _LUMA[2] * rgb[..., 2]
    elif mode.startswith("I") or mode == "F":
        raise DataError(f"unsupported bit depth in {name}: PNG mode {mode}")
    else:
        raise DataError(f"unsupported PNG mode {mode} in {name} (need 8-bit gray or RGB)")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError(f"image dimension 0 in {name}")
    return GrayImage(arr.shape[1], arr.shape[0], arr / 255.0)


def load_image(path: str | Path) -> GrayImage:
    """Load a PGM (P5, 8-bit) or PNG (8-bit gray/RGB) file as a GrayImage."""
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise DataError(f"unreadable file {p}: {exc}") from exc
    if data[:2] == b"P5":
        return _parse_pgm(data, str(p))
    if data[: len(_PNG_MAGIC)] == _PNG_MAGIC:
        return _parse_png(data, str(p))
    raise DataError(f"unreadable file {p}: unknown format")


def write_pgm(img: GrayImage, path: str | Path) -> None:
    """Write an 8-bit binary PGM. Quantization is round(p * 255).

    load_image(write_pgm(img)) reproduces img exactly when its intensities
    are multiples of 1/255, so write/load round-trips are byte-stable.
    """
    raster = np.rint(img.pixels * 255.0)
    raster = np.clip(raster, 0, 255).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + raster.tobytes())
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Dataset manifests


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str


@dataclass
class DatasetManifest:
    """An ordered list of (path, label, split) rows plus the resolution root.

    Entry paths are relative to ``root``. Paths are unique, split tokens are
    'train' or 'test', and every label that appears in the test split also
    appears in the train split.
    """

    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = field(default_factory=Path)

    def train_entries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == "train"]

    def test_entries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == "test"]

    def labels(self) -> list[str]:
        return sorted({e.label for e in self.entries})

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def validate(self) -> None:
        seen: set[str] = set()
        for e in self.entries:
            if e.split not in SPLIT_TOKENS:
                raise DataError(f"bad split token {e.split!r} for {e.path}")
            if e.path in seen:
                raise DataError(f"duplicate manifest path {e.path!r}")
            seen.add(e.path)
        train_labels = {e.label for e in self.entries if e.split == "train"}
        for e in self.entries:
            if e.split == "test" and e.label not in train_labels:
                raise DataError(
                    f"test label {e.label!r} has no train entry (needed by {e.path})"
                )


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a manifest: one '<path>\\t<label>\\t<split>' row per line.

    Lines starting with '#' and blank lines are ignored. The manifest's parent
    directory becomes the resolution root for entry paths.
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"unreadable manifest {p}: {exc}") from exc
    entries: list[ManifestEntry] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(f"malformed manifest line {lineno} in {p}: {line!r}")
        rel, label, split = (f.strip() for f in fields)
        if not rel or not label:
            raise DataError(f"malformed manifest line {lineno} in {p}: empty field")
        entries.append(ManifestEntry(rel, label, split))
    if not entries:
        warnings.warn(f"manifest {p} contains no entries", stacklevel=2)
    manifest = DatasetManifest(entries=entries, root=p.parent)
    manifest.validate()
    return manifest


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    lines = [f"{e.path}\t{e.label}\t{e.split}" for e in manifest.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Synthetic benchmark
#
# Four procedural texture families whose identity lives in local patch
# statistics, so a bag-of-patches pipeline can tell them apart: oriented
# sinusoidal gratings, checkerboards, Gaussian blob fields, and radial
# gradients. Classes beyond four reuse a family at a different scale.

_FAMILY_NAMES = ("grating", "checker", "blobs", "radial")
_NOISE_SIGMA = 0.05


def _grid(side: int) -> tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:side, 0:side]
    return yy.astype(np.float64), xx.astype(np.float64)


def _grating(side: int, rng: np.random.Generator, variant: int) -> np.ndarray:
    theta = np.deg2rad(25.0 + 40.0 * variant) + rng.uniform(-0.06, 0.06)
    lam = 7.0 + rng.uniform(-0.4, 0.4)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = _grid(side)
    t = xx * np.cos(theta) + yy * np.sin(theta)
    return 0.5 + 0.38 * np.sin(2.0 * np.pi * t / lam + phase)


def _checker(side: int, rng: np.random.Generator, variant: int) -> np.ndarray:
    cell = 5 + 2 * variant
    ox, oy = rng.integers(0, cell, size=2)
    yy, xx = _grid(side)
    board = ((np.floor((xx + ox) / cell) + np.floor((yy + oy) / cell)) % 2.0)
    return 0.15 + 0.7 * board


def _blobs(side: int, rng: np.random.Generator, variant: int) -> np.ndarray:
    count = max(8, (side * side) // 80) * (1 + variant)
    radius = 2.2
    canvas = np.full((side, side), 0.25)
    yy, xx = _grid(side)
    centers = rng.uniform(0.0, side, size=(count, 2))
    for cy, cx in centers:
        canvas += 0.55 * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * radius**2))
    return np.clip(canvas, 0.0, 1.0)


def _radial(side: int, rng: np.random.Generator, variant: int) -> np.ndarray:
    cy, cx = rng.uniform(0.3 * side, 0.7 * side, size=2)
    yy, xx = _grid(side)
    rr = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2) / float(side)
    return 0.85 - 0.7 * np.clip(rr * (1.4 + 0.2 * variant), 0.0, 1.0)


_FAMILIES = (_grating, _checker, _blobs, _radial)


def generate_synthetic(
    out_dir: str | Path,
    classes: int,
    per_class: int,
    side: int,
    seed: int,
) -> DatasetManifest:
    """Generate a labeled PGM texture dataset plus its manifest.

    Deterministic: the same arguments produce byte-identical files. Each class
    draws from one texture family (cycling with scale variants past four
    classes), gets additive Gaussian pixel noise (sigma 0.05), and is split
    per class roughly 80/20 into train/test.
    """
    if classes < 2:
        raise ValueError("classes must be >= 2")
    if per_class < 2:
        raise ValueError("per_class must be >= 2")
    if side < 32:
        raise ValueError("side must be >= 32")
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"unwritable output directory {root}: {exc}") from exc

    rng = np.random.default_rng(seed)
    train_n = min(per_class - 1, max(1, round(0.8 * per_class)))
    entries: list[ManifestEntry] = []
    for c in range(classes):
        family = _FAMILIES[c % 4]
        variant = c // 4
        name = _FAMILY_NAMES[c % 4]
        label = name if variant == 0 else f"{name}{variant}"
        try:
            (root / label).mkdir(exist_ok=True)
        except OSError as exc:
            raise DataError(f"unwritable output directory {root / label}: {exc}") from exc
        for k in range(per_class):
            base = family(side, rng, variant)
            noisy = np.clip(base + rng.normal(0.0, _NOISE_SIGMA, base.shape), 0.0, 1.0)
            rel = f"{label}/{label}_{k:03d}.pgm"
            write_pgm(GrayImage.from_array(noisy), root / rel)
            split = "train" if k < train_n else "test"
            entries.append(ManifestEntry(rel, label, split))
    manifest = DatasetManifest(entries=entries, root=root)
    manifest.validate()
    write_manifest(manifest, root / "manifest.tsv")
    return manifest
