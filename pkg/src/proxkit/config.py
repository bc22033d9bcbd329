"""Run configuration: one flat record driving every pipeline stage."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .contribution import VARIANTS
from .errors import DataError

CLASSIFIERS = ("svm", "knn")
KNN_METRICS = ("apdk", "l1")
SPLITS = ("train", "test")


@dataclass(frozen=True)
class RunConfig:
    """All pipeline knobs with their defaults.

    sigma=None means "use the codebook's mean nearest-centroid distance".
    Serializes to/from JSON losslessly.
    """

    manifest: str = ""
    out: str = ""
    patch: int = 9
    stride: int = 4
    pca_dim: int = 7
    vocab: int = 200
    rank_r: int = 16
    mode: str = "uncertainty"
    sigma: float | None = None
    top_t: int = 5
    epsilon: float = 1e-8
    classifier: str = "svm"
    knn_k: int = 1
    knn_metric: str = "apdk"
    svm_c: float = 1.0
    svm_tol: float = 1e-3
    hist_normalize: bool = True
    normalize_kernel: bool = False
    include_self_pairs: bool = False
    allow_self: bool = False
    split: str = "test"
    top_n: int = 30
    cutoffs: tuple[int, ...] = (5, 10, 15, 20, 30)
    seed: int = 0
    threads: int = 1

    def validate(self) -> None:
        if self.patch < 3 or self.patch % 2 == 0:
            raise ValueError(f"patch must be odd and >= 3, got {self.patch}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.pca_dim < 1:
            raise ValueError(f"pca-dim must be >= 1, got {self.pca_dim}")
        if self.pca_dim > self.patch * self.patch:
            raise ValueError(
                f"pca-dim {self.pca_dim} exceeds raw patch dimension {self.patch * self.patch}"
            )
        if self.vocab < 2:
            raise ValueError(f"vocab must be >= 2, got {self.vocab}")
        if self.rank_r < 1:
            raise ValueError(f"rank-r must be >= 1, got {self.rank_r}")
        if self.mode not in VARIANTS:
            raise ValueError(f"mode must be one of {VARIANTS}, got {self.mode!r}")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.top_t < 1:
            raise ValueError(f"top-t must be >= 1, got {self.top_t}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {CLASSIFIERS}, got {self.classifier!r}")
        if self.knn_k < 1:
            raise ValueError(f"k must be >= 1, got {self.knn_k}")
        if self.knn_metric not in KNN_METRICS:
            raise ValueError(f"knn-metric must be one of {KNN_METRICS}, got {self.knn_metric!r}")
        if self.svm_c <= 0:
            raise ValueError(f"c must be positive, got {self.svm_c}")
        if self.svm_tol <= 0:
            raise ValueError(f"tol must be positive, got {self.svm_tol}")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.top_n < 1:
            raise ValueError(f"top-n must be >= 1, got {self.top_n}")
        cuts = self.cutoffs
        if not cuts:
            raise ValueError("cutoffs must be nonempty")
        if any(c < 1 for c in cuts) or any(
            cuts[t] >= cuts[t + 1] for t in range(len(cuts) - 1)
        ):
            raise ValueError(f"cutoffs must be positive and strictly ascending, got {cuts}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cutoffs"] = list(self.cutoffs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "cutoffs" in kwargs and kwargs["cutoffs"] is not None:
            kwargs["cutoffs"] = tuple(int(c) for c in kwargs["cutoffs"])
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid config JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise DataError("config JSON must be an object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"unreadable config {path}: {exc}") from exc
        return cls.from_json(text)

    def merged(self, **overrides) -> "RunConfig":
        """Return a copy with every non-None override applied."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **changes)
