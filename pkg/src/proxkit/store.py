"""Persisted artifact store.

Directory layout:

    config.json              effective run configuration (JSON text)
    pca.bin                  projection model
    codebook.bin             centroids + fit statistics
    dists/<image-id>.bin     per-image sparse distribution + word histogram
    gram.bin                 training kernel matrix with its id list
    model.bin                trained classifier
    report.json              evaluation report (JSON text)

Every .bin file is framed as: magic b"APDX1" | 4-byte ASCII type tag |
u32 dim count | that many u32 dims | payload. Payload scalars are
little-endian: f64 floats, u64 counts, and strings as u64 byte length +
UTF-8 bytes. Writers write to a temp file in the same directory and rename
into place; readers reject wrong magic, wrong type, and trailing garbage.
Image ids are percent-encoded to form file names.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import quote, unquote

import numpy as np

from .codebook import Codebook
from .config import RunConfig
from .errors import ArtifactError
from .features import PcaModel
from .kernels import GramMatrix
from .learn import BinarySvmModel, OvoSvmModel, TrainedModel
from .proximity import ProximityDistribution, VwHistogram

MAGIC = b"APDX1"

TAG_PCA = b"PCA0"
TAG_CODEBOOK = b"CDBK"
TAG_DISTRIBUTION = b"DIST"
TAG_GRAM = b"GRAM"
TAG_MODEL = b"MODL"


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def u32(self, v: int) -> None:
        self.parts.append(struct.pack("<I", v))

    def u64(self, v: int) -> None:
        self.parts.append(struct.pack("<Q", v))

    def f64(self, v: float) -> None:
        self.parts.append(struct.pack("<d", v))

    def f64s(self, arr: np.ndarray) -> None:
        self.parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def u64s(self, arr: np.ndarray) -> None:
        self.parts.append(np.ascontiguousarray(arr, dtype="<u8").tobytes())

    def string(self, s: str) -> None:
        raw = s.encode("utf-8")
        self.u64(len(raw))
        self.parts.append(raw)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data = data
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ArtifactError(f"truncated artifact {self.name}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def f64s(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def u64s(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<u8").astype(np.int64)

    def string(self) -> str:
        n = self.u64()
        return self.take(n).decode("utf-8")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise ArtifactError(
                f"artifact {self.name} has {len(self.data) - self.pos} trailing bytes"
            )


def _frame(tag: bytes, dims: tuple[int, ...], payload: bytes) -> bytes:
    head = _Writer()
    head.parts.append(MAGIC)
    head.parts.append(tag)
    head.u32(len(dims))
    for d in dims:
        head.u32(d)
    return head.getvalue() + payload


def _open_frame(data: bytes, tag: bytes, name: str) -> tuple[tuple[int, ...], _Reader]:
    r = _Reader(data, name)
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise ArtifactError(f"bad magic in {name}: {magic!r}")
    found = r.take(len(tag))
    if found != tag:
        raise ArtifactError(
            f"wrong artifact type in {name}: expected {tag.decode()}, found {found!r}"
        )
    ndim = r.u32()
    if ndim > 16:
        raise ArtifactError(f"implausible dimension count {ndim} in {name}")
    dims = tuple(r.u32() for _ in range(ndim))
    return dims, r


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


@dataclass
class ArtifactStore:
    """Read/write access to one artifact directory."""

    root: Path

    def __init__(self, root: str | Path):
        self.root = Path(root)

    # -- paths ------------------------------------------------------------

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def pca_path(self) -> Path:
        return self.root / "pca.bin"

    @property
    def codebook_path(self) -> Path:
        return self.root / "codebook.bin"

    @property
    def gram_path(self) -> Path:
        return self.root / "gram.bin"

    @property
    def model_path(self) -> Path:
        return self.root / "model.bin"

    @property
    def report_path(self) -> Path:
        return self.root / "report.json"

    @property
    def dists_dir(self) -> Path:
        return self.root / "dists"

    def dist_path(self, image_id: str) -> Path:
        return self.dists_dir / (quote(image_id, safe="") + ".bin")

    def _read(self, path: Path) -> bytes:
        try:
            return path.read_bytes()
        except OSError as exc:
            raise ArtifactError(f"missing artifact: {path}") from exc

    # -- config / report ----------------------------------------------------

    def save_config(self, config: RunConfig) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        _write_atomic(self.config_path, config.to_json().encode("utf-8"))

    def load_config(self) -> RunConfig:
        data = self._read(self.config_path)
        return RunConfig.from_json(data.decode("utf-8"))

    def save_report(self, report: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
        _write_atomic(self.report_path, text.encode("utf-8"))

    def load_report(self) -> dict:
        return json.loads(self._read(self.report_path).decode("utf-8"))

    # -- PCA ----------------------------------------------------------------

    def save_pca(self, model: PcaModel) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        d_raw, d = model.basis.shape
        w = _Writer()
        w.f64s(model.mean)
        w.f64s(model.basis)
        w.f64s(model.explained_variance)
        _write_atomic(self.pca_path, _frame(TAG_PCA, (d_raw, d), w.getvalue()))

    def load_pca(self) -> PcaModel:
        dims, r = _open_frame(self._read(self.pca_path), TAG_PCA, str(self.pca_path))
        if len(dims) != 2:
            raise ArtifactError(f"bad dimension header in {self.pca_path}")
        d_raw, d = dims
        mean = r.f64s(d_raw)
        basis = r.f64s(d_raw * d).reshape(d_raw, d)
        explained = r.f64s(d)
        r.done()
        return PcaModel(mean=mean, basis=basis, explained_variance=explained)

    # -- codebook -------------------------------------------------------------

    def save_codebook(self, cb: Codebook) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        w = _Writer()
        w.f64s(cb.centroids)
        w.u64(cb.trained_on)
        w.f64(cb.mean_nn_dist)
        _write_atomic(self.codebook_path, _frame(TAG_CODEBOOK, (cb.K, cb.dim), w.getvalue()))

    def load_codebook(self) -> Codebook:
        dims, r = _open_frame(
            self._read(self.codebook_path), TAG_CODEBOOK, str(self.codebook_path)
        )
        if len(dims) != 2:
            raise ArtifactError(f"bad dimension header in {self.codebook_path}")
        K, d = dims
        centroids = r.f64s(K * d).reshape(K, d)
        trained_on = r.u64()
        mean_nn = r.f64()
        r.done()
        return Codebook(centroids=centroids, trained_on=trained_on, mean_nn_dist=mean_nn)

    # -- distributions ---------------------------------------------------------

    def save_distribution(
        self, image_id: str, dist: ProximityDistribution, hist: VwHistogram
    ) -> None:
        if hist.K != dist.K:
            raise ValueError("histogram and distribution vocabulary sizes differ")
        self.dists_dir.mkdir(parents=True, exist_ok=True)
        w = _Writer()
        w.f64s(hist.bins)
        w.u64s(dist.keys)
        w.f64s(dist.vectors)
        frame = _frame(TAG_DISTRIBUTION, (dist.K, dist.R, dist.nkeys), w.getvalue())
        _write_atomic(self.dist_path(image_id), frame)

    def load_distribution(self, image_id: str) -> tuple[ProximityDistribution, VwHistogram]:
        path = self.dist_path(image_id)
        dims, r = _open_frame(self._read(path), TAG_DISTRIBUTION, str(path))
        if len(dims) != 3:
            raise ArtifactError(f"bad dimension header in {path}")
        K, R, nkeys = dims
        bins = r.f64s(K)
        keys = r.u64s(nkeys)
        vectors = r.f64s(nkeys * R).reshape(nkeys, R) if nkeys else np.zeros((0, R))
        r.done()
        total = float(vectors[:, R - 1].sum()) if nkeys else 0.0
        dist = ProximityDistribution(K=K, R=R, keys=keys, vectors=vectors, total_mass=total)
        return dist, VwHistogram(bins=bins, normalized=False)

    def distribution_ids(self) -> list[str]:
        if not self.dists_dir.is_dir():
            return []
        return sorted(
            unquote(p.name[: -len(".bin")]) for p in self.dists_dir.glob("*.bin")
        )

    # -- gram -------------------------------------------------------------------

    def save_gram(self, gm: GramMatrix) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        w = _Writer()
        w.u64(gm.n)
        for i in gm.ids:
            w.string(i)
        w.f64s(gm.values)
        _write_atomic(self.gram_path, _frame(TAG_GRAM, (gm.n,), w.getvalue()))

    def load_gram(self) -> GramMatrix:
        dims, r = _open_frame(self._read(self.gram_path), TAG_GRAM, str(self.gram_path))
        if len(dims) != 1:
            raise ArtifactError(f"bad dimension header in {self.gram_path}")
        (n,) = dims
        count = r.u64()
        if count != n:
            raise ArtifactError(f"id count mismatch in {self.gram_path}")
        ids = tuple(r.string() for _ in range(n))
        values = r.f64s(n * n).reshape(n, n)
        r.done()
        return GramMatrix(values=values, ids=ids)

    # -- model --------------------------------------------------------------------

    def save_model(self, model: TrainedModel) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        w = _Writer()
        w.string(model.classifier)
        w.u64(model.knn_k)
        w.string(model.knn_metric)
        w.u64(len(model.train_ids))
        for i in model.train_ids:
            w.string(i)
        for lab in model.train_labels:
            w.string(lab)
        w.u64(1 if model.svm is not None else 0)
        if model.svm is not None:
            w.u64(len(model.svm.labels))
            for lab in model.svm.labels:
                w.string(lab)
            w.u64(len(model.svm.models))
            for bm in model.svm.models:
                w.string(bm.label_pair[0])
                w.string(bm.label_pair[1])
                w.f64(bm.C)
                w.f64(bm.bias)
                w.u64(bm.support.shape[0])
                w.u64s(bm.support)
                w.f64s(bm.coef)
        frame = _frame(TAG_MODEL, (len(model.train_ids),), w.getvalue())
        _write_atomic(self.model_path, frame)

    def load_model(self) -> TrainedModel:
        dims, r = _open_frame(self._read(self.model_path), TAG_MODEL, str(self.model_path))
        if len(dims) != 1:
            raise ArtifactError(f"bad dimension header in {self.model_path}")
        (n,) = dims
        classifier = r.string()
        knn_k = r.u64()
        knn_metric = r.string()
        count = r.u64()
        if count != n:
            raise ArtifactError(f"training id count mismatch in {self.model_path}")
        train_ids = tuple(r.string() for _ in range(n))
        train_labels = tuple(r.string() for _ in range(n))
        svm = None
        if r.u64():
            n_labels = r.u64()
            labels = tuple(r.string() for _ in range(n_labels))
            n_models = r.u64()
            models = []
            for _ in range(n_models):
                pos = r.string()
                neg = r.string()
                c = r.f64()
                bias = r.f64()
                n_support = r.u64()
                support = r.u64s(n_support)
                coef = r.f64s(n_support)
                models.append(
                    BinarySvmModel(
                        support=support,
                        coef=coef,
                        bias=bias,
                        C=c,
                        label_pair=(pos, neg),
                    )
                )
            svm = OvoSvmModel(models=tuple(models), labels=labels)
        r.done()
        return TrainedModel(
            classifier=classifier,
            train_ids=train_ids,
            train_labels=train_labels,
            knn_k=knn_k,
            knn_metric=knn_metric,
            svm=svm,
        )
