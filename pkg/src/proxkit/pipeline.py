"""End-to-end orchestration: train, classify, retrieve, sweep, cross-validate.

Commands run single-process; per-image work may fan out over a thread pool
capped by config.threads. Each image's representation depends only on that
image plus the fitted models, so results are independent of thread count.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .codebook import Codebook, kmeans
from .config import RunConfig
from .contribution import ContributionMode, assign_all
from .errors import ArtifactError, DataError
from .evaluation import accuracy, build_report, precision_recall, retrieve
from .features import FeatureSet, PcaModel, extract_patches, fit_pca, transform
from .imageio import DatasetManifest, ManifestEntry, generate_synthetic, load_image, load_manifest
from .kernels import GramMatrix, gram, kernel_row, l1_distance
from .learn import CvResult, LabeledSet, TrainedModel, cross_validate, knn_classify, svm_predict, svm_train_ovo
from .proximity import ProximityDistribution, VwHistogram, build_distribution, rank_neighbors, vw_histogram
from .store import ArtifactStore


def parallel_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Map preserving order; uses a thread pool when threads > 1."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@contextmanager
def _stage(name: str, timings: dict[str, float]) -> Iterator[None]:
    """Time a pipeline stage and prefix its errors with the stage name."""
    t0 = time.perf_counter()
    try:
        yield
    except (DataError, ArtifactError) as exc:
        raise type(exc)(f"{name} stage: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{name} stage: {exc}") from exc
    finally:
        timings[name] = time.perf_counter() - t0


def resolve_mode(config: RunConfig, cb: Codebook) -> ContributionMode:
    """Build the contribution mode, defaulting sigma to the codebook spread."""
    if config.mode == "hard":
        return ContributionMode("hard", sigma=None, top_t=config.top_t, epsilon=config.epsilon)
    sigma = config.sigma if config.sigma is not None else cb.mean_nn_dist
    if sigma <= 0:
        raise DataError(
            "codebook mean nearest-centroid distance is 0; pass an explicit sigma"
        )
    return ContributionMode(config.mode, sigma=sigma, top_t=config.top_t, epsilon=config.epsilon)


def _entry_ids(entries: Sequence[ManifestEntry]) -> list[str]:
    return [e.path for e in entries]


def _load_raw_patches(
    manifest: DatasetManifest,
    entries: Sequence[ManifestEntry],
    config: RunConfig,
) -> list[tuple[np.ndarray, np.ndarray]]:
    def one(entry: ManifestEntry) -> tuple[np.ndarray, np.ndarray]:
        img = load_image(manifest.resolve(entry))
        return extract_patches(img, config.patch, config.stride)

    return parallel_map(one, list(entries), config.threads)


def _representation(
    feats: np.ndarray,
    positions: np.ndarray,
    image_id: str,
    cb: Codebook,
    mode: ContributionMode,
    config: RunConfig,
) -> tuple[ProximityDistribution, VwHistogram]:
    fs = FeatureSet(descriptors=feats, positions=positions, source=image_id)
    sa = assign_all(cb, fs, mode)
    rn = rank_neighbors(fs, config.rank_r)
    dist = build_distribution(
        sa, rn, cb.K, config.rank_r, include_self=config.include_self_pairs
    )
    hist = vw_histogram(sa, cb.K)
    return dist, hist


def _fit_and_represent(
    raw: Sequence[tuple[np.ndarray, np.ndarray]],
    ids: Sequence[str],
    config: RunConfig,
    timings: dict[str, float],
) -> tuple[PcaModel, Codebook, ContributionMode, list[tuple[ProximityDistribution, VwHistogram]]]:
    """Fit PCA + codebook on the given images, then represent each of them."""
    with _stage("pca", timings):
        pca = fit_pca(np.vstack([r for r, _ in raw]), config.pca_dim, seed=config.seed)
    with _stage("codebook", timings):
        feats = [transform(pca, r) for r, _ in raw]
        cb = kmeans(np.vstack(feats), config.vocab, seed=config.seed)
    mode = resolve_mode(config, cb)
    with _stage("representations", timings):
        reps = parallel_map(
            lambda t: _representation(feats[t], raw[t][1], ids[t], cb, mode, config),
            range(len(raw)),
            config.threads,
        )
    return pca, cb, mode, reps


def run_train(config: RunConfig) -> dict:
    """Fit every training artifact and persist it under config.out."""
    config.validate()
    if not config.manifest:
        raise DataError("train needs a manifest path")
    if not config.out:
        raise DataError("train needs an output directory")
    timings: dict[str, float] = {}
    manifest = load_manifest(config.manifest)
    train = manifest.train_entries()
    if not train:
        raise DataError("manifest has no train entries")
    ids = _entry_ids(train)
    labels = [e.label for e in train]
    store = ArtifactStore(config.out)

    with _stage("features", timings):
        raw = _load_raw_patches(manifest, train, config)
    pca, cb, mode, reps = _fit_and_represent(raw, ids, config, timings)
    with _stage("persist", timings):
        store.save_pca(pca)
        store.save_codebook(cb)
        for image_id, (dist, hist) in zip(ids, reps):
            store.save_distribution(image_id, dist, hist)
    with _stage("gram", timings):
        gm = gram([d for d, _ in reps], ids, normalize=config.normalize_kernel)
        store.save_gram(gm)
    with _stage("classifier", timings):
        model = _fit_classifier(gm, ids, labels, config)
        store.save_model(model)
    store.save_config(config)
    return {
        "images": len(train),
        "vocab": cb.K,
        "sigma": mode.sigma,
        "out": str(store.root),
        "timings": timings,
    }


def _fit_classifier(
    gm: GramMatrix, ids: Sequence[str], labels: Sequence[str], config: RunConfig
) -> TrainedModel:
    labeled = LabeledSet(ids=tuple(ids), labels=tuple(labels))
    if config.classifier == "svm":
        ovo = svm_train_ovo(gm, labeled, C=config.svm_c, tol=config.svm_tol)
        return TrainedModel(
            classifier="svm",
            train_ids=tuple(ids),
            train_labels=tuple(labels),
            knn_k=config.knn_k,
            knn_metric=config.knn_metric,
            svm=ovo,
        )
    return TrainedModel(
        classifier="knn",
        train_ids=tuple(ids),
        train_labels=tuple(labels),
        knn_k=config.knn_k,
        knn_metric=config.knn_metric,
        svm=None,
    )


def _query_entries(manifest: DatasetManifest, config: RunConfig) -> list[ManifestEntry]:
    entries = manifest.test_entries() if config.split == "test" else manifest.train_entries()
    if not entries:
        raise DataError(f"manifest has no {config.split} entries")
    return entries


def _query_representations(
    store: ArtifactStore,
    manifest: DatasetManifest,
    entries: Sequence[ManifestEntry],
    pca: PcaModel,
    cb: Codebook,
    mode: ContributionMode,
    config: RunConfig,
    train_ids: Sequence[str],
) -> list[tuple[ProximityDistribution, VwHistogram]]:
    """Queries from the train split reuse stored artifacts; test queries are computed."""
    train_set = set(train_ids)

    def one(entry: ManifestEntry) -> tuple[ProximityDistribution, VwHistogram]:
        if config.split == "train" and entry.path in train_set:
            return store.load_distribution(entry.path)
        img = load_image(manifest.resolve(entry))
        raw, positions = extract_patches(img, config.patch, config.stride)
        return _representation(
            transform(pca, raw), positions, entry.path, cb, mode, config
        )

    return parallel_map(one, list(entries), config.threads)


def _normalized(hist: VwHistogram) -> VwHistogram:
    total = float(hist.bins.sum())
    if total <= 0:
        raise DataError("cannot normalize an all-zero word histogram")
    return VwHistogram(bins=hist.bins / total, normalized=True)


def run_classify(store: ArtifactStore, config: RunConfig) -> dict:
    """Predict labels for one split against the stored training artifacts."""
    config.validate()
    timings: dict[str, float] = {}
    manifest = load_manifest(config.manifest)
    entries = _query_entries(manifest, config)
    pca = store.load_pca()
    cb = store.load_codebook()
    model = store.load_model()
    mode = resolve_mode(config, cb)
    with _stage("train_artifacts", timings):
        train_reps = [store.load_distribution(i) for i in model.train_ids]
    train_dists = [d for d, _ in train_reps]
    train_labels = list(model.train_labels)
    with _stage("query_representations", timings):
        qreps = _query_representations(
            store, manifest, entries, pca, cb, mode, config, model.train_ids
        )
    with _stage("scoring", timings):
        if config.classifier == "knn" and config.knn_metric == "l1":
            if config.hist_normalize:
                train_hists = [_normalized(h) for _, h in train_reps]
            else:
                train_hists = [h for _, h in train_reps]
        predictions: list[str] = []
        for entry, (qdist, qhist) in zip(entries, qreps):
            self_idx = None
            if config.split == "train" and not config.allow_self:
                try:
                    self_idx = model.train_ids.index(entry.path)
                except ValueError:
                    self_idx = None
            if config.classifier == "svm":
                if model.svm is None:
                    raise ArtifactError("stored model has no SVM state; retrain with --classifier svm")
                row = kernel_row(qdist, train_dists, normalize=config.normalize_kernel)
                predictions.append(svm_predict(model.svm, row))
            elif config.knn_metric == "apdk":
                row = kernel_row(qdist, train_dists, normalize=config.normalize_kernel)
                if self_idx is not None:
                    row[self_idx] = -np.inf
                predictions.append(
                    knn_classify(row, train_labels, config.knn_k, mode="similarity")
                )
            else:
                q = _normalized(qhist) if config.hist_normalize else qhist
                d = np.array([l1_distance(q, th) for th in train_hists])
                if self_idx is not None:
                    d[self_idx] = np.inf
                predictions.append(
                    knn_classify(d, train_labels, config.knn_k, mode="distance")
                )
    truth = [e.label for e in entries]
    acc = accuracy(predictions, truth)
    row = {
        "mode": config.mode,
        "vocab": cb.K,
        "classifier": config.classifier,
        "metric": config.knn_metric if config.classifier == "knn" else "apdk",
        "split": config.split,
        "accuracy": acc,
        "n_queries": len(entries),
    }
    detail = [
        {"id": e.path, "truth": t, "predicted": p}
        for e, t, p in zip(entries, truth, predictions)
    ]
    report = build_report(config.to_dict(), [row], None, timings, predictions=detail)
    store.save_report(report)
    return report


def run_retrieve(store: ArtifactStore, config: RunConfig) -> dict:
    """Rank the training database for each query; report precision/recall."""
    config.validate()
    timings: dict[str, float] = {}
    manifest = load_manifest(config.manifest)
    entries = _query_entries(manifest, config)
    pca = store.load_pca()
    cb = store.load_codebook()
    model = store.load_model()
    mode = resolve_mode(config, cb)
    with _stage("train_artifacts", timings):
        db_dists = [store.load_distribution(i)[0] for i in model.train_ids]
    db_ids = list(model.train_ids)
    db_labels = dict(zip(model.train_ids, model.train_labels))
    with _stage("query_representations", timings):
        qreps = _query_representations(
            store, manifest, entries, pca, cb, mode, config, model.train_ids
        )
    top_n = max(config.top_n, max(config.cutoffs))
    per_query: list[dict] = []
    sums: dict[int, list[float]] = {}
    with _stage("ranking", timings):
        for entry, (qdist, _) in zip(entries, qreps):
            ids = db_ids
            dists = db_dists
            if config.split == "train" and not config.allow_self and entry.path in db_labels:
                keep = [t for t, i in enumerate(db_ids) if i != entry.path]
                ids = [db_ids[t] for t in keep]
                dists = [db_dists[t] for t in keep]
            result = retrieve(
                entry.path, qdist, ids, dists, top_n, normalize=config.normalize_kernel
            )
            cuts = [c for c in config.cutoffs if c <= len(result.ids)]
            qrow: dict = {
                "query": entry.path,
                "label": entry.label,
                "returned": list(result.ids[: config.top_n]),
            }
            if cuts:
                labels_in_db = {i: db_labels[i] for i in ids}
                pr = precision_recall(result, entry.label, labels_in_db, cuts)
                qrow["cutoffs"] = list(pr.cutoffs)
                qrow["precision"] = list(pr.precision)
                qrow["recall"] = list(pr.recall)
                for c, p, r in zip(pr.cutoffs, pr.precision, pr.recall):
                    sums.setdefault(c, [0.0, 0.0, 0.0])
                    sums[c][0] += p
                    sums[c][1] += r
                    sums[c][2] += 1.0
            per_query.append(qrow)
    pr_table = [
        {
            "cutoff": c,
            "precision": sums[c][0] / sums[c][2],
            "recall": sums[c][1] / sums[c][2],
            "n_queries": int(sums[c][2]),
        }
        for c in sorted(sums)
    ]
    report = build_report(
        config.to_dict(), [], pr_table or None, timings, retrieval=per_query
    )
    store.save_report(report)
    return report


def run_sweep(
    config: RunConfig,
    vocab_sizes: Sequence[int],
    modes: Sequence[str],
) -> dict:
    """Train + classify one cell per (vocab, mode); failures do not stop the sweep."""
    config.validate()
    if not vocab_sizes or not modes:
        raise DataError("sweep needs at least one vocab size and one mode")
    out_root = Path(config.out)
    out_root.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    t0 = time.perf_counter()
    for K in vocab_sizes:
        for mode in modes:
            cell = replace(config, vocab=int(K), mode=mode, out=str(out_root / f"K{K}_{mode}"))
            try:
                cell.validate()
                run_train(cell)
                rep = run_classify(ArtifactStore(cell.out), cell)
                acc_row = rep["accuracy_by_mode"][0]
                rows.append(
                    {
                        "vocab": int(K),
                        "mode": mode,
                        "classifier": cell.classifier,
                        "accuracy": acc_row["accuracy"],
                        "status": "ok",
                    }
                )
            except Exception as exc:  # sweep cells fail independently
                rows.append(
                    {
                        "vocab": int(K),
                        "mode": mode,
                        "classifier": config.classifier,
                        "status": "failed",
                        "error": f"{type(exc).__name__}: {exc}",
                    }
                )
    timings = {"sweep": time.perf_counter() - t0}
    report = build_report(config.to_dict(), rows, None, timings)
    from .evaluation import write_report

    write_report(report, out_root / "report.json")
    return report


def run_synth(out_dir: str, classes: int, per_class: int, side: int, seed: int) -> Path:
    manifest = generate_synthetic(out_dir, classes, per_class, side, seed)
    return manifest.root / "manifest.tsv"


def cross_validate_pipeline(
    config: RunConfig,
    *,
    repeats: int = 20,
    test_size: int | float = 0.1,
) -> CvResult:
    """Repeated random re-splits of the whole manifest, retraining per repeat.

    Patch extraction is shared across repeats; PCA, codebook, and classifier
    are refit on each random training side.
    """
    config.validate()
    manifest = load_manifest(config.manifest)
    entries = list(manifest.entries)
    if len(entries) < 2:
        raise DataError("cross-validation needs at least 2 images")
    labels = [e.label for e in entries]
    ids = _entry_ids(entries)
    raw = _load_raw_patches(manifest, entries, config)

    def classify_fn(train_idx: np.ndarray, test_idx: np.ndarray) -> list[str]:
        timings: dict[str, float] = {}
        train_raw = [raw[t] for t in train_idx]
        train_ids = [ids[t] for t in train_idx]
        train_labels = [labels[t] for t in train_idx]
        pca, cb, mode, reps = _fit_and_represent(train_raw, train_ids, config, timings)
        gm = gram([d for d, _ in reps], train_ids, normalize=config.normalize_kernel)
        model = _fit_classifier(gm, train_ids, train_labels, config)
        train_dists = [d for d, _ in reps]
        if config.classifier == "knn" and config.knn_metric == "l1":
            if config.hist_normalize:
                train_hists = [_normalized(h) for _, h in reps]
            else:
                train_hists = [h for _, h in reps]
        preds: list[str] = []
        for t in test_idx:
            feats = transform(pca, raw[t][0])
            qdist, qhist = _representation(feats, raw[t][1], ids[t], cb, mode, config)
            if config.classifier == "svm":
                row = kernel_row(qdist, train_dists, normalize=config.normalize_kernel)
                preds.append(svm_predict(model.svm, row))
            elif config.knn_metric == "apdk":
                row = kernel_row(qdist, train_dists, normalize=config.normalize_kernel)
                preds.append(knn_classify(row, train_labels, config.knn_k, mode="similarity"))
            else:
                q = _normalized(qhist) if config.hist_normalize else qhist
                d = np.array([l1_distance(q, th) for th in train_hists])
                preds.append(knn_classify(d, train_labels, config.knn_k, mode="distance"))
        return preds

    return cross_validate(
        labels, classify_fn, repeats=repeats, test_size=test_size, seed=config.seed
    )
