"""Run-configuration serialization and the binary artifact store."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from proxkit.codebook import kmeans
from proxkit.config import RunConfig
from proxkit.errors import ArtifactError, DataError
from proxkit.features import fit_pca
from proxkit.kernels import GramMatrix
from proxkit.learn import LabeledSet, TrainedModel, svm_train_ovo
from proxkit.proximity import ProximityDistribution, VwHistogram
from proxkit.store import ArtifactStore


class TestRunConfig:
    def test_defaults_are_valid(self):
        cfg = RunConfig()
        cfg.validate()
        assert cfg.patch == 9
        assert cfg.stride == 4
        assert cfg.pca_dim == 7
        assert cfg.vocab == 200
        assert cfg.rank_r == 16
        assert cfg.mode == "uncertainty"
        assert cfg.sigma is None
        assert cfg.top_t == 5
        assert cfg.epsilon == 1e-8
        assert cfg.classifier == "svm"
        assert cfg.knn_metric == "apdk"
        assert cfg.hist_normalize is True
        assert cfg.normalize_kernel is False
        assert cfg.include_self_pairs is False
        assert cfg.allow_self is False
        assert cfg.split == "test"
        assert cfg.cutoffs == (5, 10, 15, 20, 30)
        assert cfg.threads == 1

    def test_json_round_trip(self):
        cfg = RunConfig(manifest="m.tsv", out="/tmp/x", sigma=0.3, cutoffs=(1, 2, 9))
        back = RunConfig.from_json(cfg.to_json())
        assert back == cfg
        assert back.cutoffs == (1, 2, 9)
        # None sigma survives the trip too.
        assert RunConfig.from_json(RunConfig().to_json()).sigma is None

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(DataError, match="unknown config keys"):
            RunConfig.from_dict({"patch": 9, "patchh": 3})

    def test_from_json_rejects_garbage(self):
        with pytest.raises(DataError, match="invalid config JSON"):
            RunConfig.from_json("{not json")
        with pytest.raises(DataError, match="must be an object"):
            RunConfig.from_json("[1, 2]")

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="unreadable config"):
            RunConfig.load(tmp_path / "nope.json")

    def test_merged_skips_none_overrides(self):
        cfg = RunConfig(vocab=32)
        out = cfg.merged(vocab=None, mode="hard", sigma=None)
        assert out.vocab == 32
        assert out.mode == "hard"
        assert out.sigma is None

    @pytest.mark.parametrize(
        "kwargs, match",
        [
            ({"patch": 8}, "odd"),
            ({"vocab": 1}, "vocab"),
            ({"mode": "fuzzy"}, "mode"),
            ({"cutoffs": (5, 5)}, "ascending"),
            ({"cutoffs": ()}, "nonempty"),
            ({"threads": 0}, "threads"),
            ({"pca_dim": 100, "patch": 9}, "exceeds"),
            ({"knn_metric": "cosine"}, "knn-metric"),
            ({"split": "validation"}, "split"),
        ],
    )
    def test_validate_rejects(self, kwargs, match):
        with pytest.raises(ValueError, match=match):
            RunConfig(**kwargs).validate()


@pytest.fixture
def store(tmp_path):
    return ArtifactStore(tmp_path / "artifacts")


def _hand_distribution():
    dist = ProximityDistribution(
        K=2, R=2,
        keys=np.array([1, 2], dtype=np.int64),
        vectors=np.array([[1.0, 1.0], [0.0, 2.0]]),
        total_mass=3.0,
    )
    hist = VwHistogram(bins=np.array([3.0, 1.0]), normalized=False)
    return dist, hist


class TestStoreRoundTrips:
    def test_config(self, store):
        cfg = RunConfig(manifest="a.tsv", vocab=16, sigma=1.5)
        store.save_config(cfg)
        assert store.load_config() == cfg

    def test_report(self, store):
        report = {"config": {"vocab": 8}, "accuracy_by_mode": [], "timings": {"x": 0.5}}
        store.save_report(report)
        assert store.load_report() == report

    def test_pca(self, store, rng):
        model = fit_pca(rng.normal(size=(40, 6)), 3)
        store.save_pca(model)
        back = store.load_pca()
        assert_array_equal(back.mean, model.mean)
        assert_array_equal(back.basis, model.basis)
        assert_array_equal(back.explained_variance, model.explained_variance)

    def test_codebook(self, store, rng):
        X = np.vstack([rng.normal(size=(12, 3)), rng.normal(size=(12, 3)) + 8.0])
        cb = kmeans(X, 3, seed=0)
        store.save_codebook(cb)
        back = store.load_codebook()
        assert_array_equal(back.centroids, cb.centroids)
        assert back.trained_on == cb.trained_on
        assert back.mean_nn_dist == cb.mean_nn_dist

    def test_distribution_with_histogram(self, store):
        dist, hist = _hand_distribution()
        store.save_distribution("img-7", dist, hist)
        dist2, hist2 = store.load_distribution("img-7")
        assert dist2.K == 2 and dist2.R == 2
        assert_array_equal(dist2.keys, dist.keys)
        assert_array_equal(dist2.vectors, dist.vectors)
        assert dist2.total_mass == 3.0
        assert_array_equal(hist2.bins, hist.bins)
        assert hist2.normalized is False

    def test_distribution_rejects_vocab_mismatch(self, store):
        dist, _ = _hand_distribution()
        bad = VwHistogram(bins=np.zeros(5), normalized=False)
        with pytest.raises(ValueError, match="vocabulary sizes differ"):
            store.save_distribution("x", dist, bad)

    def test_gram(self, store):
        gm = GramMatrix(values=np.array([[2.0, 1.0], [1.0, 3.0]]), ids=("a", "b"))
        store.save_gram(gm)
        back = store.load_gram()
        assert back.ids == ("a", "b")
        assert_array_equal(back.values, gm.values)

    def test_svm_model(self, store):
        labeled = LabeledSet(ids=("i0", "i1", "i2", "i3"), labels=("a", "a", "b", "b"))
        ovo = svm_train_ovo(
            GramMatrix(values=np.eye(4), ids=labeled.ids), labeled, C=1.0
        )
        model = TrainedModel(
            classifier="svm",
            train_ids=labeled.ids,
            train_labels=labeled.labels,
            svm=ovo,
        )
        store.save_model(model)
        back = store.load_model()
        assert back.classifier == "svm"
        assert back.train_ids == model.train_ids
        assert back.train_labels == model.train_labels
        assert back.knn_k == model.knn_k
        assert back.knn_metric == model.knn_metric
        assert back.svm.labels == ovo.labels
        assert len(back.svm.models) == len(ovo.models)
        for got, want in zip(back.svm.models, ovo.models):
            assert got.label_pair == want.label_pair
            assert got.C == want.C
            assert got.bias == want.bias
            assert_array_equal(got.support, want.support)
            assert_array_equal(got.coef, want.coef)
            # Fit diagnostics stay in memory only.
            assert got.objective_trace is None

    def test_knn_model(self, store):
        model = TrainedModel(
            classifier="knn",
            train_ids=("p", "q"),
            train_labels=("a", "b"),
            knn_k=2,
            knn_metric="l1",
        )
        store.save_model(model)
        back = store.load_model()
        assert back.classifier == "knn"
        assert back.knn_k == 2
        assert back.knn_metric == "l1"
        assert back.svm is None


class TestStoreFraming:
    def test_missing_artifact(self, store):
        with pytest.raises(ArtifactError, match="missing artifact"):
            store.load_pca()

    def test_bad_magic(self, store, rng):
        store.save_pca(fit_pca(rng.normal(size=(20, 4)), 2))
        data = store.pca_path.read_bytes()
        store.pca_path.write_bytes(b"JUNKYARD" + data[8:])
        with pytest.raises(ArtifactError, match="bad magic"):
            store.load_pca()

    def test_wrong_type_tag(self, store, rng):
        X = np.vstack([rng.normal(size=(8, 2)), rng.normal(size=(8, 2)) + 6.0])
        store.save_codebook(kmeans(X, 2, seed=0))
        store.pca_path.write_bytes(store.codebook_path.read_bytes())
        with pytest.raises(ArtifactError, match="wrong artifact type"):
            store.load_pca()

    def test_truncated_payload(self, store, rng):
        store.save_pca(fit_pca(rng.normal(size=(20, 4)), 2))
        data = store.pca_path.read_bytes()
        store.pca_path.write_bytes(data[:-4])
        with pytest.raises(ArtifactError, match="truncated"):
            store.load_pca()

    def test_trailing_bytes(self, store, rng):
        store.save_pca(fit_pca(rng.normal(size=(20, 4)), 2))
        data = store.pca_path.read_bytes()
        store.pca_path.write_bytes(data + b"\x00")
        with pytest.raises(ArtifactError, match="trailing bytes"):
            store.load_pca()


class TestDistributionIds:
    def test_id_escaping_round_trip(self, store):
        dist, hist = _hand_distribution()
        ugly = "cls/img 01.png"
        store.save_distribution(ugly, dist, hist)
        assert "%2F" in store.dist_path(ugly).name
        assert store.dist_path(ugly).exists()
        back, _ = store.load_distribution(ugly)
        assert_array_equal(back.keys, dist.keys)
        assert store.distribution_ids() == [ugly]

    def test_empty_store_lists_nothing(self, store):
        assert store.distribution_ids() == []

    def test_ids_sorted(self, store):
        dist, hist = _hand_distribution()
        for name in ("zz", "aa", "mm"):
            store.save_distribution(name, dist, hist)
        assert store.distribution_ids() == ["aa", "mm", "zz"]
