"""proxkit: visual-word proximity distributions for grayscale image matching.

Pipeline: dense patches -> PCA descriptors -> k-means vocabulary -> per-feature
word weights (hard or soft) -> spatial proximity distributions -> min-intersection
kernels -> k-NN / SVM classification and ranked retrieval.
"""

from .codebook import Codebook, assign_hard, distance, kmeans
from .config import RunConfig
from .contribution import ContributionMode, SoftAssignment, assign_all, contribute, gaussian
from .errors import ArtifactError, DataError
from .evaluation import (
    PrCurve,
    RankedResult,
    accuracy,
    build_report,
    precision_recall,
    retrieve,
)
from .features import FeatureSet, PcaModel, extract_features, extract_patches, fit_pca, transform
from .imageio import (
    DatasetManifest,
    GrayImage,
    ManifestEntry,
    generate_synthetic,
    load_image,
    load_manifest,
    write_manifest,
    write_pgm,
)
from .kernels import GramMatrix, gram, kernel_row, l1_distance, pdk
from .learn import (
    BinarySvmModel,
    CvResult,
    LabeledSet,
    OvoSvmModel,
    TrainedModel,
    cross_validate,
    knn_classify,
    smo_train,
    svm_predict,
    svm_train_ovo,
)
from .proximity import (
    ProximityDistribution,
    RankNeighbors,
    VwHistogram,
    build_distribution,
    rank_neighbors,
    vw_histogram,
)
from .store import ArtifactStore

__version__ = "0.1.0"

__all__ = [
    "ArtifactError",
    "ArtifactStore",
    "BinarySvmModel",
    "Codebook",
    "ContributionMode",
    "CvResult",
    "DataError",
    "DatasetManifest",
    "FeatureSet",
    "GramMatrix",
    "GrayImage",
    "LabeledSet",
    "ManifestEntry",
    "OvoSvmModel",
    "PcaModel",
    "PrCurve",
    "ProximityDistribution",
    "RankNeighbors",
    "RankedResult",
    "RunConfig",
    "SoftAssignment",
    "TrainedModel",
    "VwHistogram",
    "accuracy",
    "assign_all",
    "assign_hard",
    "build_distribution",
    "build_report",
    "contribute",
    "cross_validate",
    "distance",
    "extract_features",
    "extract_patches",
    "fit_pca",
    "gaussian",
    "generate_synthetic",
    "gram",
    "kernel_row",
    "kmeans",
    "knn_classify",
    "l1_distance",
    "load_image",
    "load_manifest",
    "pdk",
    "precision_recall",
    "rank_neighbors",
    "retrieve",
    "smo_train",
    "svm_predict",
    "svm_train_ovo",
    "transform",
    "vw_histogram",
    "write_manifest",
    "write_pgm",
]
