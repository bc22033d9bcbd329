"""Classifiers over precomputed kernels: k-NN and a one-vs-one SVM.

The SVM dual is solved by sequential minimal optimization on the precomputed
Gram matrix: pick the maximally KKT-violating pair (ties toward smaller
index), solve the two-variable subproblem analytically, repeat until the
violation gap drops below tol or an update cap is hit.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .errors import DataError
from .kernels import GramMatrix

_TAU = 1e-12  # curvature clamp for degenerate two-variable subproblems
_SUPPORT_EPS = 1e-12


@dataclass(frozen=True)
class LabeledSet:
    """Parallel ids and labels for a training set."""

    ids: tuple[str, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.labels):
            raise ValueError("ids and labels must have equal length")

    @property
    def n(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class BinarySvmModel:
    """One trained binary margin: decision(x) = sum_s coef_s k(x, s) + bias.

    support holds indices into the training set the model was fit against;
    coef holds alpha_s * y_s for those indices. label_pair is (positive,
    negative).
    """

    support: np.ndarray
    coef: np.ndarray
    bias: float
    C: float
    label_pair: tuple[str, str]
    objective_trace: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.support.shape != self.coef.shape:
            raise ValueError("support and coef must be parallel")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if abs(float(self.coef.sum())) > 1e-6:
            raise ValueError("dual coefficients must sum to 0 within 1e-6")


@dataclass(frozen=True)
class OvoSvmModel:
    """All pairwise binary models plus the sorted label list."""

    models: tuple[BinarySvmModel, ...]
    labels: tuple[str, ...]


@dataclass(frozen=True)
class TrainedModel:
    """Classifier artifact: the training ids/labels plus classifier state."""

    classifier: str  # "svm" | "knn"
    train_ids: tuple[str, ...]
    train_labels: tuple[str, ...]
    knn_k: int = 1
    knn_metric: str = "apdk"  # "apdk" (similarity) | "l1" (distance)
    svm: OvoSvmModel | None = None

    def __post_init__(self):
        if self.classifier not in ("svm", "knn"):
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if len(self.train_ids) != len(self.train_labels):
            raise ValueError("train ids and labels must have equal length")
        if self.classifier == "svm" and self.svm is None:
            raise ValueError("svm classifier requires svm model state")


def decision_function(model: BinarySvmModel, row: np.ndarray) -> float:
    """Evaluate one binary margin on a kernel row against the training set."""
    if model.support.size == 0:
        return float(model.bias)
    return float(model.coef @ row[model.support] + model.bias)


def knn_classify(
    scores: np.ndarray,
    labels: Sequence[str],
    k: int,
    mode: str = "similarity",
) -> str:
    """Majority label of the k best-scoring training items.

    mode "similarity" ranks by descending score, "distance" by ascending.
    Score ties rank the smaller training index first. Among tied majority
    labels, the label whose earliest-ranked neighbor appears first wins (the
    nearest neighbor's label when it is among the tied labels).
    """
    s = np.asarray(scores, dtype=np.float64)
    n = s.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if len(labels) != n:
        raise ValueError("scores and labels must have equal length")
    if not (1 <= k <= n):
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if mode == "similarity":
        order = np.argsort(-s, kind="stable")
    elif mode == "distance":
        order = np.argsort(s, kind="stable")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    top = order[:k]
    counts = Counter(labels[t] for t in top)
    best_count = max(counts.values())
    tied = {lab for lab, c in counts.items() if c == best_count}
    for t in top:
        if labels[t] in tied:
            return labels[t]
    raise AssertionError("unreachable: tied labels come from the top-k list")


def smo_train(
    gram: GramMatrix | np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 10_000,
    *,
    label_pair: tuple[str, str] = ("+1", "-1"),
    record_objective: bool = False,
) -> BinarySvmModel:
    """Solve the soft-margin dual on a precomputed kernel matrix.

    y holds +1/-1. Terminates when the largest KKT violation falls below tol
    or after max_passes pair updates. The bias is the mean of y_i - net_i
    over free support vectors, falling back to the violation-gap midpoint.
    """
    K = gram.values if isinstance(gram, GramMatrix) else np.asarray(gram, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("gram must be square")
    n = K.shape[0]
    yv = np.asarray(y, dtype=np.float64)
    if yv.shape != (n,):
        raise ValueError("y length must match gram size")
    if not np.all(np.isin(yv, (-1.0, 1.0))):
        raise ValueError("y entries must be +1 or -1")
    if not np.allclose(K, K.T, atol=1e-8):
        raise ValueError("gram must be symmetric")
    if not (np.any(yv > 0) and np.any(yv < 0)):
        raise ValueError("one-class input: need both +1 and -1 examples")
    if C <= 0 or tol <= 0:
        raise ValueError("C and tol must be positive")
    if max_passes < 1:
        raise ValueError("max_passes must be >= 1")

    Q = (yv[:, None] * yv[None, :]) * K
    alpha = np.zeros(n, dtype=np.float64)
    G = -np.ones(n, dtype=np.float64)  # gradient of 1/2 a'Qa - sum(a)
    trace: list[float] = []
    if record_objective:
        trace.append(0.0)

    m_gap = np.inf
    M_gap = -np.inf
    for _ in range(max_passes):
        v = -yv * G
        mask_up = ((yv > 0) & (alpha < C)) | ((yv < 0) & (alpha > 0))
        mask_low = ((yv < 0) & (alpha < C)) | ((yv > 0) & (alpha > 0))
        up_vals = np.where(mask_up, v, -np.inf)
        low_vals = np.where(mask_low, v, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        m_gap = float(up_vals[i])
        M_gap = float(low_vals[j])
        if m_gap - M_gap < tol:
            break

        if yv[i] != yv[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            ai = alpha[i] + delta
            aj = alpha[j] + delta
            # Clip to the [0, C] box along the constant-difference line.
            if diff > 0:
                if aj < 0:
                    ai, aj = diff, 0.0
                if ai > C:
                    ai, aj = C, C - diff
            else:
                if ai < 0:
                    ai, aj = 0.0, -diff
                if aj > C:
                    ai, aj = C + diff, C
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            ai = alpha[i] - delta
            aj = alpha[j] + delta
            # Clip to the box along the constant-sum line.
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
                if aj > C:
                    ai, aj = total - C, C
            else:
                if aj < 0:
                    ai, aj = total, 0.0
                if ai < 0:
                    ai, aj = 0.0, total
        dai = ai - alpha[i]
        daj = aj - alpha[j]
        alpha[i] = ai
        alpha[j] = aj
        G += Q[:, i] * dai + Q[:, j] * daj
        if record_objective:
            trace.append(0.5 * float(alpha.sum() - alpha @ G))

    free = (alpha > _SUPPORT_EPS) & (alpha < C - _SUPPORT_EPS)
    v = -yv * G
    if np.any(free):
        bias = float(np.mean(v[free]))
    else:
        bias = float((m_gap + M_gap) / 2.0)
    support = np.flatnonzero(alpha > _SUPPORT_EPS)
    coef = (alpha * yv)[support]
    return BinarySvmModel(
        support=support.astype(np.int64),
        coef=coef,
        bias=bias,
        C=float(C),
        label_pair=label_pair,
        objective_trace=tuple(trace) if record_objective else None,
    )


def svm_train_ovo(
    gram: GramMatrix,
    labeled: LabeledSet,
    C: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 10_000,
) -> OvoSvmModel:
    """Train one binary SVM per unordered label pair (lexicographic order).

    In each pair (a, b) with a < b, label a is the positive class. Support
    indices are remapped into the full training set.
    """
    if labeled.n != gram.n:
        raise ValueError("labeled set size must match gram size")
    labels = sorted(set(labeled.labels))
    if len(labels) < 2:
        raise ValueError("need at least two labels")
    models: list[BinarySvmModel] = []
    label_arr = np.array(labeled.labels)
    for a, b in combinations(labels, 2):
        idx = np.flatnonzero((label_arr == a) | (label_arr == b))
        y = np.where(label_arr[idx] == a, 1.0, -1.0)
        sub = gram.values[np.ix_(idx, idx)]
        local = smo_train(sub, y, C=C, tol=tol, max_passes=max_passes, label_pair=(a, b))
        models.append(
            BinarySvmModel(
                support=idx[local.support].astype(np.int64),
                coef=local.coef,
                bias=local.bias,
                C=local.C,
                label_pair=(a, b),
            )
        )
    return OvoSvmModel(models=tuple(models), labels=tuple(labels))


def svm_predict(model: OvoSvmModel, row: np.ndarray) -> str:
    """Majority vote over the pairwise margins for one kernel row.

    A positive decision votes for the pair's first label. Vote ties break
    toward the largest accumulated |decision| among the tied labels, then
    lexicographically.
    """
    votes: Counter[str] = Counter()
    strength: dict[str, float] = {lab: 0.0 for lab in model.labels}
    for bm in model.models:
        dec = decision_function(bm, row)
        winner = bm.label_pair[0] if dec > 0 else bm.label_pair[1]
        votes[winner] += 1
        strength[winner] += abs(dec)
    best = max(votes.values())
    tied = [lab for lab, c in votes.items() if c == best]
    tied.sort(key=lambda lab: (-strength[lab], lab))
    return tied[0]


@dataclass(frozen=True)
class CvResult:
    """Accuracies of repeated random splits plus their mean and spread."""

    per_repeat: tuple[float, ...]
    mean: float
    std: float


def cross_validate(
    labels: Sequence[str],
    classify_fn: Callable[[np.ndarray, np.ndarray], Sequence[str]],
    *,
    repeats: int = 20,
    test_size: int | float = 0.1,
    seed: int = 0,
) -> CvResult:
    """Repeated random splits: train on the remainder, test on a random subset.

    classify_fn receives sorted train and test index arrays and returns
    predicted labels for the test indices. Raises DataError when a split
    leaves any label absent from the training side. std uses ddof=1 when
    more than one repeat ran.
    """
    n = len(labels)
    if n < 2:
        raise ValueError("need at least 2 items")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if isinstance(test_size, float):
        count = max(1, round(test_size * n))
    else:
        count = int(test_size)
    if not (1 <= count <= n - 1):
        raise ValueError(f"test size {count} must leave a nonempty train side")
    label_arr = np.array(labels)
    all_labels = set(labels)
    rng = np.random.default_rng(seed)
    accs: list[float] = []
    for _ in range(repeats):
        perm = rng.permutation(n)
        test_idx = np.sort(perm[:count])
        train_idx = np.sort(perm[count:])
        train_labels = set(label_arr[train_idx])
        missing = all_labels - train_labels
        if missing:
            raise DataError(
                f"split leaves labels absent from training: {sorted(missing)}"
            )
        preds = list(classify_fn(train_idx, test_idx))
        truth = label_arr[test_idx]
        if len(preds) != len(truth):
            raise ValueError("classify_fn returned the wrong number of predictions")
        accs.append(float(np.mean([p == t for p, t in zip(preds, truth)])))
    mean = float(np.mean(accs))
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    return CvResult(per_repeat=tuple(accs), mean=mean, std=std)
