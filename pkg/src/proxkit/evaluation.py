"""Ranked retrieval, precision/recall at cutoffs, accuracy, and run reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .kernels import kernel_row
from .proximity import ProximityDistribution


@dataclass(frozen=True)
class RankedResult:
    """Retrieval ranking for one query: ids by descending kernel score.

    Score ties are ordered by id, so rankings are deterministic.
    """

    query_id: str
    ids: tuple[str, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.scores):
            raise ValueError("ids and scores must be parallel")
        if any(self.scores[t] < self.scores[t + 1] for t in range(len(self.scores) - 1)):
            raise ValueError("scores must be nonincreasing")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("result ids must be unique")


@dataclass(frozen=True)
class PrCurve:
    """Precision and recall at each requested cutoff.

    Relevance rule: a returned item is relevant when its label equals the
    query's label.
    """

    cutoffs: tuple[int, ...]
    precision: tuple[float, ...]
    recall: tuple[float, ...]


def retrieve(
    query_id: str,
    query: ProximityDistribution,
    db_ids: Sequence[str],
    db_dists: Sequence[ProximityDistribution],
    top_n: int,
    *,
    normalize: bool = False,
) -> RankedResult:
    """Rank a database by kernel value against the query, best first."""
    n = len(db_ids)
    if n == 0:
        raise ValueError("empty database")
    if len(db_dists) != n:
        raise ValueError("db_ids and db_dists must be parallel")
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    row = kernel_row(query, list(db_dists), normalize=normalize)
    order = sorted(range(n), key=lambda t: (-row[t], db_ids[t]))[: min(top_n, n)]
    return RankedResult(
        query_id=query_id,
        ids=tuple(db_ids[t] for t in order),
        scores=tuple(float(row[t]) for t in order),
    )


def precision_recall(
    result: RankedResult,
    query_label: str,
    db_labels: Mapping[str, str],
    cutoffs: Sequence[int],
) -> PrCurve:
    """Precision and recall of the top-c returns for each cutoff c.

    precision@c = relevant-in-top-c / c; recall@c = relevant-in-top-c /
    total-relevant-in-database. Raises DataError when the database holds no
    relevant item at all (recall undefined).
    """
    cuts = list(cutoffs)
    if not cuts:
        raise ValueError("cutoffs must be nonempty")
    if any(c < 1 for c in cuts) or any(cuts[t] >= cuts[t + 1] for t in range(len(cuts) - 1)):
        raise ValueError("cutoffs must be positive and strictly ascending")
    if cuts[-1] > len(result.ids):
        raise ValueError(
            f"cutoff {cuts[-1]} exceeds result length {len(result.ids)}"
        )
    total_relevant = sum(1 for lab in db_labels.values() if lab == query_label)
    if total_relevant == 0:
        raise DataError(
            f"no database item has label {query_label!r}; recall undefined"
        )
    flags = [1 if db_labels[i] == query_label else 0 for i in result.ids]
    cum = np.cumsum(flags)
    precision = tuple(float(cum[c - 1]) / c for c in cuts)
    recall = tuple(float(cum[c - 1]) / total_relevant for c in cuts)
    return PrCurve(cutoffs=tuple(cuts), precision=precision, recall=recall)


def accuracy(predictions: Sequence[str], truth: Sequence[str]) -> float:
    """Fraction of positions where prediction equals truth."""
    if len(predictions) != len(truth):
        raise ValueError("predictions and truth must have equal length")
    if len(truth) == 0:
        raise ValueError("cannot score an empty prediction list")
    return float(np.mean([p == t for p, t in zip(predictions, truth)]))


def build_report(
    config: Mapping,
    accuracy_rows: Sequence[Mapping],
    pr_table: Sequence[Mapping] | None,
    timings: Mapping[str, float],
    **extra,
) -> dict:
    """Assemble the run report. pr_table is omitted when empty or None."""
    report: dict = {
        "config": dict(config),
        "accuracy_by_mode": [dict(r) for r in accuracy_rows],
        "timings": {k: float(v) for k, v in timings.items()},
    }
    if pr_table:
        report["pr_table"] = [dict(r) for r in pr_table]
    report.update(extra)
    return report


def write_report(report: Mapping, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def report_to_csv(report: Mapping) -> str:
    """Flatten the accuracy and PR tables into one CSV text block."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    rows = report.get("accuracy_by_mode", [])
    if rows:
        keys = sorted({k for r in rows for k in r})
        writer.writerow(["table"] + keys)
        for r in rows:
            writer.writerow(["accuracy"] + [r.get(k, "") for k in keys])
    pr = report.get("pr_table", [])
    if pr:
        keys = sorted({k for r in pr for k in r})
        writer.writerow(["table"] + keys)
        for r in pr:
            writer.writerow(["pr"] + [r.get(k, "") for k in keys])
    return buf.getvalue()
