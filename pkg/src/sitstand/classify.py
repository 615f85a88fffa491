"""Multivariate time-series classification: z-normalized DTW nearest neighbors.

Distances use dependent (multichannel-joint) dynamic time warping under a
Sakoe-Chiba band: the per-step cost is the squared Euclidean distance across
all channels, and the warping path may stray at most `band` cells from the
diagonal, where band = max(ceil(band_fraction · max(len_a, len_b)),
|len_a − len_b|). An independent-sum variant (one DTW per channel, summed) is
available as a configuration switch.

The DP runs as a vectorized anti-diagonal wavefront, which keeps a pair of
300-frame trials well under 10 ms without any compiled extension.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .acquisition import TrialPacket
from .base import (
    DimensionMismatch,
    EmptyTestSet,
    EmptyTrainingSet,
    NotFitted,
    ParamsMixin,
    canonical_json,
    check_matrix,
)
from .pipeline import AlignedTrial, resample_uniform, total_load


@dataclass(frozen=True)
class FeatureSeries:
    """Per-trial feature matrix [frames, channels], optionally z-normalized."""

    values: np.ndarray
    znormed: bool = False


@dataclass(frozen=True)
class ClassResult:
    predicted_label: str
    neighbor_ids: tuple[str, ...]
    distances: tuple[float, ...]
    margin: float | None


def znorm(x: np.ndarray) -> np.ndarray:
    """Per-column (x − mean) / population std; constant columns map to zeros."""
    arr = np.asarray(x, dtype=float)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr.reshape(-1, 1)
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    out = (arr - mean) / safe
    out[:, std == 0] = 0.0
    return out[:, 0] if squeeze else out


class ZNormalizer(ParamsMixin):
    """Stateless per-column z-normalization transformer."""

    def fit(self, X=None, y=None) -> "ZNormalizer":
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        return znorm(X)


def _values(x: Any) -> np.ndarray:
    return x.values if isinstance(x, FeatureSeries) else np.asarray(x, dtype=float)


def band_width(len_a: int, len_b: int, band_fraction: float) -> int:
    if not 0 < band_fraction <= 1:
        raise ValueError("band_fraction must be in (0, 1]")
    return max(math.ceil(band_fraction * max(len_a, len_b)), abs(len_a - len_b))


def dtw_distance(
    a: Any,
    b: Any,
    band_fraction: float = 1.0,
    channel_mode: str = "dependent",
) -> float:
    """Optimal warped path cost between two feature series.

    Symmetric in (a, b); zero for identical inputs; never below the diagonal
    (pointwise) cost for equal-length inputs.
    """
    A = check_matrix(_values(a), "a")
    B = check_matrix(_values(b), "b")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    if channel_mode == "dependent":
        cost = _pointwise_cost(A, B)
        return _banded_path_cost(cost, band_width(len(A), len(B), band_fraction))
    if channel_mode == "independent":
        w = band_width(len(A), len(B), band_fraction)
        return float(
            sum(
                _banded_path_cost(_pointwise_cost(A[:, [c]], B[:, [c]]), w)
                for c in range(A.shape[1])
            )
        )
    raise ValueError(f"unknown channel_mode {channel_mode!r}")


def _pointwise_cost(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance across columns for every (i, j)."""
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijc,ijc->ij", diff, diff)


def _banded_path_cost(cost: np.ndarray, band: int) -> float:
    """Anti-diagonal wavefront DP over a cost matrix with a |i−j| ≤ band constraint."""
    n, m = cost.shape
    i_grid = np.arange(n)[:, None]
    j_grid = np.arange(m)[None, :]
    cost = np.where(np.abs(i_grid - j_grid) <= band, cost, np.inf)

    prev1 = np.array([cost[0, 0]])
    prev1_lo = 0
    prev2: np.ndarray | None = None
    prev2_lo = 0
    if n + m == 2:
        return float(prev1[0])
    for d in range(1, n + m - 1):
        i_lo = max(0, d - m + 1)
        i_hi = min(n - 1, d)
        i = np.arange(i_lo, i_hi + 1)
        c = cost[i, d - i]
        up = _gather(prev1, prev1_lo, i - 1)
        left = _gather(prev1, prev1_lo, i)
        if prev2 is None:
            best = np.minimum(up, left)
        else:
            diag = _gather(prev2, prev2_lo, i - 1)
            best = np.minimum(np.minimum(up, left), diag)
        cur = c + best
        prev2, prev2_lo = prev1, prev1_lo
        prev1, prev1_lo = cur, i_lo
    return float(prev1[-1])


def _gather(vals: np.ndarray, lo: int, want: np.ndarray) -> np.ndarray:
    """Values at absolute indices `want` from a diagonal stored from index `lo`; inf outside."""
    idx = want - lo
    ok = (idx >= 0) & (idx < len(vals))
    out = np.full(want.shape, np.inf)
    out[ok] = vals[idx[ok]]
    return out


def pairwise_distance_matrix(
    series: Sequence[Any],
    band_fraction: float = 0.1,
    channel_mode: str = "dependent",
    assume_symmetric: bool = True,
) -> np.ndarray:
    """DTW distances between every pair. assume_symmetric=False computes both triangles."""
    n = len(series)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if j == i:
                out[i, j] = dtw_distance(series[i], series[i], band_fraction, channel_mode)
            elif j > i or not assume_symmetric:
                out[i, j] = dtw_distance(series[i], series[j], band_fraction, channel_mode)
            else:
                out[i, j] = out[j, i]
    return out


def trial_features(
    trial: AlignedTrial,
    include_total: bool = True,
    normalize: bool = True,
) -> FeatureSeries:
    """Feature matrix for one aligned trial: corner loads, optionally plus total."""
    cols = [trial.loads_kg]
    if include_total:
        cols.append(total_load(trial)[:, None])
    values = np.hstack(cols)
    if normalize:
        values = znorm(values)
    return FeatureSeries(values=values, znormed=normalize)


def features_from_packet(
    packet: TrialPacket,
    grid_rate_hz: float | None = None,
    include_total: bool = True,
    normalize: bool = True,
) -> FeatureSeries:
    return trial_features(resample_uniform(packet, grid_rate_hz), include_total, normalize)


class KnnDtwClassifier(ParamsMixin):
    """k-nearest-neighbor classifier under the banded DTW distance.

    Ties in the neighbor vote break toward the label with the smaller summed
    distance, then the lexicographically smaller label, so predictions are
    deterministic regardless of training-set order.
    """

    def __init__(
        self,
        n_neighbors: int = 1,
        band_fraction: float = 0.1,
        channel_mode: str = "dependent",
    ):
        self.n_neighbors = n_neighbors
        self.band_fraction = band_fraction
        self.channel_mode = channel_mode

    def fit(self, X: Sequence[Any], y: Sequence[str], ids: Sequence[str] | None = None) -> "KnnDtwClassifier":
        if len(X) == 0:
            raise EmptyTrainingSet("training set is empty")
        if len(X) != len(y):
            raise ValueError("X and y must have equal length")
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        self.train_X_ = [check_matrix(_values(x), "X") for x in X]
        width = {m.shape[1] for m in self.train_X_}
        if len(width) != 1:
            raise DimensionMismatch(f"training series disagree on column count: {sorted(width)}")
        self.train_y_ = [str(label) for label in y]
        self.train_ids_ = [str(i) for i in ids] if ids is not None else [str(i) for i in range(len(X))]
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "train_X_"):
            raise NotFitted("call fit() before predicting")

    def classify(self, x: Any) -> ClassResult:
        self._check_fitted()
        query = check_matrix(_values(x), "x")
        dists = np.array(
            [dtw_distance(query, train, self.band_fraction, self.channel_mode) for train in self.train_X_]
        )
        order = np.argsort(dists, kind="stable")
        k = min(self.n_neighbors, len(order))
        top = order[:k]
        label = _vote([self.train_y_[i] for i in top], dists[top])
        margin = float(dists[order[1]] - dists[order[0]]) if len(order) >= 2 and k >= 2 else None
        return ClassResult(
            predicted_label=label,
            neighbor_ids=tuple(self.train_ids_[i] for i in top),
            distances=tuple(float(dists[i]) for i in top),
            margin=margin,
        )

    def predict(self, X: Sequence[Any]) -> list[str]:
        return [self.classify(x).predicted_label for x in X]

    def kneighbors(self, x: Any, k: int | None = None) -> tuple[tuple[str, ...], tuple[float, ...]]:
        result = self.classify(x)
        k = k or self.n_neighbors
        return result.neighbor_ids[:k], result.distances[:k]


def _vote(labels: Sequence[str], distances: np.ndarray) -> str:
    counts = Counter(labels)
    best_count = max(counts.values())
    tied = [label for label, c in counts.items() if c == best_count]
    if len(tied) == 1:
        return tied[0]
    sums = {
        label: float(sum(d for lab, d in zip(labels, distances) if lab == label))
        for label in tied
    }
    return min(tied, key=lambda label: (sums[label], label))


@dataclass(frozen=True)
class TrialOutcome:
    trial_id: str
    true_label: str
    predicted_label: str
    margin: float | None
    neighbor_ids: tuple[str, ...]
    distances: tuple[float, ...]


@dataclass(frozen=True)
class Report:
    accuracy: float
    labels: tuple[str, ...]
    confusion: tuple[tuple[int, ...], ...]  # rows true, columns predicted
    outcomes: tuple[TrialOutcome, ...]
    n_train: int
    n_test: int
    n_neighbors: int
    band_fraction: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "labels": list(self.labels),
            "confusion": [list(row) for row in self.confusion],
            "outcomes": [
                {
                    "trial_id": o.trial_id,
                    "true_label": o.true_label,
                    "predicted_label": o.predicted_label,
                    "margin": o.margin,
                    "neighbor_ids": list(o.neighbor_ids),
                    "distances": list(o.distances),
                }
                for o in self.outcomes
            ],
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_neighbors": self.n_neighbors,
            "band_fraction": self.band_fraction,
        }

    def to_json(self) -> bytes:
        return canonical_json(self.to_dict())

    def to_text(self) -> str:
        width = max([len(l) for l in self.labels] + [9])
        lines = [
            f"accuracy: {self.accuracy:.4f}  ({sum(r[i] for i, r in enumerate(self.confusion))}/{self.n_test})",
            f"k={self.n_neighbors} band={self.band_fraction} train={self.n_train} test={self.n_test}",
            "",
            " " * (width + 2) + "  ".join(f"{l:>{width}}" for l in self.labels) + "   (predicted)",
        ]
        for label, row in zip(self.labels, self.confusion):
            lines.append(f"{label:>{width}} |" + "  ".join(f"{v:>{width}}" for v in row))
        lines.append("")
        for o in self.outcomes:
            mark = "ok " if o.true_label == o.predicted_label else "MISS"
            margin = f"{o.margin:.4f}" if o.margin is not None else "-"
            lines.append(f"{mark} {o.trial_id}  true={o.true_label} predicted={o.predicted_label} margin={margin}")
        return "\n".join(lines) + "\n"


def _build_report(
    outcomes: list[TrialOutcome],
    n_train: int,
    n_neighbors: int,
    band_fraction: float,
) -> Report:
    labels = tuple(sorted({o.true_label for o in outcomes} | {o.predicted_label for o in outcomes}))
    index = {label: i for i, label in enumerate(labels)}
    matrix = [[0] * len(labels) for _ in labels]
    for o in outcomes:
        matrix[index[o.true_label]][index[o.predicted_label]] += 1
    correct = sum(1 for o in outcomes if o.true_label == o.predicted_label)
    outcomes_sorted = tuple(sorted(outcomes, key=lambda o: o.trial_id))
    return Report(
        accuracy=correct / len(outcomes),
        labels=labels,
        confusion=tuple(tuple(row) for row in matrix),
        outcomes=outcomes_sorted,
        n_train=n_train,
        n_test=len(outcomes),
        n_neighbors=n_neighbors,
        band_fraction=band_fraction,
    )


def evaluate(
    train: Sequence[tuple[str, str, Any]],
    test: Sequence[tuple[str, Any]],
    truth: Mapping[str, str],
    n_neighbors: int = 1,
    band_fraction: float = 0.1,
    channel_mode: str = "dependent",
) -> Report:
    """Score a held-out test set against a labeled training set.

    `train` holds (trial_id, label, features); `test` holds (trial_id,
    features); `truth` maps test trial_id → true label and lives outside the
    test store by design.
    """
    if len(test) == 0:
        raise EmptyTestSet("test set is empty")
    clf = KnnDtwClassifier(n_neighbors, band_fraction, channel_mode).fit(
        [f for _, _, f in train],
        [label for _, label, _ in train],
        ids=[tid for tid, _, _ in train],
    )
    outcomes = []
    for trial_id, features in test:
        if trial_id not in truth:
            raise KeyError(f"no true label in the manifest for test trial {trial_id}")
        result = clf.classify(features)
        outcomes.append(
            TrialOutcome(
                trial_id=trial_id,
                true_label=truth[trial_id],
                predicted_label=result.predicted_label,
                margin=result.margin,
                neighbor_ids=result.neighbor_ids,
                distances=result.distances,
            )
        )
    return _build_report(outcomes, n_train=len(train), n_neighbors=n_neighbors, band_fraction=band_fraction)


def leave_one_out(
    items: Sequence[tuple[str, str, Any]],
    n_neighbors: int = 1,
    band_fraction: float = 0.1,
    channel_mode: str = "dependent",
    distances: np.ndarray | None = None,
) -> Report:
    """Leave-one-out evaluation over (trial_id, label, features) triples."""
    if len(items) < 2:
        raise EmptyTestSet("leave-one-out needs at least 2 trials")
    if distances is None:
        distances = pairwise_distance_matrix([f for _, _, f in items], band_fraction, channel_mode)
    outcomes = []
    for i, (trial_id, label, _) in enumerate(items):
        row = distances[i].copy()
        row[i] = np.inf
        order = np.argsort(row, kind="stable")
        k = min(n_neighbors, len(items) - 1)
        top = order[:k]
        predicted = _vote([items[j][1] for j in top], row[top])
        margin = float(row[order[1]] - row[order[0]]) if len(items) > 2 and k >= 2 else None
        outcomes.append(
            TrialOutcome(
                trial_id=trial_id,
                true_label=label,
                predicted_label=predicted,
                margin=margin,
                neighbor_ids=tuple(items[j][0] for j in top),
                distances=tuple(float(row[j]) for j in top),
            )
        )
    return _build_report(outcomes, n_train=len(items) - 1, n_neighbors=n_neighbors, band_fraction=band_fraction)
