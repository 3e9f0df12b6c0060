"""Ranking and confusion-matrix metrics for outlier detectors.

Scores are ranked in descending order with ties broken by ascending id, the
same rule the filters use when flagging.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @staticmethod
    def _ratio(num: float, den: float) -> float:
        return num / den if den > 0 else math.nan

    @property
    def dr(self) -> float:
        """Detection rate (recall), TP / (TP + FN)."""
        return self._ratio(self.tp, self.tp + self.fn)

    @property
    def fpr(self) -> float:
        return self._ratio(self.fp, self.fp + self.tn)

    @property
    def precision(self) -> float:
        return self._ratio(self.tp, self.tp + self.fp)

    @property
    def tnr(self) -> float:
        return self._ratio(self.tn, self.tn + self.fp)

    def rates(self) -> dict[str, float]:
        return {"dr": self.dr, "fpr": self.fpr, "precision": self.precision, "tnr": self.tnr}

    def undefined(self) -> list[str]:
        """Names of ratios whose denominator is zero."""
        return [k for k, v in self.rates().items() if math.isnan(v)]


def confusion(flags, truth) -> ConfusionCounts:
    flags = np.asarray(flags).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if flags.shape != truth.shape:
        raise ValueError(f"flags {flags.shape} and truth {truth.shape} differ in length")
    return ConfusionCounts(
        tp=int(np.sum(flags & truth)),
        fp=int(np.sum(flags & ~truth)),
        fn=int(np.sum(~flags & truth)),
        tn=int(np.sum(~flags & ~truth)),
    )


@dataclass(frozen=True, eq=False)
class RankedScores:
    """Records in rank order: ``ids[0]`` is the most outlying."""

    ids: np.ndarray
    scores: np.ndarray
    truth: np.ndarray  # aligned with ids, i.e. truth of the record at each rank

    @property
    def n(self) -> int:
        return self.ids.shape[0]


def rank(scores, truth, ids=None) -> RankedScores:
    """Sort descending by score, ties by ascending id."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(np.int8)
    if scores.shape != truth.shape:
        raise ValueError(f"scores {scores.shape} and truth {truth.shape} differ in length")
    if np.isnan(scores).any():
        raise ValueError("scores contain NaN")
    ids = np.arange(scores.shape[0]) if ids is None else np.asarray(ids, dtype=np.int64)
    order = np.lexsort((ids, -scores))
    return RankedScores(ids=ids[order], scores=scores[order], truth=truth[order])


def precision_at_k(ranked: RankedScores, kappa: int) -> float:
    """Fraction of true outliers among the top ``kappa`` ranks."""
    if not 1 <= kappa <= ranked.n:
        raise ValueError(f"kappa must be in [1, {ranked.n}], got {kappa}")
    return int(ranked.truth[:kappa].sum()) / kappa


def pr_curve(ranked: RankedScores) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Precision and recall after each rank: (kappa, precision@kappa, recall@kappa)."""
    positives = int(ranked.truth.sum())
    if positives == 0:
        raise ValueError("no true outliers; recall is undefined")
    hits = np.cumsum(ranked.truth, dtype=np.int64)
    kappa = np.arange(1, ranked.n + 1)
    return kappa, hits / kappa, hits / positives


def auc_pr(ranked: RankedScores) -> float:
    """Area under the precision-recall curve by step integration.

    Equals the mean of precision@kappa over the ranks that hold a true
    outlier (average precision).
    """
    positives = int(ranked.truth.sum())
    if positives == 0:
        raise ValueError("no true outliers; AUC-PR is undefined")
    hits = np.cumsum(ranked.truth, dtype=np.int64)
    at = np.flatnonzero(ranked.truth)
    return math.fsum(hits[at] / (at + 1)) / positives


@dataclass(frozen=True)
class LabeledSet:
    """A partition of the data from which a labeled sample was drawn.

    u is the partition size, v the number of sampled records labeled, phi
    the fraction of those labeled outliers, and ``flagged`` whether the
    detector under study marks this partition as outliers.
    """

    u: float
    v: int
    phi: float
    flagged: bool = False
    name: str = ""

    def __post_init__(self):
        if not 0 <= self.phi <= 1:
            raise ValueError(f"phi must be in [0, 1], got {self.phi}")
        if self.v > self.u:
            raise ValueError(f"labeled count v={self.v} exceeds set size u={self.u}")
        if self.v == 0 and self.u > 0:
            raise ValueError(f"set {self.name or '?'} is nonempty but has no labeled records")

    @property
    def estimated_outliers(self) -> float:
        return self.u * self.phi


@dataclass(frozen=True)
class PopulationEstimate:
    per_set: tuple[float, ...]
    on_all: dict[str, float]
    on_labeled: dict[str, float]
    expected_all: tuple[float, float, float, float]  # tp, fp, fn, tn


def _rates(tp, fp, fn, tn) -> dict[str, float]:
    def r(a, b):
        return a / b if b > 0 else math.nan

    return {"dr": r(tp, tp + fn), "fpr": r(fp, fp + tn), "precision": r(tp, tp + fp), "tnr": r(tn, tn + fp)}


def estimate_population(sets: Sequence[LabeledSet]) -> PopulationEstimate:
    """Extrapolate confusion rates from labeled samples to whole partitions.

    Each set contributes ``u * phi`` estimated outliers.  Sets the detector
    flags add their outliers to TP and the rest to FP; unflagged sets add to
    FN and TN.  ``on_labeled`` applies the same arithmetic to the labeled
    counts ``v``.
    """
    def tally(size):
        tp = fp = fn = tn = 0.0
        for s in sets:
            pos, neg = size(s) * s.phi, size(s) * (1 - s.phi)
            if s.flagged:
                tp, fp = tp + pos, fp + neg
            else:
                fn, tn = fn + pos, tn + neg
        return tp, fp, fn, tn

    all_counts = tally(lambda s: s.u)
    return PopulationEstimate(
        per_set=tuple(s.estimated_outliers for s in sets),
        on_all=_rates(*all_counts),
        on_labeled=_rates(*tally(lambda s: s.v)),
        expected_all=all_counts,
    )
