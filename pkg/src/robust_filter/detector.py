"""Run several filters over one dataset and combine their verdicts.

A record is flagged when any filter flags it; its combined score is the mean
``t`` over the filters that scored it (a transform may exclude a record from
some filters).
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset, _write_table
from .em import EMSettings, FilterFit, fit
from .templates import CorrelationTemplate, TemplateError, compile_template


@dataclass(eq=False)
class DetectionReport:
    names: list[str]
    per_filter: dict[str, FilterFit]
    combined_flags: np.ndarray
    combined_scores: np.ndarray
    coverage: np.ndarray
    excluded: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.combined_flags.shape[0]

    @property
    def unscored(self) -> np.ndarray:
        """Ids no filter could score."""
        return np.flatnonzero(self.coverage == 0)

    def filter_columns(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Per-record t and flag of one filter over all n records (NaN/0 when unscored)."""
        f = self.per_filter[name]
        t = np.full(self.n, np.nan)
        flags = np.zeros(self.n, dtype=np.int8)
        t[f.row_ids] = f.t
        flags[f.row_ids] = f.flags
        return t, flags

    def overlap(self) -> np.ndarray:
        """C x C matrix of records flagged by both filter i and filter j."""
        F = np.array([self.filter_columns(k)[1] for k in self.names], dtype=np.int64)
        return F @ F.T

    def summary(self) -> dict:
        filters = {}
        for k in self.names:
            f = self.per_filter[k]
            filters[k] = {
                "n_scored": int(f.t.shape[0]),
                "n_excluded": int(self.excluded.get(k, np.empty(0)).shape[0]),
                "p": f.params.p,
                "sigma2": f.params.sigma2,
                "b": f.params.b,
                "K": f.K,
                "iterations": f.iterations,
                "converged": f.converged,
            }
        return {
            "n": self.n,
            "n_flagged": int(self.combined_flags.sum()),
            "n_unscored": int(self.unscored.shape[0]),
            "filters": filters,
            "overlap": {"names": list(self.names), "counts": self.overlap().tolist()},
        }


def _threads() -> int:
    env = os.environ.get("OUTLIER_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def combine(n: int, names: Sequence[str], fits: dict[str, FilterFit]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """OR the flags, average the scores over scoring filters, count coverage."""
    flags = np.zeros(n, dtype=np.int8)
    total = np.zeros(n)
    coverage = np.zeros(n, dtype=np.int64)
    # fixed filter order keeps the floating-point sums reproducible
    for k in names:
        f = fits[k]
        flags[f.row_ids] |= f.flags
        total[f.row_ids] += f.t
        coverage[f.row_ids] += 1
    scores = np.divide(total, coverage, out=np.zeros(n), where=coverage > 0)
    return flags, scores, coverage


def detect(
    dataset: Dataset,
    templates: Sequence[CorrelationTemplate],
    settings: EMSettings | None = None,
    max_workers: int | None = None,
) -> DetectionReport:
    """Fit one filter per template and combine them.

    Compilation errors are re-raised with the offending template's name.
    Filters are fitted concurrently (at most ``OUTLIER_THREADS`` threads when
    that variable is set); each fit is independent and deterministic.
    """
    if not templates:
        raise TemplateError("at least one template is required")
    names = [t.name for t in templates]
    if len(set(names)) != len(names):
        raise TemplateError(f"duplicate template names: {names}")
    settings = settings or EMSettings()

    designs, excluded = {}, {}
    for t in templates:
        try:
            designs[t.name], excluded[t.name] = compile_template(t, dataset)
        except (TemplateError, KeyError) as exc:
            raise TemplateError(f"template {t.name!r}: {exc}") from exc

    workers = min(len(templates), max_workers or _threads())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {k: pool.submit(fit, designs[k], settings) for k in names}
            fits = {k: futures[k].result() for k in names}
    else:
        fits = {k: fit(designs[k], settings) for k in names}

    flags, scores, coverage = combine(dataset.n, names, fits)
    return DetectionReport(
        names=names, per_filter=fits, combined_flags=flags, combined_scores=scores,
        coverage=coverage, excluded=excluded,
    )


def export(report: DetectionReport, path: str | Path) -> None:
    """Write the labeled dataset: id, combined score and flag, then t and flag per filter."""
    header = ["id", "combined_score", "combined_flag"]
    cols = [np.arange(report.n), report.combined_scores, report.combined_flags]
    for k in report.names:
        t, f = report.filter_columns(k)
        header += [f"{k}_t", f"{k}_flag"]
        cols += [t, f]
    rows = zip(*(c.tolist() for c in cols))
    _write_table(path, header, rows)


def write_summary(report: DetectionReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.summary(), fh, indent=2)
        fh.write("\n")
