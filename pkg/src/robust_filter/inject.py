"""Labeled synthetic outliers by perturbation.

``q * N`` records are chosen at random, copied, and the copy's target
attribute is shifted up by a uniform draw from the open interval (0, alpha).
The copies are appended and labeled as outliers; the originals stay
untouched and are labeled normal.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset, _write_table, column, write_csv

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InjectionSpec:
    q: float
    target: str
    alpha: float = 50.0
    mode: str = "behavioral"
    standardize_range: tuple[float, float] | None = (18.0, 30.0)
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.q <= 1:
            raise ValueError(f"q must be in [0, 1], got {self.q}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.mode not in ("behavioral", "contextual"):
            raise ValueError(f"mode must be 'behavioral' or 'contextual', got {self.mode!r}")
        if self.standardize_range is not None:
            lo, hi = self.standardize_range
            if not lo < hi:
                raise ValueError(f"standardize_range needs lo < hi, got {self.standardize_range}")
            object.__setattr__(self, "standardize_range", (float(lo), float(hi)))


@dataclass(eq=False)
class InjectedDataset:
    dataset: Dataset
    truth: np.ndarray
    provenance: dict[int, int]
    spec: InjectionSpec

    @property
    def source_ids(self) -> np.ndarray:
        """Per record: the id it was copied from, or -1 for originals."""
        src = np.full(self.dataset.n, -1, dtype=np.int64)
        for k, v in self.provenance.items():
            src[k] = v
        return src


def standardize(values: np.ndarray, lo: float = 18.0, hi: float = 30.0) -> np.ndarray:
    """Affinely map ``values`` so that min -> lo and max -> hi."""
    v = np.asarray(values, dtype=np.float64)
    vmin, vmax = v.min(), v.max()
    if not vmax > vmin:
        raise ValueError("cannot standardize a constant column")
    out = lo + (v - vmin) * ((hi - lo) / (vmax - vmin))
    # pin the endpoints against rounding
    out[v == vmin] = lo
    out[v == vmax] = hi
    return out


def _open_uniform_shift(rng: np.random.Generator, base: np.ndarray, alpha: float) -> np.ndarray:
    """base + U(0, alpha), redrawn until the realized shift lies strictly inside (0, alpha)."""
    out = base + rng.uniform(0.0, alpha, size=base.shape)
    bad = ~((out - base > 0) & (out - base < alpha))
    while bad.any():
        out[bad] = base[bad] + rng.uniform(0.0, alpha, size=int(bad.sum()))
        bad = ~((out - base > 0) & (out - base < alpha))
    return out


def inject(dataset: Dataset, spec: InjectionSpec) -> InjectedDataset:
    """Append ``floor(q N)`` perturbed copies of randomly chosen records.

    The target column (the behavioral attribute, or in contextual mode the
    chosen contextual attribute) is first rescaled to ``standardize_range``
    when one is set.  Sources are drawn without replacement.
    """
    j = dataset.index(spec.target)
    N = dataset.n
    k = math.floor(spec.q * N)
    values = np.array(dataset.values)
    if spec.standardize_range is not None:
        values[:, j] = standardize(values[:, j], *spec.standardize_range)

    if k == 0:
        if spec.q > 0:
            log.warning("q=%g with N=%d injects no records", spec.q, N)
        out = Dataset(schema=dataset.schema, values=values)
        return InjectedDataset(out, np.zeros(N, dtype=np.int8), {}, spec)

    rng = np.random.default_rng(spec.seed)
    src = np.sort(rng.choice(N, size=k, replace=False))
    copies = values[src].copy()
    copies[:, j] = _open_uniform_shift(rng, copies[:, j], spec.alpha)
    out = Dataset(schema=dataset.schema, values=np.vstack([values, copies]))
    truth = np.concatenate([np.zeros(N, dtype=np.int8), np.ones(k, dtype=np.int8)])
    provenance = {N + i: int(s) for i, s in enumerate(src)}
    return InjectedDataset(out, truth, provenance, spec)


def pick_contextual_target(dataset: Dataset, behavior: str) -> str:
    """Contextual attribute with the largest absolute Pearson correlation to ``behavior``."""
    y = column(dataset, behavior)
    candidates = [a for a in dataset.schema if a != behavior]
    if not candidates:
        raise ValueError("dataset has no contextual attributes")
    if len(candidates) == 1:
        return candidates[0]
    if not np.ptp(y) > 0:
        raise ValueError(f"behavior {behavior!r} is constant")
    best, best_rho = None, -1.0
    for a in candidates:
        x = column(dataset, a)
        if not np.ptp(x) > 0:
            continue
        rho = abs(float(np.corrcoef(x, y)[0, 1]))
        if rho > best_rho:
            best, best_rho = a, rho
    if best is None:
        raise ValueError("every contextual attribute is constant")
    return best


def write_injected(result: InjectedDataset, out_dir: str | Path) -> dict[str, str]:
    """Write ``data.csv``, ``truth.csv`` (id, truth, source_id) and ``injection.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "data": out_dir / "data.csv",
        "truth": out_dir / "truth.csv",
        "injection": out_dir / "injection.json",
    }
    write_csv(result.dataset, paths["data"])
    ids = np.arange(result.dataset.n)
    _write_table(
        paths["truth"], ("id", "truth", "source_id"),
        zip(ids.tolist(), result.truth.tolist(), result.source_ids.tolist()),
    )
    spec = asdict(result.spec)
    spec["n_original"] = int((result.truth == 0).sum())
    spec["n_injected"] = int(result.truth.sum())
    with open(paths["injection"], "w", encoding="utf-8") as fh:
        json.dump(spec, fh, indent=2)
        fh.write("\n")
    return {k: str(v) for k, v in paths.items()}
