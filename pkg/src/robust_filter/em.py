"""Linear regression with Gaussian/Cauchy mixture noise, fitted by EM.

Each record's residual is modeled as Gaussian(0, sigma2) with probability
1 - p and Cauchy with scale b with probability p.  The E step computes the
posterior probability ``t_i`` that record i came from the Cauchy component
and refreshes ``b`` from the absolute residuals of the most suspicious
records; the M step re-estimates ``p``, ``sigma2`` and the coefficients ``w``
by weighted least squares with weights ``1 - t_i``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit

from .dataset import _write_table
from .templates import DesignMatrix

PI_E2 = math.pi * math.e**2
P_CLAMP = 1e-9
SIGMA2_FLOOR = 1e-12
RIDGE_SCALE = 1e-8
_SINGULAR_RCOND = 1e-12


class EMError(RuntimeError):
    """A fit hit a non-finite parameter or cannot proceed."""


class DegenerateFitError(EMError):
    """Every record carries outlier probability 1; the Gaussian part is empty."""


class RidgeFallbackWarning(RuntimeWarning):
    pass


@dataclass
class EMSettings:
    init_p: float = 0.05
    init_sigma2: float = 1.0
    init_b: float = PI_E2
    # "first": w = (1, 0, ..., 0); "ols": ordinary least squares; or explicit coefficients
    init_w_rule: str | Sequence[float] = "first"
    max_iterations: int = 100
    tolerance: float = 1e-6

    def __post_init__(self):
        if not 0 <= self.init_p <= 1:
            raise ValueError("init_p must lie in [0, 1]")
        if not self.init_sigma2 > 0 or not self.init_b > 0:
            raise ValueError("init_sigma2 and init_b must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance >= 0:
            raise ValueError("tolerance must be non-negative")


@dataclass(frozen=True)
class FilterParams:
    w: np.ndarray
    sigma2: float
    p: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=np.float64))

    def is_valid(self) -> bool:
        return (
            bool(np.all(np.isfinite(self.w)))
            and math.isfinite(self.sigma2) and self.sigma2 > 0
            and math.isfinite(self.b) and self.b > 0
            and 0 <= self.p <= 1
        )

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "sigma2": self.sigma2, "p": self.p, "b": self.b}


@dataclass(eq=False)
class FilterFit:
    params: FilterParams
    t: np.ndarray
    K: int
    flags: np.ndarray
    iterations: int
    converged: bool
    row_ids: np.ndarray | None = None
    history: list[dict] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.row_ids is None:
            self.row_ids = np.arange(self.t.shape[0])

    def to_dict(self) -> dict:
        return {**self.params.to_dict(), "iterations": self.iterations, "converged": self.converged}


def residuals(params: FilterParams, design: DesignMatrix) -> np.ndarray:
    """r_i = y_i - w . x_i"""
    if params.w.shape != (design.d,):
        raise ValueError(f"w has shape {params.w.shape}, design has {design.d} columns")
    return design.y - design.X @ params.w


def log_odds(params: FilterParams, r: np.ndarray) -> np.ndarray:
    """Posterior log-odds that each residual came from the Cauchy component."""
    p = min(max(params.p, P_CLAMP), 1.0 - P_CLAMP)
    const = math.log(p / (1.0 - p)) + 0.5 * math.log(params.b * params.sigma2 / PI_E2)
    return const + r * r / (2.0 * params.sigma2)


def update_t(params: FilterParams, design: DesignMatrix, r: np.ndarray | None = None) -> np.ndarray:
    """Outlier probabilities ``t_i = sigmoid(log-odds)``; ``p`` is clamped to
    ``[1e-9, 1 - 1e-9]`` so the logit stays finite."""
    if r is None:
        r = residuals(params, design)
    return expit(log_odds(params, r))


def expected_count(t: np.ndarray) -> int:
    """K = floor(sum t), with an exactly rounded sum so K is order independent."""
    return int(math.floor(math.fsum(t)))


def top_k_order(t: np.ndarray) -> np.ndarray:
    """Indices by descending t, ties by ascending index."""
    return np.argsort(-t, kind="stable")


def flag_top_k(t: np.ndarray) -> tuple[int, np.ndarray]:
    """Flag the K = floor(sum t) records with the largest t (ties: lower id first)."""
    t = np.asarray(t, dtype=np.float64)
    K = expected_count(t)
    flags = np.zeros(t.shape[0], dtype=np.int8)
    flags[top_k_order(t)[: min(K, t.shape[0])]] = 1
    return K, flags


def update_b(
    params: FilterParams, t: np.ndarray, design: DesignMatrix, r: np.ndarray | None = None
) -> float:
    """Reciprocal median absolute residual over the top-K records by t.

    The previous ``b`` is kept when K is 0 or the median is 0.
    """
    if r is None:
        r = residuals(params, design)
    K = min(expected_count(t), t.shape[0])
    if K == 0:
        return params.b
    med = float(np.median(np.abs(r[top_k_order(t)[:K]])))
    if not med > 0:
        return params.b
    return 1.0 / med


def update_p(t: np.ndarray) -> float:
    t = np.asarray(t, dtype=np.float64)
    if t.size == 0:
        raise ValueError("t is empty")
    return math.fsum(t) / t.size


def update_sigma2(
    t: np.ndarray,
    params: FilterParams,
    design: DesignMatrix,
    complement: np.ndarray | None = None,
    r: np.ndarray | None = None,
) -> float:
    """Weighted residual variance ``sum (1-t) r^2 / (n - sum t)``.

    ``complement`` may carry ``1 - t`` computed without cancellation (for
    example ``sigmoid(-z)``); when t saturates at 1.0 in floating point this
    keeps the tiny inlier weights that ``1 - t`` would round to zero.
    """
    if r is None:
        r = residuals(params, design)
    if complement is None:
        weights = 1.0 - np.asarray(t, dtype=np.float64)
        denom = t.shape[0] - math.fsum(t)
    else:
        weights = complement
        denom = math.fsum(complement)
    if not denom > 0:
        raise DegenerateFitError(
            f"all {t.shape[0]} records have outlier probability 1 (n - sum t = {denom:g})"
        )
    s2 = math.fsum(weights * r * r) / denom
    return max(s2, SIGMA2_FLOOR)


def weighted_lstsq(X: np.ndarray, y: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Solve ``(X^T W X) w = X^T W y``; a singular system gets a small ridge."""
    top = float(np.max(weights)) if weights.size else 0.0
    if not top > 0:
        raise DegenerateFitError("no record has positive inlier weight")
    # the solution is invariant to a common weight scale; rescaling avoids underflow
    weights = weights / top
    Xw = X * weights[:, None]
    A = Xw.T @ X
    c = Xw.T @ y
    d = A.shape[0]
    trace = float(np.trace(A))
    if not trace > 0:
        raise DegenerateFitError("weighted normal matrix is zero; no record has inlier weight")
    eig = np.linalg.eigvalsh(A)
    if eig[0] <= _SINGULAR_RCOND * eig[-1]:
        lam = RIDGE_SCALE * trace / d
        warnings.warn(
            f"singular weighted normal matrix (eigenvalue ratio {eig[0] / eig[-1]:.2e}); "
            f"adding ridge {lam:.3g}",
            RidgeFallbackWarning,
            stacklevel=3,
        )
        A = A + lam * np.eye(d)
    return linalg.cho_solve(linalg.cho_factor(A), c)


def update_w(t: np.ndarray, design: DesignMatrix, complement: np.ndarray | None = None) -> np.ndarray:
    """Weighted least squares with weights ``1 - t_i`` (``V_ii^2``)."""
    weights = 1.0 - np.asarray(t, dtype=np.float64) if complement is None else complement
    return weighted_lstsq(design.X, design.y, weights)


def initial_params(design: DesignMatrix, settings: EMSettings) -> FilterParams:
    rule = settings.init_w_rule
    if isinstance(rule, str):
        if rule == "first":
            w = np.zeros(design.d)
            w[0] = 1.0
        elif rule == "ols":
            w = weighted_lstsq(design.X, design.y, np.ones(design.n))
        else:
            raise ValueError(f"unknown init_w_rule {rule!r}")
    else:
        w = np.asarray(rule, dtype=np.float64)
        if w.shape != (design.d,):
            raise ValueError(f"initial w has shape {w.shape}, design has {design.d} columns")
    return FilterParams(w=w, sigma2=settings.init_sigma2, p=settings.init_p, b=settings.init_b)


def relative_change(old: FilterParams, new: FilterParams) -> float:
    dw = np.max(np.abs(new.w - old.w) / np.maximum(1.0, np.abs(old.w)), initial=0.0)
    return max(
        float(dw),
        abs(new.sigma2 - old.sigma2) / old.sigma2,
        abs(new.p - old.p) / max(old.p, P_CLAMP),
        abs(new.b - old.b) / old.b,
    )


def em_step(params: FilterParams, design: DesignMatrix) -> tuple[FilterParams, np.ndarray]:
    """One E step and one M step. Returns the new parameters and the t used."""
    r = residuals(params, design)
    z = log_odds(params, r)
    t = expit(z)
    inlier = expit(-z)
    b = update_b(params, t, design, r=r)
    p = update_p(t)
    sigma2 = update_sigma2(t, params, design, complement=inlier, r=r)
    w = update_w(t, design, complement=inlier)
    return FilterParams(w=w, sigma2=sigma2, p=p, b=b), t


def fit(design: DesignMatrix, settings: EMSettings | None = None) -> FilterFit:
    """Fit the mixture-noise regression to one design matrix.

    Iterates until the largest relative parameter change falls below
    ``settings.tolerance`` or ``max_iterations`` is reached.  Coefficient
    changes are taken relative to ``max(1, |w_k|)``.

    Raises
    ------
    EMError
        A parameter became non-finite; the message carries the trace.
    DegenerateFitError
        Every record was assigned to the outlier component.
    """
    settings = settings or EMSettings()
    if design.n < design.d:
        raise ValueError(f"need at least d={design.d} rows, got {design.n}")
    params = initial_params(design, settings)
    history: list[dict] = []
    converged = False
    it = 0
    for it in range(1, settings.max_iterations + 1):
        new, t = em_step(params, design)
        history.append({"iteration": it, "p": new.p, "sigma2": new.sigma2, "b": new.b})
        if not new.is_valid():
            trail = "; ".join(f"it {h['iteration']}: p={h['p']:.4g} s2={h['sigma2']:.4g} b={h['b']:.4g}"
                              for h in history[-5:])
            raise EMError(f"non-finite parameters at iteration {it} ({trail})")
        change = relative_change(params, new)
        params = new
        if change < settings.tolerance:
            converged = True
            break
    K, flags = flag_top_k(t)
    return FilterFit(
        params=params, t=t, K=K, flags=flags, iterations=it, converged=converged,
        row_ids=design.row_ids, history=history,
    )


def write_params_json(fit_: FilterFit, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fit_.to_dict(), fh, indent=2)
        fh.write("\n")


def read_params_json(path: str | Path) -> tuple[FilterParams, dict]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return FilterParams(w=obj["w"], sigma2=obj["sigma2"], p=obj["p"], b=obj["b"]), obj


def write_scores_csv(ids: np.ndarray, scores: np.ndarray, flags: np.ndarray, path: str | Path) -> None:
    """Shared score file schema ``id,score,flag`` used by every detector."""
    _write_table(path, ("id", "score", "flag"), zip(ids.tolist(), scores.tolist(), flags.tolist()))
