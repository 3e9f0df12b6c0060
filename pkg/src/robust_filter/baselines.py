"""Comparison detectors: OLS with Cook's distance, and a Gaussian ratio test."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .em import weighted_lstsq
from .templates import DesignMatrix


@dataclass(eq=False)
class CooksResult:
    d: np.ndarray
    leverage: np.ndarray
    flags: np.ndarray
    s2: float
    dim: int
    coef: np.ndarray
    residuals: np.ndarray


@dataclass(eq=False)
class RatioResult:
    mu: float
    var: float
    ratio: np.ndarray
    density: np.ndarray
    scores: np.ndarray


def cooks_distance(design: DesignMatrix) -> CooksResult:
    """Cook's distance of every row of an OLS fit.

    ``D_i = e_i^2 / (s^2 p) * h_i / (1 - h_i)^2`` with ``p`` the number of
    columns of X, ``s^2 = SSE / (n - p)`` and ``h_i`` the diagonal of the hat
    matrix.  Rows with ``D_i > 4/n`` are flagged.
    """
    X, y = design.X, design.y
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need n > d, got n={n}, d={p}")
    coef = weighted_lstsq(X, y, np.ones(n))
    e = y - X @ coef
    A = X.T @ X
    # leverage from the same (possibly ridged) normal matrix as the fit
    try:
        factor = linalg.cho_factor(A)
    except linalg.LinAlgError:
        factor = linalg.cho_factor(A + 1e-8 * np.trace(A) / p * np.eye(p))
    h = np.einsum("ij,ji->i", X, linalg.cho_solve(factor, X.T))
    h = np.clip(h, 0.0, 1.0)
    s2 = float(e @ e) / (n - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        D = e**2 / (s2 * p) * h / (1.0 - h) ** 2
    D = np.where(h >= 1.0, np.inf, D)
    flags = (D > 4.0 / n).astype(np.int8)
    return CooksResult(d=D, leverage=h, flags=flags, s2=s2, dim=p, coef=coef, residuals=e)


def ratio_detector(numerator: np.ndarray, denominator: np.ndarray) -> RatioResult:
    """Rank records by how improbable their ratio is under a fitted Gaussian.

    The ratio ``numerator / denominator`` is fitted with its sample mean and
    variance.  ``density`` is the Gaussian density of each ratio; ``scores``
    is the standardized distance ``|ratio - mu| / sd``, which orders records
    exactly as ascending density does.  Records with a zero denominator get
    an infinite score.
    """
    num = np.asarray(numerator, dtype=np.float64)
    den = np.asarray(denominator, dtype=np.float64)
    if num.shape != den.shape:
        raise ValueError("numerator and denominator lengths differ")
    zero = den == 0
    ratio = np.full(num.shape, np.nan)
    np.divide(num, den, out=ratio, where=~zero)
    ok = ratio[~zero]
    if ok.size < 2:
        raise ValueError("need at least two records with nonzero denominator")
    mu = float(np.mean(ok))
    var = float(np.var(ok, ddof=1))
    if not var > 0:
        raise ValueError("ratio has zero variance; every record is equally likely")
    sd = np.sqrt(var)
    density = np.where(zero, 0.0, stats.norm.pdf(ratio, loc=mu, scale=sd))
    scores = np.where(zero, np.inf, np.abs(ratio - mu) / sd)
    return RatioResult(mu=mu, var=var, ratio=ratio, density=density, scores=scores)
