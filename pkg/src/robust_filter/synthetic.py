"""Synthetic linear datasets for demos and benchmarks."""
from __future__ import annotations

import numpy as np

from .dataset import Dataset


def linear_dataset(
    n: int,
    coef=(1.0, 2.0, -1.0),
    intercept: float = 0.0,
    noise_sd: float = 0.5,
    seed: int = 0,
    names=None,
    behavior: str = "y",
) -> Dataset:
    """Records ``(x_1..x_d, y)`` with ``x ~ N(0, I)`` and ``y = coef . x + intercept + N(0, noise_sd^2)``."""
    rng = np.random.default_rng(seed)
    coef = np.asarray(coef, dtype=np.float64)
    X = rng.normal(size=(n, coef.shape[0]))
    y = X @ coef + intercept + rng.normal(0.0, noise_sd, size=n)
    names = tuple(names) if names is not None else tuple(f"x{k + 1}" for k in range(coef.shape[0]))
    return Dataset(schema=(*names, behavior), values=np.column_stack([X, y]))
