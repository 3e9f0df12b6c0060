"""
Starting point of EM.

The same data, with 10% planted outliers, is fitted from several initial
outlier fractions and noise variances.  The iteration history shows every
run settling on the same p and sigma2.
"""

import numpy as np

from robust_filter import EMSettings, fit
from robust_filter.templates import DesignMatrix

rng = np.random.default_rng(11)
n = 5000
X = np.column_stack([rng.normal(size=(n, 2)), np.ones(n)])
y = X @ [1.5, -2.0, 3.0] + rng.normal(0, 0.5, n)
out = rng.choice(n, n // 10, replace=False)
y[out] += rng.uniform(0, 50, out.size)
design = DesignMatrix(X=X, y=y, row_ids=np.arange(n), columns=("x1", "x2", "intercept"))

# %%
for p0 in (0.01, 0.05, 0.1, 0.2):
    f = fit(design, EMSettings(init_p=p0))
    trace = " ".join(f"{h['p']:.3f}" for h in f.history[:6])
    print(f"p0={p0:<5} -> p={f.params.p:.4f} after {f.iterations:3d} its   first steps: {trace}")

# %%
for s0 in (0.5, 1.0, 2.0):
    f = fit(design, EMSettings(init_sigma2=s0))
    print(f"sigma2_0={s0:<4} -> sigma2={f.params.sigma2:.4f}, w={np.round(f.params.w, 3)}")
