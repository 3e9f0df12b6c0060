"""Exit criteria. Each test records one PASS/FAIL line, printed in the
terminal summary under "acceptance criteria"."""
import math
import time
import warnings

import numpy as np
import pytest

from robust_filter.baselines import cooks_distance
from robust_filter.benchmark import perturbation_benchmark
from robust_filter.dataset import column, from_columns
from robust_filter.em import EMSettings, FilterParams, RidgeFallbackWarning, fit, flag_top_k, update_t, update_w
from robust_filter.inject import InjectionSpec, inject
from conftest import make_design


@pytest.fixture(autouse=True)
def _quiet_ridge():
    # the default start w = (1, 0, ..., 0) is far off on rescaled targets, so the
    # first weighted solve is often near-singular; the fallback is exercised in test_em
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RidgeFallbackWarning)
        yield


def record(report, label, ok, detail):
    report.append(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, detail


def test_ac01_degenerate_ols(acceptance_report):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        X = rng.normal(size=(50, 3))
        y = rng.normal(size=50)
        closed = np.linalg.solve(X.T @ X, X.T @ y)
        w = update_w(np.zeros(50), make_design(X, y))
        worst = max(worst, np.linalg.norm(w - closed) / np.linalg.norm(closed))
    elapsed = time.perf_counter() - start
    record(acceptance_report, "AC1 degenerate-OLS equivalence",
           worst < 1e-8 and elapsed < 1.0, f"max rel err {worst:.2e} (<1e-8), {elapsed:.2f}s (<1s)")


def test_ac02_posterior_oracle(acceptance_report):
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        p = rng.uniform(0.001, 0.999)
        sigma2 = math.exp(rng.uniform(-3, 3))
        b = math.exp(rng.uniform(-4, 4))
        r = rng.normal(0, 3 * math.sqrt(sigma2))
        cauchy = p * math.sqrt(b) / math.sqrt(math.pi) * math.exp(-1) / math.sqrt(2 * math.pi)
        gauss = (1 - p) / math.sqrt(2 * math.pi * sigma2) * math.exp(-r * r / (2 * sigma2))
        oracle = cauchy / (cauchy + gauss)
        t = update_t(FilterParams(w=[0.0], sigma2=sigma2, p=p, b=b), make_design([[1.0]], [r]))[0]
        worst = max(worst, abs(t - oracle))
    elapsed = time.perf_counter() - start
    record(acceptance_report, "AC2 posterior oracle",
           worst < 1e-12 and elapsed < 1.0, f"max abs err {worst:.2e} (<1e-12), {elapsed:.2f}s (<1s)")


def test_ac03_behavioral_benchmark(acceptance_report):
    start = time.perf_counter()
    res = {q: perturbation_benchmark(q, alpha=50.0, seed=3) for q in (0.01, 0.05, 0.15)}
    elapsed = time.perf_counter() - start
    em_ok = all(r.em_auc >= 0.90 for r in res.values())
    mid_ok = res[0.05].em_auc >= res[0.05].ols_auc - 0.01
    high_ok = res[0.15].em_auc > res[0.15].ols_auc
    cells = ", ".join(f"q={q}: EM {r.em_auc:.3f} / OLS {r.ols_auc:.3f}" for q, r in res.items())
    record(acceptance_report, "AC3 behavioral perturbation",
           em_ok and mid_ok and high_ok and elapsed < 30, f"{cells}; {elapsed:.1f}s (<30s)")


def test_ac04_contextual_benchmark(acceptance_report):
    start = time.perf_counter()
    lo = perturbation_benchmark(0.005, mode="contextual", seed=4)
    hi = perturbation_benchmark(0.07, mode="contextual", seed=4)
    elapsed = time.perf_counter() - start
    ok = hi.em_auc >= lo.em_auc - 0.10 and hi.ols_auc < lo.ols_auc and elapsed < 30
    record(acceptance_report, "AC4 contextual perturbation", ok,
           f"target {lo.target}; q=0.005: EM {lo.em_auc:.3f} / OLS {lo.ols_auc:.3f}; "
           f"q=0.07: EM {hi.em_auc:.3f} / OLS {hi.ols_auc:.3f}; {elapsed:.1f}s (<30s)")


def test_ac05_outlierness_sweep(acceptance_report):
    start = time.perf_counter()
    aucs = [perturbation_benchmark(0.05, alpha=a, seed=5).em_auc for a in (20, 50, 300)]
    elapsed = time.perf_counter() - start
    ok = all(b >= a - 0.02 for a, b in zip(aucs, aucs[1:])) and elapsed < 30
    record(acceptance_report, "AC5 outlierness sweep", ok,
           f"alpha 20/50/300: {' -> '.join(f'{a:.3f}' for a in aucs)}; {elapsed:.1f}s (<30s)")


def _planted_ten_percent(seed=6, n=10_000):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.normal(size=(n, 3)), np.ones(n)])
    y = X @ np.array([1.0, 2.0, -1.0, 0.5]) + rng.normal(0, 0.5, n)
    idx = rng.choice(n, n // 10, replace=False)
    y[idx] += rng.uniform(0, 50, idx.size)
    return make_design(X, y)


def test_ac06_init_insensitivity(acceptance_report):
    design = _planted_ten_percent()
    start = time.perf_counter()
    ps = [fit(design, EMSettings(init_p=p0)).params.p for p0 in (0.01, 0.05, 0.1, 0.2)]
    s2 = [fit(design, EMSettings(init_sigma2=s0)).params.sigma2 for s0 in (0.5, 1.0, 2.0)]
    elapsed = time.perf_counter() - start
    p_spread = max(ps) - min(ps)
    s_spread = (max(s2) - min(s2)) / min(s2)
    ok = p_spread < 0.01 and s_spread < 0.05 and elapsed < 10
    record(acceptance_report, "AC6 init insensitivity", ok,
           f"p in [{min(ps):.4f}, {max(ps):.4f}] spread {p_spread:.1e} (<0.01); "
           f"sigma2 rel spread {s_spread:.1e} (<5%); {elapsed:.1f}s (<10s)")


def test_ac07_k_flag_semantics(acceptance_report):
    rng = np.random.default_rng(707)
    bad = 0
    for trial in range(1000):
        n = int(rng.integers(1, 60))
        # coarse grids force ties
        t = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=n) if trial % 2 else rng.uniform(size=n)
        K, flags = flag_top_k(t)
        oracle_k = math.floor(math.fsum(t.tolist()))
        order = sorted(range(n), key=lambda i: (-t[i], i))
        expected = set(order[: min(oracle_k, n)])
        if K != oracle_k or set(np.flatnonzero(flags)) != expected:
            bad += 1
    record(acceptance_report, "AC7 K/flag semantics", bad == 0, f"{bad} mismatches in 1000 vectors")


def test_ac08_cooks_oracle(acceptance_report):
    rng = np.random.default_rng(808)
    worst, flag_bad = 0.0, 0
    for _ in range(50):
        X = np.column_stack([rng.normal(size=(30, 2)), np.ones(30)])
        y = X @ rng.normal(size=3) + rng.standard_t(3, size=30)
        res = cooks_distance(make_design(X, y))
        beta = np.linalg.lstsq(X, y, rcond=None)[0]
        e = y - X @ beta
        s2 = e @ e / (30 - 3)
        G = X.T @ X
        loo = np.empty(30)
        for i in range(30):
            keep = np.arange(30) != i
            diff = beta - np.linalg.lstsq(X[keep], y[keep], rcond=None)[0]
            loo[i] = diff @ G @ diff / (3 * s2)
        worst = max(worst, float(np.max(np.abs(res.d - loo) / np.maximum(1.0, np.abs(loo)))))
        flag_bad += int(np.any(res.flags != (res.d > 4 / 30)))
    ok = worst < 1e-8 and flag_bad == 0
    record(acceptance_report, "AC8 Cook's distance oracle", ok,
           f"max err vs leave-one-out {worst:.2e} (<1e-8); flag mismatches {flag_bad}")


def test_ac09_injection_accounting(acceptance_report):
    rng = np.random.default_rng(909)
    problems = 0
    for _ in range(200):
        N = int(rng.integers(1, 2000))
        q = float(rng.uniform(0, 0.5))
        alpha = float(rng.choice([0.5, 20.0, 50.0, 300.0]))
        ds = from_columns({"x": rng.normal(size=N), "y": rng.normal(size=N)})
        res = inject(ds, InjectionSpec(q=q, alpha=alpha, target="y", seed=int(rng.integers(1 << 30))))
        k = math.floor(q * N)
        y = column(res.dataset, "y")
        shifts = np.array([y[a] - y[s] for a, s in res.provenance.items()])
        if res.dataset.n != N + k or int(res.truth.sum()) != k or len(shifts) != k:
            problems += 1
        elif k and not (np.all(shifts > 0) and np.all(shifts < alpha)):
            problems += 1
    record(acceptance_report, "AC9 injection accounting", problems == 0, f"{problems} violations in 200 draws")


@pytest.mark.slow
def test_ac10_scale(acceptance_report):
    rng = np.random.default_rng(1010)
    n = 1_000_000
    X = np.column_stack([rng.normal(size=(n, 3)), np.ones(n)])
    y = X @ np.array([1.0, 2.0, -1.0, 0.5]) + rng.normal(0, 0.5, n)
    idx = rng.choice(n, n // 20, replace=False)
    y[idx] += rng.uniform(0, 50, idx.size)
    design = make_design(X, y)
    start = time.perf_counter()
    f = fit(design, EMSettings(max_iterations=50, tolerance=0.0))
    elapsed = time.perf_counter() - start
    ok = f.iterations == 50 and elapsed < 60
    record(acceptance_report, "AC10 scale n=1e6 d=4", ok,
           f"{f.iterations} iterations in {elapsed:.1f}s (<60s), p={f.params.p:.4f}")
