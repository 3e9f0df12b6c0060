import numpy as np
import pytest

from robust_filter.dataset import from_columns
from robust_filter.detector import combine, detect, export
from robust_filter.em import FilterFit, FilterParams, fit
from robust_filter.templates import TemplateError, compile_template, parse_templates


def fake_fit(ids, t, flags):
    t = np.asarray(t, float)
    return FilterFit(params=FilterParams(w=[0.0], sigma2=1.0, p=0.1, b=1.0), t=t, K=int(sum(flags)),
                     flags=np.asarray(flags, np.int8), iterations=1, converged=True,
                     row_ids=np.asarray(ids))


def test_combine_union_of_flags():
    ids = np.arange(10)
    a = fake_fit(ids, np.zeros(10), [1 if i in (2, 7) else 0 for i in ids])
    b = fake_fit(ids, np.zeros(10), [1 if i in (7, 9) else 0 for i in ids])
    flags, _, _ = combine(10, ["a", "b"], {"a": a, "b": b})
    assert set(np.flatnonzero(flags)) == {2, 7, 9}


def test_combine_coverage_aware_mean():
    a = fake_fit([1, 2], [0.2, 0.3], [0, 0])  # record 0 excluded by filter a
    b = fake_fit([0, 1, 2], [0.9, 0.6, 0.1], [1, 0, 0])
    flags, scores, coverage = combine(4, ["a", "b"], {"a": a, "b": b})
    assert scores[0] == pytest.approx(0.9)
    assert scores[1] == pytest.approx(0.4)
    assert coverage.tolist() == [1, 2, 2, 0]
    assert scores[3] == 0 and flags[3] == 0


def _sensor_like(seed=0, n=1500):
    rng = np.random.default_rng(seed)
    volt = rng.uniform(2.3, 2.8, n)
    temp = np.exp(0.8 * np.log(volt) + 3.0 + rng.normal(0, 0.02, n))
    hum = np.exp(-0.5 * np.log(temp) + 5.0 + rng.normal(0, 0.03, n))
    bad_t = rng.choice(n, 60, replace=False)
    temp[bad_t] *= rng.uniform(2, 4, 60)
    bad_h = rng.choice(n, 40, replace=False)
    hum[bad_h] *= rng.uniform(2, 4, 40)
    hum[:5] = -1.0  # excluded by the log transform of filter h
    return from_columns({"temp": temp, "hum": hum, "volt": volt}), set(bad_t), set(bad_h)


TEMPLATES = [
    {"name": "h", "behavior": {"attr": "hum", "transform": "log"},
     "context": [{"attr": "temp", "transform": "log"}]},
    {"name": "t", "behavior": {"attr": "temp", "transform": "log"},
     "context": [{"attr": "volt", "transform": "log"}]},
]


def test_detect_end_to_end():
    ds, bad_t, bad_h = _sensor_like()
    report = detect(ds, parse_templates(TEMPLATES))
    assert report.names == ["h", "t"]
    assert report.excluded["h"].tolist() == [0, 1, 2, 3, 4]
    assert report.coverage[:5].tolist() == [1] * 5
    flagged = set(np.flatnonzero(report.combined_flags))
    assert bad_t <= flagged
    # OR semantics
    either = np.zeros(ds.n, bool)
    for k in report.names:
        either |= report.filter_columns(k)[1].astype(bool)
    np.testing.assert_array_equal(either, report.combined_flags.astype(bool))
    assert np.all((report.combined_scores >= 0) & (report.combined_scores <= 1))
    summ = report.summary()
    assert summ["filters"]["h"]["n_excluded"] == 5
    ov = np.array(summ["overlap"]["counts"])
    assert ov[0, 0] == report.per_filter["h"].flags.sum()
    assert ov[0, 1] == ov[1, 0]


def test_filter_independence():
    ds, _, _ = _sensor_like(1)
    templates = parse_templates(TEMPLATES)
    report = detect(ds, templates, max_workers=2)
    design, _ = compile_template(templates[1], ds)
    alone = fit(design)
    np.testing.assert_array_equal(alone.t, report.per_filter["t"].t)


def test_or_monotonicity():
    ds, _, _ = _sensor_like(2)
    templates = parse_templates(TEMPLATES)
    one = detect(ds, templates[:1])
    two = detect(ds, templates)
    assert np.all(two.combined_flags >= one.combined_flags)


def test_detect_errors_name_template():
    ds, _, _ = _sensor_like()
    with pytest.raises(TemplateError, match="'bad'"):
        detect(ds, parse_templates([{"name": "bad", "behavior": "nope", "context": ["temp"]}]))
    with pytest.raises(TemplateError):
        detect(ds, [])


def test_export_shape_and_determinism(tmp_path):
    ds = from_columns({"x": [1.0, 2.0, 3.0, 4.0, 5.0], "y": [1.1, 2.0, 2.9, 4.2, 5.0],
                       "z": [0.5, 0.1, 0.2, 0.4, 0.3]})
    templates = parse_templates([{"behavior": "y", "context": ["x"]}, {"behavior": "z", "context": ["x"]}])
    report = detect(ds, templates)
    export(report, tmp_path / "a.csv")
    export(report, tmp_path / "b.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert len(lines) == 1 + 5
    assert lines[0].split(",") == ["id", "combined_score", "combined_flag",
                                    "filter1_t", "filter1_flag", "filter2_t", "filter2_flag"]
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_export_three_records_two_filters(tmp_path):
    ids = np.arange(3)
    from robust_filter.detector import DetectionReport

    fits = {"a": fake_fit(ids, [0.1, 0.2, 0.3], [0, 0, 1]), "b": fake_fit(ids, [0.5, 0.1, 0.1], [1, 0, 0])}
    flags, scores, cov = combine(3, ["a", "b"], fits)
    export(DetectionReport(["a", "b"], fits, flags, scores, cov), tmp_path / "r.csv")
    rows = [l.split(",") for l in (tmp_path / "r.csv").read_text().splitlines()]
    assert len(rows) == 4 and all(len(r) == 1 + 2 + 2 * 2 for r in rows)
