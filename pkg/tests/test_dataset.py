import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_filter.dataset import Dataset, DatasetError, column, from_columns, load_csv, write_csv


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_simple(tmp_path):
    ds = load_csv(write(tmp_path, "a,b\n1,2\n3,4\n5,6\n"))
    assert ds.n == 3 and ds.m == 2
    assert ds.schema == ("a", "b")


def test_load_drops_na_row(tmp_path):
    ds = load_csv(write(tmp_path, "a,b\n1,2\nNA,4\n5,6\n"))
    assert ds.n == 2 and ds.dropped == 1
    np.testing.assert_array_equal(column(ds, "a"), [1, 5])
    assert [r.id for r in ds] == [0, 1]


def test_load_error_policy(tmp_path):
    with pytest.raises(DatasetError, match="NA"):
        load_csv(write(tmp_path, "a,b\n1,2\nNA,4\n"), na_policy="error")


def test_load_rejects_inf_and_blank(tmp_path):
    ds = load_csv(write(tmp_path, "a,b\n1,inf\n,4\n7,8\n"))
    assert ds.n == 1 and ds.dropped == 2


def test_ragged_row(tmp_path):
    with pytest.raises(DatasetError, match="ragged"):
        load_csv(write(tmp_path, "a,b\n1,2\n3\n"))


def test_zero_usable_records(tmp_path):
    with pytest.raises(DatasetError, match="no usable"):
        load_csv(write(tmp_path, "a,b\nx,y\n"))


def test_missing_file(tmp_path):
    with pytest.raises(DatasetError) as exc:
        load_csv(tmp_path / "nope.csv")
    assert isinstance(exc.value.__cause__, OSError)


def test_header_required(tmp_path):
    with pytest.raises(DatasetError):
        load_csv(write(tmp_path, "a,b\n1,2\n"), header=False)


def test_duplicate_names(tmp_path):
    with pytest.raises(DatasetError, match="duplicate"):
        load_csv(write(tmp_path, "a,a\n1,2\n"))


def test_delimiter(tmp_path):
    ds = load_csv(write(tmp_path, "a;b\n1;2\n"), delimiter=";")
    assert ds.values.tolist() == [[1.0, 2.0]]


def test_datetime_columns(tmp_path):
    ds = load_csv(write(tmp_path, "t,v\n2013-01-05 10:30:00,1\n"), datetime_columns=["t"])
    # 2013-01-05 is a Saturday; 10:30 wall clock
    ts = column(ds, "t")[0]
    assert (ts % 86400) / 3600 == pytest.approx(10.5)


def test_column_examples():
    ds = from_columns({"a": [1, 3], "b": [2, 4]})
    np.testing.assert_array_equal(column(ds, "a"), [1, 3])
    assert column(ds, "b").shape == (2,)
    with pytest.raises(KeyError):
        column(ds, "zzz")


def test_dataset_is_immutable():
    ds = from_columns({"a": [1.0, 2.0]})
    with pytest.raises(ValueError):
        ds.values[0, 0] = 5


def test_dataset_rejects_nonfinite():
    with pytest.raises(DatasetError):
        Dataset(schema=("a",), values=np.array([[np.nan]]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=3, max_size=3),
                min_size=1, max_size=20))
def test_round_trip_bit_exact(tmp_path_factory, rows):
    ds = Dataset(schema=("a", "b", "c"), values=np.array(rows))
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(ds, p)
    back = load_csv(p)
    assert back.schema == ds.schema
    assert back.values.tobytes() == ds.values.tobytes()
