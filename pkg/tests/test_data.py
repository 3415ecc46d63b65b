import numpy as np
import pytest

from zicount import data_path
from zicount.errors import InputError
from zicount.models import INTERCEPT, Dataset, read_csv


def test_dataset_validation():
    with pytest.raises(ValueError, match="intercept"):
        Dataset([1, 2], [[2.0, 0.0], [1.0, 1.0]])
    with pytest.raises(ValueError, match="treatment"):
        Dataset([1, 2], [[1.0, 0.5], [1.0, 1.0]])
    with pytest.raises(ValueError, match="nonnegative integers"):
        Dataset.from_columns([1, -1])
    with pytest.raises(ValueError, match="nonnegative integers"):
        Dataset.from_columns([1, 1.5])
    with pytest.raises(ValueError, match="rows"):
        Dataset([1], [[1.0, 0.0]])


def test_dataset_is_read_only():
    d = Dataset.from_columns([1, 2, 3], treatment=[0, 1, 0])
    with pytest.raises(ValueError):
        d.y[0] = 5
    assert d.column_names == (INTERCEPT, "treatment")
    assert d.treatment_name == "treatment"


def test_read_bundled_tiny():
    d = read_csv(data_path("tiny.csv"), "y")
    assert d.y.tolist() == [1, 2, 3]
    assert d.p == 1


def test_read_bundled_trial():
    d = read_csv(data_path("trial.csv"), "days", "arm", ["baseline"])
    assert d.column_names == (INTERCEPT, "arm", "baseline")
    assert d.n == 60
    assert set(np.unique(d.X[:, 1])) == {0.0, 1.0}


def _write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


@pytest.mark.parametrize("text, match", [
    ("y,a\n1,0\n2,1\n", "unknown column"),
    ("y,t\n1,0\nx,1\n", r"line 3, column 'y'"),
    ("y,t\n1,0\n1.5,1\n", r"line 3, column 'y'.*nonnegative integer"),
    ("y,t\n-2,0\n", r"line 2, column 'y'"),
    ("y,t\n1,2\n", r"line 2, column 't'.*0 or 1"),
    ("y,t\n", "no data rows"),
    ("", "empty"),
])
def test_read_csv_errors(tmp_path, text, match):
    with pytest.raises(InputError, match=match):
        read_csv(_write(tmp_path, text), "y", "t")


def test_read_csv_missing_file(tmp_path):
    with pytest.raises(InputError, match="cannot read"):
        read_csv(tmp_path / "nope.csv", "y")
