import numpy as np
import pytest

from src.afrf.core.utils import DataFormatError, InvalidInputError
from src.afrf.functional.dataio import CurveSet, load_ucr, read_table, write_curves, write_table


def test_load_tab_separated(tmp_path):
    path = tmp_path / "toy_TRAIN.tsv"
    path.write_text("1\t0.5\t0.25\t0.125\n-1\t1.0\t2.0\t3.0\n1\t0.0\t0.0\t0.1\n")
    curves = load_ucr(path)
    assert curves.n_curves == 3
    assert curves.n_points == 3
    assert curves.class_names == ("-1", "1")
    assert curves.labels.tolist() == [1, 0, 1]
    assert curves.domain.tolist() == [0.0, 0.5, 1.0]
    assert curves.values[1].tolist() == [1.0, 2.0, 3.0]


def test_load_comma_separated(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("2,1.5,2.5\n1,0.5,0.75\n")
    curves = load_ucr(path)
    assert curves.class_names == ("1", "2")
    assert curves.labels.tolist() == [1, 0]


def test_ragged_row_reports_line(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("1\t0.1\t0.2\t0.3\n2\t0.1\t0.2\n")
    with pytest.raises(DataFormatError) as err:
        load_ucr(path)
    assert err.value.line == 2


def test_non_numeric_field_reports_line(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("1\t0.1\t0.2\n2\t0.1\tabc\n1\t0.3\t0.4\n")
    with pytest.raises(DataFormatError) as err:
        load_ucr(path)
    assert err.value.line == 2
    assert "abc" in str(err.value)


def test_single_point_series_rejected(tmp_path):
    path = tmp_path / "short.tsv"
    path.write_text("1\t0.1\n2\t0.3\n")
    with pytest.raises(DataFormatError):
        load_ucr(path)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("\n\n")
    with pytest.raises(DataFormatError):
        load_ucr(path)


def test_binary_file_rejected(tmp_path):
    path = tmp_path / "curves.bin"
    path.write_bytes(b"\xff\xfe\x00\x81\tgarbage\x00\x9c\n")
    with pytest.raises(DataFormatError):
        load_ucr(path)


def test_write_then_load_is_exact(tmp_path, curves):
    path = tmp_path / "curves.tsv"
    write_curves(curves, path)
    back = load_ucr(path)
    assert np.array_equal(back.values, curves.values)
    assert np.array_equal(back.labels, curves.labels)
    assert back.class_names == curves.class_names


def test_curveset_validation():
    with pytest.raises(InvalidInputError):
        CurveSet(values=np.zeros((2, 3)), domain=np.linspace(0, 1, 3), labels=np.array([0, 2]), class_names=("a", "b"))
    with pytest.raises(InvalidInputError):
        CurveSet(values=np.zeros((2, 3)), domain=np.linspace(0, 1, 3), labels=np.array([0, -1]))
    with pytest.raises(InvalidInputError):
        CurveSet(values=np.array([[0.0, np.nan]]), domain=np.array([0.0, 1.0]), labels=np.array([0]))
    with pytest.raises(InvalidInputError):
        CurveSet(values=np.zeros((1, 3)), domain=np.array([0.0, 0.5, 0.5]), labels=np.array([0]))


def test_from_raw_labels_sorts_numerically():
    curves = CurveSet.from_raw_labels(np.zeros((3, 2)), [10, 2, 2])
    assert curves.class_names == ("2", "10")
    assert curves.labels.tolist() == [1, 0, 0]


def test_write_table_round_trip(tmp_path):
    rows = [{"a": 1, "b": 0.1 + 0.2}, {"a": 2, "b": 1e-17}]
    path = tmp_path / "table.csv"
    write_table(rows, path)
    frame = read_table(path)
    assert frame.columns.tolist() == ["a", "b"]
    assert frame["b"].tolist() == [0.1 + 0.2, 1e-17]


def test_write_table_rejects_mixed_records(tmp_path):
    with pytest.raises(InvalidInputError):
        write_table([{"a": 1}, {"b": 2}], tmp_path / "x.csv")
    with pytest.raises(InvalidInputError):
        write_table([], tmp_path / "y.csv")
    write_table([], tmp_path / "z.csv", columns=["a", "b"])
    assert (tmp_path / "z.csv").read_text().strip() == "a,b"
