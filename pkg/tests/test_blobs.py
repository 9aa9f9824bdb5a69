import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vll import blobs
from vll.errors import InvalidConfigError, ShapeMismatchError


def test_blob_round_trip(tmp_path):
    arr = np.random.default_rng(0).standard_normal((7, 3))
    path = str(tmp_path / "a.bin")
    blobs.write_blob(path, arr)
    back = blobs.read_blob(path)
    assert back.dtype == np.float64
    assert np.array_equal(back, arr)


def test_blob_header_is_json_line(tmp_path):
    path = str(tmp_path / "a.bin")
    blobs.write_blob(path, np.zeros((2, 5)))
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
    assert header == {"shape": [2, 5], "dtype": "<f8", "order": "C"}


def test_blob_rejects_truncation(tmp_path):
    path = tmp_path / "a.bin"
    blobs.write_blob(str(path), np.ones((4, 4)))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ShapeMismatchError):
        blobs.read_blob(str(path))


def test_blob_rejects_foreign_header(tmp_path):
    path = tmp_path / "a.bin"
    path.write_bytes(b'{"shape": [1], "dtype": "<f4", "order": "C"}\n' + b"\0" * 4)
    with pytest.raises(InvalidConfigError):
        blobs.read_blob(str(path))


def test_atomic_write_leaves_no_temp(tmp_path):
    blobs.write_blob(str(tmp_path / "x.bin"), np.ones(3))
    assert os.listdir(tmp_path) == ["x.bin"]


@settings(max_examples=100)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_csv_floats_round_trip_bitwise(x):
    assert math.copysign(1, float(blobs._format_cell(x))) == math.copysign(1, x)
    assert float(blobs._format_cell(x)) == x


def test_csv_round_trip(tmp_path):
    row = [10, 0.1, 1.0 / 3.0, 0.5, None, None, 2.0 ** -52, 12, 1e-13]
    path = str(tmp_path / "t.csv")
    blobs.emit_csv([row], "theory", path)
    with open(path, "rb") as fh:
        assert b"\r\n" in fh.read()
    back = blobs.read_csv(path)
    assert back["p"][0] == 10.0
    assert back["q_hat"][0] == 1.0 / 3.0
    assert back["eg"][0] == 2.0 ** -52
    assert np.isnan(back["v"][0])


def test_csv_header_only_when_empty(tmp_path):
    path = str(tmp_path / "e.csv")
    blobs.emit_csv([], "phalf", path)
    with open(path, "rb") as fh:
        assert fh.read() == b"n,alpha,p_half,bracket_lo,bracket_hi\r\n"
    assert all(len(col) == 0 for col in blobs.read_csv(path).values())


def test_csv_schema_enforced(tmp_path):
    with pytest.raises(InvalidConfigError):
        blobs.emit_csv([[1, 2.0]], "theory", str(tmp_path / "b.csv"))
    with pytest.raises(InvalidConfigError):
        blobs.emit_csv([], "nosuch", str(tmp_path / "b.csv"))


def test_curve_schema_columns():
    assert blobs.CSV_SCHEMAS["curve"] == (
        "p", "eg_mean", "eg_std", "eg_ensembled", "bias_sq",
        "v_init", "v_dataset", "v_cross",
    )
