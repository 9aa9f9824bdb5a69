"""Artifact serialization: binary array blobs and fixed-schema CSV tables.

Blob layout: one UTF-8 JSON header line (shape, dtype, order) terminated by
a newline, followed by the raw little-endian float64 buffer in row-major
order.  CSV files are RFC-4180 with a header row; floats are printed with
17 significant digits so a round-trip reparse is bitwise exact.
"""

import csv
import io
import json
import os
import tempfile

import numpy as np

from vll.errors import InvalidConfigError, ShapeMismatchError

CSV_SCHEMAS = {
    "curve": (
        "p", "eg_mean", "eg_std", "eg_ensembled",
        "bias_sq", "v_init", "v_dataset", "v_cross",
    ),
    "theory": ("p", "q", "q_hat", "gamma", "v", "v_hat", "eg", "iters", "residual"),
    "phalf": ("n", "alpha", "p_half", "bracket_lo", "bracket_hi"),
}


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write via a sibling temp file and rename, so readers never see partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_blob(path: str, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f8")
    header = json.dumps(
        {"shape": list(arr.shape), "dtype": "<f8", "order": "C"}, sort_keys=True
    )
    atomic_write_bytes(path, header.encode() + b"\n" + arr.tobytes())


def read_blob(path: str) -> np.ndarray:
    with open(path, "rb") as handle:
        header = json.loads(handle.readline().decode())
        if header.get("dtype") != "<f8" or header.get("order") != "C":
            raise InvalidConfigError(f"unsupported blob header in {path}: {header}")
        shape = tuple(int(s) for s in header["shape"])
        buf = handle.read()
    expected = int(np.prod(shape)) * 8
    if len(buf) != expected:
        raise ShapeMismatchError(
            f"blob {path}: expected {expected} payload bytes, found {len(buf)}"
        )
    return np.frombuffer(buf, dtype="<f8").reshape(shape)


def _format_cell(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return "nan"
    return format(float(value), ".17g")


def render_csv(rows, schema_id: str) -> bytes:
    """RFC-4180 text for a fixed schema; rows are sequences in schema order."""
    if schema_id not in CSV_SCHEMAS:
        raise InvalidConfigError(f"unknown CSV schema {schema_id!r}")
    columns = CSV_SCHEMAS[schema_id]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise InvalidConfigError(
                f"schema {schema_id} expects {len(columns)} fields, got {len(row)}"
            )
        writer.writerow([_format_cell(v) for v in row])
    return out.getvalue().encode()


def emit_csv(rows, schema_id: str, path: str) -> str:
    atomic_write_bytes(path, render_csv(rows, schema_id))
    return path


def read_csv(path: str) -> dict[str, np.ndarray]:
    """Parse a schema CSV back into column arrays (floats; nan preserved)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        cols = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                cols[name].append(float(cell))
    return {name: np.asarray(vals) for name, vals in cols.items()}
