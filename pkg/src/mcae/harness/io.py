"""On-disk formats.

Matrix files: 8-byte magic ``b"MCAEMAT1"``, uint32 rows, uint32 cols (both
little-endian), then ``rows * cols`` little-endian IEEE-754 doubles in
row-major order. Manifests and reports are JSON; per-sample tables are CSV.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAT_MAGIC = b"MCAEMAT1"


class FormatError(ValueError):
    pass


def write_matrix(path, A: np.ndarray) -> str:
    """Write ``A`` (1-D arrays become a single column); returns the file's sha256."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise FormatError("only vectors and matrices can be written")
    data = MAT_MAGIC + struct.pack("<II", *A.shape) + np.ascontiguousarray(A, dtype="<f8").tobytes()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != MAT_MAGIC:
        raise FormatError(f"{path}: bad matrix header")
    rows, cols = struct.unpack("<II", data[8:16])
    if len(data) != 16 + 8 * rows * cols:
        raise FormatError(f"{path}: expected {rows}x{cols} doubles, file size is {len(data)}")
    return np.frombuffer(data, dtype="<f8", offset=16).reshape(rows, cols).astype(np.float64)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_csv(path, columns: dict) -> None:
    names = list(columns)
    rows = zip(*(np.asarray(columns[k]).tolist() for k in names))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, float) else x for x in r])
