"""Writer for the feature-bank binary matrix format.

The format contract (shared with any consumer of bank directories):
24-byte header — magic ``MSPB``, u32 version = 1, u64 rows, u64 cols,
little-endian — followed by rows*cols IEEE-754 binary32 values,
row-major, little-endian.  This module implements the format from its
documentation only; it has no dependency on any particular consumer.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MSPB"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def write_matrix(path, arr) -> None:
    a = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got ndim={a.ndim}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, a.shape[0], a.shape[1]))
        fh.write(a.tobytes())


def read_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"not a version-{VERSION} {MAGIC!r} matrix: {path}")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(rows, cols).copy()
