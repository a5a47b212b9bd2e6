"""Binary matrix codec used by every on-disk artifact.

Layout: 24-byte header (magic ``MSPB``, u32 version = 1, u64 rows,
u64 cols, all little-endian) followed by rows*cols IEEE-754 binary32
values, row-major, little-endian.  Bit-exact round trips are part of
the contract with external producers.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"MSPB"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def write_matrix(path, arr) -> None:
    a = np.asarray(arr, dtype="<f4")
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise FormatError(f"matrix must be 2-D, got ndim={a.ndim}")
    a = np.ascontiguousarray(a)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, a.shape[0], a.shape[1]))
        fh.write(a.tobytes())


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if len(data) < _HEADER.size:
        raise FormatError(f"short read in {path}: truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"magic mismatch in {path}: {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} in {path}")
    need = rows * cols * 4
    body = len(data) - _HEADER.size
    if body < need:
        raise FormatError(f"short read in {path}: expected {need} payload bytes, got {body}")
    if body > need:
        raise FormatError(f"trailing bytes in {path}")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(rows, cols).copy()
