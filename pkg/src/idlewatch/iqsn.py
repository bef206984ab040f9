"""IQSN snapshot stream files.

Layout (all little-endian)::

    magic      4 bytes   b"IQSN"
    version    u32       1
    M          u32       elements per snapshot
    count      u64       number of snapshots
    payload    count * M * (float32 re, float32 im)
"""

from __future__ import annotations

import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from ._validation import check_snapshots

MAGIC = b"IQSN"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


@contextmanager
def atomic_write(path, mode="wb"):
    """Write to a temporary file next to ``path`` and rename it into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"newline": ""})) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_iqsn(path, snapshots):
    """Write an (n, M) complex array (or sequence of Snapshots) as float32 IQ pairs."""
    X = check_snapshots(snapshots, min_snapshots=0) if len(snapshots) else np.zeros((0, 0), complex)
    count, M = X.shape
    payload = np.empty((count, M, 2), dtype="<f4")
    payload[..., 0] = X.real
    payload[..., 1] = X.imag
    with atomic_write(path) as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, M, count))
        fh.write(payload.tobytes())


def read_iqsn(path):
    """Read an IQSN file and return a complex128 array of shape (count, M)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated IQSN header")
    magic, version, M, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported IQSN version {version}")
    expected = _HEADER.size + count * M * 8
    if len(data) != expected:
        raise ValueError(f"{path}: payload size {len(data)} does not match header ({expected} bytes)")
    raw = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(count, M, 2)
    return raw[..., 0].astype(np.float64) + 1j * raw[..., 1].astype(np.float64)
