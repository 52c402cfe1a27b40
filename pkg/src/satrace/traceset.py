"""Bit-exact binary container binding traces to plaintexts and a known key.

Layout (all little-endian):

========  =====  ==========================================
offset    size   field
========  =====  ==========================================
0         4      magic ``SATR``
4         2      version (currently 1)
6         4      n_traces (u32)
10        4      n_samples (u32)
14        1      sample kind: 0 = u32 counts, 1 = f64
15        1      flags: bit 0 = key present
16        0/16   key (when flag bit 0 set)
...       n*16   plaintexts, 16 bytes per trace
...       n*s*w  samples, row-major
========  =====  ==========================================

The declared sizes must account for the file length exactly; trailing or
missing bytes are an error.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"SATR"
VERSION = 1

KIND_U32 = 0
KIND_F64 = 1

_HEADER = struct.Struct("<4sHIIBB")
_DTYPES = {KIND_U32: np.dtype("<u4"), KIND_F64: np.dtype("<f8")}


class TraceSetError(Exception):
    """Base class for trace-set container errors."""


class TraceSetFormatError(TraceSetError):
    """Bad magic, unsupported version, or unknown sample kind."""


class TraceSetLengthError(TraceSetError):
    """File length does not match the declared dimensions."""


@dataclass
class TraceSet:
    traces: np.ndarray       # (n, s), u32 counts or f64
    plaintexts: np.ndarray   # (n, 16) u8
    key: bytes | None = None

    @property
    def sample_kind(self) -> int:
        return KIND_F64 if self.traces.dtype.kind == "f" else KIND_U32


def write_traceset(path, traces, plaintexts, key: bytes | None = None) -> None:
    """Serialize a trace set; the write is atomic (temp file + rename)."""
    traces = np.asarray(traces)
    plaintexts = np.asarray(plaintexts, dtype=np.uint8)
    if traces.ndim != 2:
        raise TraceSetError(f"traces must be 2-D, got shape {traces.shape}")
    n, s = traces.shape
    if plaintexts.shape != (n, 16):
        raise TraceSetError(
            f"plaintext shape {plaintexts.shape} does not match {n} traces")
    if key is not None and len(key) != 16:
        raise TraceSetError(f"key must be 16 bytes, got {len(key)}")

    if traces.dtype.kind == "f":
        kind = KIND_F64
        payload = traces.astype("<f8")
    elif traces.dtype.kind in "ui":
        if n and s and (traces.min() < 0 or traces.max() > 0xFFFFFFFF):
            raise TraceSetError("integer samples must fit an unsigned 32-bit range")
        kind = KIND_U32
        payload = traces.astype("<u4")
    else:
        raise TraceSetError(f"unsupported trace dtype {traces.dtype}")

    flags = 1 if key is not None else 0
    blob = bytearray(_HEADER.pack(MAGIC, VERSION, n, s, kind, flags))
    if key is not None:
        blob += key
    blob += plaintexts.tobytes()
    blob += payload.tobytes()

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def read_traceset(path) -> TraceSet:
    """Load a trace set, validating magic, version, and exact length."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TraceSetLengthError(
            f"expected at least {_HEADER.size} header bytes, found {len(data)}")
    magic, version, n, s, kind, flags = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TraceSetFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TraceSetFormatError(f"unsupported version {version}")
    if kind not in _DTYPES:
        raise TraceSetFormatError(f"unknown sample kind {kind}")

    dtype = _DTYPES[kind]
    key_len = 16 if flags & 1 else 0
    expected = _HEADER.size + key_len + n * 16 + n * s * dtype.itemsize
    if len(data) != expected:
        raise TraceSetLengthError(f"expected {expected} bytes, found {len(data)}")

    pos = _HEADER.size
    key = bytes(data[pos:pos + key_len]) if key_len else None
    pos += key_len
    plaintexts = np.frombuffer(data, dtype=np.uint8, count=n * 16, offset=pos)
    plaintexts = plaintexts.reshape(n, 16).copy()
    pos += n * 16
    traces = np.frombuffer(data, dtype=dtype, count=n * s, offset=pos)
    traces = traces.reshape(n, s).copy()
    return TraceSet(traces=traces, plaintexts=plaintexts, key=key)
