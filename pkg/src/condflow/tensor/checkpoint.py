"""Binary tensor checkpoint format.

Layout, all integers little-endian::

    b"VSFK" | version u32 | count u32 |
    count x ( name_len u16 | name utf-8 | ndim u8 | dims u64[ndim] |
              dtype u8 (0=f32, 1=f64) | raw scalar data )
"""
from __future__ import annotations

import io
import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import FormatError
from .core import Tensor

MAGIC = b"VSFK"
VERSION = 1
_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def dumps(tensors: Mapping[str, Tensor | np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(tensors)))
    for name, value in tensors.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        if arr.dtype not in _DTYPE_CODES:
            raise FormatError(f"{name}: unsupported dtype {arr.dtype}")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF or arr.ndim > 0xFF:
            raise FormatError(f"{name}: name or rank too large")
        buf.write(struct.pack("<H", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        code = _DTYPE_CODES[arr.dtype]
        buf.write(struct.pack("<B", code))
        buf.write(np.ascontiguousarray(arr, dtype=_CODE_DTYPES[code]).tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> dict[str, np.ndarray]:
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise FormatError("bad magic, not a checkpoint")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(view):
            raise FormatError("truncated checkpoint")
        vals = struct.unpack_from(fmt, view, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = bytes(view[pos : pos + name_len]).decode("utf-8")
        pos += name_len
        (ndim,) = take("<B")
        dims = take(f"<{ndim}Q") if ndim else ()
        (code,) = take("<B")
        if code not in _CODE_DTYPES:
            raise FormatError(f"{name}: unknown dtype code {code}")
        dtype = _CODE_DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        if pos + nbytes > len(view):
            raise FormatError(f"{name}: truncated data")
        arr = np.frombuffer(view[pos : pos + nbytes], dtype=dtype).reshape(dims)
        out[name] = arr.astype(dtype.newbyteorder("="), copy=True)
        pos += nbytes
    if pos != len(view):
        raise FormatError("trailing bytes after last tensor")
    return out


def save_checkpoint(path: str | os.PathLike, tensors: Mapping[str, Tensor | np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(tensors))
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | os.PathLike) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
