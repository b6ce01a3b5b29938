"""Dense float32 stack container, byte-compatible with the ``.npy`` v1.0 format.

Files written here load with ``numpy.load`` and vice versa. The payload is
always little-endian C-order float32.
"""
from __future__ import annotations

import ast
import os
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"\x93NUMPY"
VERSION = (1, 0)
_DTYPE = np.dtype("<f4")


def _header_bytes(shape: tuple[int, ...]) -> bytes:
    header = {"descr": _DTYPE.str, "fortran_order": False, "shape": tuple(int(s) for s in shape)}
    text = repr(header).encode("latin1")
    # magic(6) + version(2) + len(2) + text + '\n' padded to a multiple of 64
    pad = 64 - (10 + len(text) + 1) % 64
    text = text + b" " * (pad % 64) + b"\n"
    return MAGIC + bytes(VERSION) + struct.pack("<H", len(text)) + text


def write_array(stack, path) -> None:
    arr = np.asarray(stack)
    if arr.dtype != np.float32:
        arr = arr.astype(np.float32)
    if arr.size and not np.all(np.isfinite(arr)):
        raise FormatError("refusing to write non-finite values")
    arr = np.ascontiguousarray(arr, dtype=_DTYPE)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_header_bytes(arr.shape))
        fh.write(arr.tobytes(order="C"))
    os.replace(tmp, path)


def read_header(fh) -> tuple[np.dtype, tuple[int, ...], bool, int]:
    """Parse the header and return ``(dtype, shape, fortran_order, header_len)``."""
    head = fh.read(10)
    if len(head) < 10 or head[:6] != MAGIC:
        raise FormatError("bad magic string")
    major, minor = head[6], head[7]
    if (major, minor) != VERSION:
        raise FormatError(f"unsupported container version {major}.{minor}")
    (hlen,) = struct.unpack("<H", head[8:10])
    raw = fh.read(hlen)
    if len(raw) != hlen:
        raise FormatError("truncated header")
    try:
        meta = ast.literal_eval(raw.decode("latin1"))
        dtype = np.dtype(meta["descr"])
        shape = tuple(int(s) for s in meta["shape"])
        fortran = bool(meta["fortran_order"])
    except (ValueError, SyntaxError, KeyError, TypeError) as exc:
        raise FormatError(f"corrupt header: {exc}") from exc
    if any(s < 0 for s in shape):
        raise FormatError("negative dimension in header")
    return dtype, shape, fortran, 10 + hlen


def read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        dtype, shape, fortran, _ = read_header(fh)
        count = int(np.prod(shape)) if shape else 1
        payload = fh.read()
    need = count * dtype.itemsize
    if len(payload) != need:
        raise FormatError(f"payload has {len(payload)} bytes, header promises {need}")
    arr = np.frombuffer(payload, dtype=dtype, count=count)
    arr = arr.reshape(shape, order="F" if fortran else "C")
    return arr.astype(np.float32, copy=True)
