"""Binary parameter checkpoints.

Layout, repeated per entry in declaration order, all little-endian::

    uint32  name length in bytes
    bytes   utf-8 name
    uint32  ndim
    uint64  shape[ndim]
    float64 values (C order)
"""
from __future__ import annotations

import io
import struct
from collections import OrderedDict

import numpy as np

from .params import ParamSet


def dumps_arrays(arrays) -> bytes:
    buf = io.BytesIO()
    for name, a in arrays.items():
        a = np.asarray(a, dtype="<f8")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", a.ndim))
        buf.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        buf.write(a.tobytes(order="C"))
    return buf.getvalue()


def loads_arrays(blob: bytes) -> "OrderedDict[str, np.ndarray]":
    out = OrderedDict()
    view = memoryview(blob)
    pos = 0
    while pos < len(view):
        (nlen,) = struct.unpack_from("<I", view, pos)
        pos += 4
        name = bytes(view[pos : pos + nlen]).decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<I", view, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", view, pos)
        pos += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        a = np.frombuffer(view[pos : pos + 8 * count], dtype="<f8").reshape(shape)
        pos += 8 * count
        if name in out:
            raise ValueError(f"duplicate entry {name!r} in checkpoint")
        out[name] = a.astype(np.float64)
    return out


def save_params(path, params: ParamSet) -> None:
    with open(path, "wb") as f:
        f.write(dumps_arrays(params.arrays()))


def load_params(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as f:
        return loads_arrays(f.read())
