"""Dense float32 tensors and their binary file format.

Tensors are plain numpy arrays of dtype float32, row-major (C order).
This module owns construction/validation helpers and the "FTNS" binary
codec used for network weights and feature-map fixtures:

    bytes 0-3   ASCII "FTNS"
    u32 LE      format version (currently 1)
    u32 LE      ndim
    ndim x u32  dimension sizes
    f32 LE x N  data, row-major, N = product of dims

Weight files hold a sequence of named tensors; each entry is
``u32 name_len | name utf-8 | FTNS blob`` concatenated back to back.
"""

from __future__ import annotations

import struct
from typing import Iterable, Mapping

import numpy as np

Tensor = np.ndarray

FTNS_MAGIC = b"FTNS"
FTNS_VERSION = 1


class TensorError(ValueError):
    """Raised for malformed tensors or FTNS streams."""


def as_tensor(values, shape: Iterable[int] | None = None) -> Tensor:
    """Build a validated float32 tensor from nested lists or an array.

    Raises TensorError if the element count does not match ``shape`` or if
    any value is non-finite.
    """
    arr = np.asarray(values, dtype=np.float32)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise TensorError(f"non-positive dimension in shape {shape}")
        if arr.size != int(np.prod(shape)):
            raise TensorError(
                f"data length {arr.size} does not match shape {shape}"
            )
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise TensorError("tensor contains NaN or Inf")
    return np.ascontiguousarray(arr)


def write_ftns(arr: Tensor) -> bytes:
    """Serialize one tensor to FTNS bytes."""
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    ndim = arr.ndim
    header = FTNS_MAGIC + struct.pack("<II", FTNS_VERSION, ndim)
    dims = struct.pack(f"<{ndim}I", *arr.shape) if ndim else b""
    return header + dims + arr.tobytes(order="C")


def read_ftns(data: bytes) -> Tensor:
    """Parse one FTNS blob into a float32 tensor."""
    arr, offset = _read_ftns_at(data, 0)
    if offset != len(data):
        raise TensorError(f"trailing bytes after FTNS payload ({len(data) - offset})")
    return arr


def _read_ftns_at(data: bytes, offset: int) -> tuple[Tensor, int]:
    if len(data) - offset < 12:
        raise TensorError("unexpected end of FTNS data")
    if data[offset : offset + 4] != FTNS_MAGIC:
        raise TensorError("not an FTNS tensor")
    version, ndim = struct.unpack_from("<II", data, offset + 4)
    if version != FTNS_VERSION:
        raise TensorError(f"unsupported FTNS version {version}")
    offset += 12
    if len(data) - offset < 4 * ndim:
        raise TensorError("unexpected end of FTNS data")
    dims = struct.unpack_from(f"<{ndim}I", data, offset)
    offset += 4 * ndim
    if any(d == 0 for d in dims):
        raise TensorError(f"non-positive dimension in FTNS header {dims}")
    count = int(np.prod(dims)) if ndim else 1
    nbytes = 4 * count
    if len(data) - offset < nbytes:
        raise TensorError("unexpected end of FTNS data")
    arr = np.frombuffer(data[offset : offset + nbytes], dtype="<f4").reshape(dims)
    return np.ascontiguousarray(arr.astype(np.float32)), offset + nbytes


def save_ftns(path, arr: Tensor) -> None:
    with open(path, "wb") as fh:
        fh.write(write_ftns(arr))


def load_ftns(path) -> Tensor:
    with open(path, "rb") as fh:
        return read_ftns(fh.read())


def write_named_ftns(tensors: Mapping[str, Tensor]) -> bytes:
    """Serialize an ordered mapping of named tensors to one byte stream."""
    out = bytearray()
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        out += struct.pack("<I", len(raw))
        out += raw
        out += write_ftns(arr)
    return bytes(out)


def read_named_ftns(data: bytes) -> dict[str, Tensor]:
    """Parse a named-tensor stream; preserves entry order."""
    result: dict[str, Tensor] = {}
    offset = 0
    while offset < len(data):
        if len(data) - offset < 4:
            raise TensorError("unexpected end of named-tensor stream")
        (name_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if len(data) - offset < name_len:
            raise TensorError("unexpected end of named-tensor stream")
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        arr, offset = _read_ftns_at(data, offset)
        if name in result:
            raise TensorError(f"duplicate tensor name {name!r}")
        result[name] = arr
    return result


def save_named_ftns(path, tensors: Mapping[str, Tensor]) -> None:
    with open(path, "wb") as fh:
        fh.write(write_named_ftns(tensors))


def load_named_ftns(path) -> dict[str, Tensor]:
    with open(path, "rb") as fh:
        return read_named_ftns(fh.read())
