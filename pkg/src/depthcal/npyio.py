"""Bit-exact tensor file I/O.

A deliberately narrow subset of the NPY version 1.0 format: little-endian
float32 or float64, C order, no pickled objects. Files are byte-stable
across platforms, so writing the same array twice produces identical bytes.
Anything outside the subset is an explicit parse error, never garbage data.
"""

from __future__ import annotations

import ast
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError

__all__ = ["write_npy", "read_npy", "read_npy_header"]

MAGIC = b"\x93NUMPY"
SUPPORTED_DESCR = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def write_npy(path, array: np.ndarray, dtype: str = "<f8") -> None:
    """Write a float array; dtype is '<f4' or '<f8'."""
    if dtype not in SUPPORTED_DESCR:
        raise DataError(f"unsupported dtype {dtype!r}; use '<f4' or '<f8'")
    arr = np.ascontiguousarray(array, dtype=SUPPORTED_DESCR[dtype])
    if not np.all(np.isfinite(arr)):
        raise DomainError("write_npy requires finite values")
    shape = arr.shape
    shape_repr = f"({shape[0]},)" if len(shape) == 1 else repr(shape)
    if len(shape) == 0:
        shape_repr = "()"
    header = f"{{'descr': '{dtype}', 'fortran_order': False, 'shape': {shape_repr}, }}"
    # pad with spaces so that magic+version+len+header is a multiple of 64
    unpadded = len(MAGIC) + 2 + 2 + len(header) + 1
    pad = (64 - unpadded % 64) % 64
    header = header + " " * pad + "\n"
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([1, 0]))  # version 1.0
        f.write(len(header).to_bytes(2, "little"))
        f.write(header.encode("latin1"))
        f.write(arr.tobytes(order="C"))


def _parse_header(path, f) -> tuple[np.dtype, tuple[int, ...]]:
    magic = f.read(6)
    if magic != MAGIC:
        raise DataError(f"{path}: not an NPY file (bad magic bytes)")
    version = f.read(2)
    if len(version) != 2 or version[0] != 1:
        raise DataError(f"{path}: unsupported NPY version {tuple(version)}")
    hlen_bytes = f.read(2)
    if len(hlen_bytes) != 2:
        raise DataError(f"{path}: truncated header length")
    hlen = int.from_bytes(hlen_bytes, "little")
    raw = f.read(hlen)
    if len(raw) != hlen:
        raise DataError(f"{path}: truncated header")
    try:
        meta = ast.literal_eval(raw.decode("latin1").strip())
    except (ValueError, SyntaxError) as exc:
        raise DataError(f"{path}: malformed NPY header") from exc
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise DataError(f"{path}: malformed NPY header dict")
    descr = meta["descr"]
    if descr not in SUPPORTED_DESCR:
        raise DataError(f"{path}: unsupported dtype {descr!r}; only <f4/<f8 accepted")
    if meta["fortran_order"] is not False:
        raise DataError(f"{path}: Fortran-ordered arrays are not supported")
    shape = meta["shape"]
    if not isinstance(shape, tuple) or not all(
        isinstance(d, int) and d >= 0 for d in shape
    ):
        raise DataError(f"{path}: malformed shape {shape!r}")
    return SUPPORTED_DESCR[descr], shape


def read_npy_header(path) -> tuple[np.dtype, tuple[int, ...]]:
    """Parse dtype and shape without loading the payload."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    with open(path, "rb") as f:
        return _parse_header(path, f)


def read_npy(path) -> np.ndarray:
    """Read a tensor file written by write_npy (or an equivalent producer)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    with open(path, "rb") as f:
        dtype, shape = _parse_header(path, f)
        count = int(np.prod(shape)) if shape else 1
        data = f.read()
    expected = count * dtype.itemsize
    if len(data) != expected:
        raise DataError(
            f"{path}: payload is {len(data)} bytes, expected {expected} for shape {shape}"
        )
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()
