"""CRML binary field files.

Layout (all little-endian)::

    b"CRML"  version:u8  N1 N2 N3 n:u32  L1 L2 L3 eps:f64  samples:f64[N1*N2*N3*n]

Samples are row-major with x1 slowest and the channel index fastest.  Planar
fields are stored with ``N3 = 1`` and read back on a 2D grid.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .spectral import SpectralGrid, VectorField

MAGIC = b"CRML"
VERSION = 1
_HEADER = struct.Struct("<4sB4I4d")


class FieldFileError(ValueError):
    pass


def to_bytes(f: VectorField) -> bytes:
    grid = f.grid
    if grid.d == 3:
        counts, lengths = grid.counts, grid.lengths
    elif grid.d == 2:
        counts, lengths = grid.counts + (1,), grid.lengths + (1.0,)
    else:
        raise FieldFileError(f"cannot store a {grid.d}D field")
    header = _HEADER.pack(MAGIC, VERSION, *counts, f.channels, *lengths, grid.eps)
    return header + np.ascontiguousarray(f.samples, dtype="<f8").tobytes()


def from_bytes(data: bytes) -> VectorField:
    if len(data) < _HEADER.size:
        raise FieldFileError("file too short for a CRML header")
    magic, version, n1, n2, n3, n, l1, l2, l3, eps = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FieldFileError(f"unsupported CRML version {version}")
    expected = n1 * n2 * n3 * n * 8
    body = data[_HEADER.size :]
    if len(body) != expected:
        raise FieldFileError(f"expected {expected} bytes of samples, found {len(body)}")
    samples = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if n3 == 1:
        grid = SpectralGrid((n1, n2), (l1, l2), eps)
        return VectorField(grid, samples.reshape(n1, n2, n))
    grid = SpectralGrid((n1, n2, n3), (l1, l2, l3), eps)
    return VectorField(grid, samples.reshape(n1, n2, n3, n))


def write_field(f: VectorField, path) -> None:
    Path(path).write_bytes(to_bytes(f))


def read_field(path) -> VectorField:
    return from_bytes(Path(path).read_bytes())
