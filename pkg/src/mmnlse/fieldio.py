"""Serialization of field histories.

CSV layout: one row per sample with columns ``z, T, mode, re, im`` (mode is
1-based, rows ordered by mode, then z, then T).

Binary layout (little endian)::

    magic    4 bytes   b"MMFG"
    version  uint32    1
    n_modes  uint32
    n_z      uint32
    n_t      uint32
    z        n_z float64
    T        n_t float64
    field    n_modes * n_z * n_t complex128, row-major, re/im interleaved
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .ssf import ComplexFieldGrid

_MAGIC = b"MMFG"
_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def write_binary(path, grid: ComplexFieldGrid) -> None:
    P, n_z, n_t = grid.fields.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, P, n_z, n_t))
        fh.write(grid.z.astype("<f8").tobytes())
        fh.write(grid.T.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(grid.fields, dtype="<c16").tobytes())


def read_binary(path) -> ComplexFieldGrid:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, P, n_z, n_t = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path} is not a field file")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    need = _HEADER.size + 8 * (n_z + n_t) + 16 * P * n_z * n_t
    if len(raw) != need:
        raise ValueError(f"{path}: expected {need} bytes, found {len(raw)}")
    off = _HEADER.size
    z = np.frombuffer(raw, "<f8", n_z, off)
    off += 8 * n_z
    T = np.frombuffer(raw, "<f8", n_t, off)
    off += 8 * n_t
    fields = np.frombuffer(raw, "<c16", P * n_z * n_t, off).reshape(P, n_z, n_t)
    return ComplexFieldGrid(z.copy(), T.copy(), fields.copy())


def write_csv(path, grid: ComplexFieldGrid) -> None:
    P, n_z, n_t = grid.fields.shape
    mode = np.repeat(np.arange(1, P + 1), n_z * n_t)
    z = np.tile(np.repeat(grid.z, n_t), P)
    T = np.tile(grid.T, P * n_z)
    f = grid.fields.ravel()
    table = np.column_stack([z, T, mode, f.real, f.imag])
    np.savetxt(path, table, delimiter=",", header="z,T,mode,re,im", comments="",
               fmt=["%.17g", "%.17g", "%d", "%.17g", "%.17g"])


def read_csv(path) -> ComplexFieldGrid:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    mode = table[:, 2].astype(int)
    P = int(mode.max())
    z = np.unique(table[:, 0])
    T = np.unique(table[:, 1])
    if table.shape[0] != P * z.size * T.size:
        raise ValueError(f"{path}: rows do not form a full mode x z x T grid")
    fields = (table[:, 3] + 1j * table[:, 4]).reshape(P, z.size, T.size)
    return ComplexFieldGrid(z, T, fields)


def write_field(path, grid: ComplexFieldGrid) -> None:
    """Dispatch on suffix: ``.csv`` or binary for anything else."""
    if Path(path).suffix == ".csv":
        write_csv(path, grid)
    else:
        write_binary(path, grid)


def read_field(path) -> ComplexFieldGrid:
    if Path(path).suffix == ".csv":
        return read_csv(path)
    return read_binary(path)
