"""Vector fields over the voxel lattice.

A signal field is an array of shape ``(Nx, Ny, Nz, K)`` and a coefficient field
an array of shape ``(Nx, Ny, Nz, M)``; the last axis is the channel axis.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np
from scipy import sparse

SignalField = np.ndarray
CoefficientField = np.ndarray

_FIELD_MAGIC = b"RCSFLD01"
_HEADER = struct.Struct("<8sIIIII")  # magic, nx, ny, nz, channels, bytes per value
SPARSE_FRACTION = 0.8


def check_field(f, name: str = "field") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim != 4 or min(f.shape) < 1:
        raise ValueError(f"{name} must have shape (Nx, Ny, Nz, channels), got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f


def apply_A(A, c) -> np.ndarray:
    """Per-voxel product A c(r)."""
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != A.shape[1]:
        raise ValueError(f"coefficient field has {c.shape[-1]} channels, A has {A.shape[1]} columns")
    return c @ A.T


def apply_A_transpose(A, s) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != A.shape[0]:
        raise ValueError(f"signal field has {s.shape[-1]} channels, A has {A.shape[0]} rows")
    return s @ A


def inner(f, g) -> float:
    return float(np.vdot(np.asarray(f, dtype=float), np.asarray(g, dtype=float)))


def l2_norm(f) -> float:
    return float(np.sqrt(np.sum(np.square(f))))


def l1_norm(c) -> float:
    return float(np.sum(np.abs(c)))


def causal_differences(image) -> np.ndarray:
    """Backward differences along x, y, z stacked on a trailing axis.

    Out-of-grid neighbours contribute zero. Any extra trailing axes of
    ``image`` beyond the first three are carried along.
    """
    image = np.asarray(image, dtype=float)
    out = np.zeros(image.shape + (3,))
    out[1:, ..., 0] = image[1:] - image[:-1]
    out[:, 1:, ..., 1] = image[:, 1:] - image[:, :-1]
    out[:, :, 1:, ..., 2] = image[:, :, 1:] - image[:, :, :-1]
    return out


def causal_differences_adjoint(p) -> np.ndarray:
    """Adjoint of :func:`causal_differences`."""
    p = np.asarray(p, dtype=float)
    out = np.zeros(p.shape[:-1])
    px, py, pz = p[..., 0], p[..., 1], p[..., 2]
    out[1:] += px[1:]
    out[:-1] -= px[1:]
    out[:, 1:] += py[:, 1:]
    out[:, :-1] -= py[:, 1:]
    out[:, :, 1:] += pz[:, :, 1:]
    out[:, :, :-1] -= pz[:, :, 1:]
    return out


def tv_image(image) -> float:
    """Isotropic TV with the causal 3-neighbour clique."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 3:
        raise ValueError(f"tv_image expects a 3-D array, got shape {image.shape}")
    return float(np.sum(np.sqrt(np.sum(causal_differences(image) ** 2, axis=-1))))


def tv_field(s) -> float:
    """Sum of per-channel TV (the alpha = 1 field norm)."""
    s = np.asarray(s, dtype=float)
    d = causal_differences(s)
    return float(np.sum(np.sqrt(np.sum(d ** 2, axis=-1))))


def to_storage(c, fraction: float = SPARSE_FRACTION):
    """Return ``c`` as a voxels-by-M CSR matrix when more than ``fraction`` of
    its entries are exactly zero, otherwise unchanged."""
    c = np.asarray(c, dtype=float)
    if np.count_nonzero(c) < (1.0 - fraction) * c.size:
        return sparse.csr_matrix(c.reshape(-1, c.shape[-1]))
    return c


def from_storage(stored, dims) -> np.ndarray:
    if sparse.issparse(stored):
        return stored.toarray().reshape(tuple(dims) + (stored.shape[1],))
    return np.asarray(stored, dtype=float)


def write_field(path, f) -> None:
    f = check_field(f)
    nx, ny, nz, ch = f.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_FIELD_MAGIC, nx, ny, nz, ch, 8))
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def read_field(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"field file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, nx, ny, nz, ch, width = _HEADER.unpack(raw[: _HEADER.size])
    if magic != _FIELD_MAGIC:
        raise ValueError(f"{path} is not a field file")
    if width != 8:
        raise ValueError(f"{path}: unsupported value width {width}")
    data = np.frombuffer(raw[_HEADER.size:], dtype="<f8")
    if data.size != nx * ny * nz * ch:
        raise ValueError(f"{path}: payload size does not match header")
    return data.reshape(nx, ny, nz, ch).astype(float)


def read_field_header(path) -> tuple[int, int, int, int]:
    with open(path, "rb") as fh:
        magic, nx, ny, nz, ch, _ = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != _FIELD_MAGIC:
        raise ValueError(f"{path} is not a field file")
    return nx, ny, nz, ch


def write_field_csv(path, f) -> None:
    """One row per voxel: ix, iy, iz, then the channel values."""
    f = check_field(f)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ix", "iy", "iz"] + [f"c{k}" for k in range(f.shape[-1])])
        for idx in np.ndindex(f.shape[:3]):
            writer.writerow(list(idx) + [repr(float(v)) for v in f[idx]])
