"""Geometry on the unit sphere: spiral sampling, icosphere meshes, Legendre series."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Rakhmanov-Saff-Zhou azimuth constant
SPIRAL_CONSTANT = 3.6


def as_directions(points) -> np.ndarray:
    """Return an (n, 3) float array of unit vectors, renormalizing rows."""
    arr = np.atleast_2d(np.asarray(points, dtype=float))
    if arr.shape[-1] != 3:
        raise ValueError(f"directions must have 3 columns, got shape {arr.shape}")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-length direction")
    return arr / norms[:, None]


def spiral_hemisphere(K: int) -> np.ndarray:
    """Generalized spiral points on the northern hemisphere.

    The first point sits on the pole. Heights follow the full-sphere
    Rakhmanov-Saff-Zhou spiral built for ``2K`` points, of which the upper
    ``K`` are kept, so successive points are roughly one coil spacing apart.

    Parameters
    ----------
    K : int
        Number of directions, ``K >= 1``.

    Returns
    -------
    ndarray, shape (K, 3)
        Unit vectors with non-negative z.
    """
    K = int(K)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    n_full = 2 * K
    k = np.arange(K)
    z = 1.0 - 2.0 * k / (n_full - 1)
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.zeros(K)
    step = SPIRAL_CONSTANT / np.sqrt(n_full)
    for i in range(1, K):
        phi[i] = (phi[i - 1] + step / r[i]) % (2.0 * np.pi)
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def greedy_subset(directions, K: int) -> np.ndarray:
    """Indices of a quasi-uniform K-subset chosen by greedy max-min axial angle.

    Starts from the direction closest to the pole; ties go to the lowest index
    so the selection is deterministic.
    """
    dirs = as_directions(directions)
    n = len(dirs)
    if not 1 <= K <= n:
        raise ValueError(f"subset size {K} outside [1, {n}]")
    chosen = [int(np.argmax(dirs[:, 2]))]
    # cosine of the smallest axial angle to the chosen set
    closest = np.abs(dirs @ dirs[chosen[0]])
    for _ in range(K - 1):
        closest[chosen] = np.inf
        nxt = int(np.argmin(closest))
        chosen.append(nxt)
        closest = np.maximum(closest, np.abs(dirs @ dirs[nxt]))
    return np.array(chosen, dtype=int)


_PHI = (1.0 + np.sqrt(5.0)) / 2.0

_ICO_VERTICES = np.array([
    [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
    [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
    [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
], dtype=float)

_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
], dtype=int)


@dataclass(frozen=True)
class Tessellation:
    vertices: np.ndarray
    faces: np.ndarray
    neighbors: list[list[int]] = field(repr=False)
    order: int = 0

    def __len__(self) -> int:
        return len(self.vertices)


def icosphere(order: int) -> Tessellation:
    """Subdivide the icosahedron ``order`` times, projecting onto the sphere.

    Vertex count is ``10 * 4**order + 2``.
    """
    order = int(order)
    if not 0 <= order <= 6:
        raise ValueError(f"order must be in [0, 6], got {order}")
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTICES]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(order):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = midpoint.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                idx = midpoint[key] = len(verts) - 1
            return idx

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    vertices = np.array(verts)
    faces_arr = np.array(faces, dtype=int)
    adj: list[set[int]] = [set() for _ in range(len(vertices))]
    for a, b, c in faces_arr:
        adj[a].update((b, c))
        adj[b].update((a, c))
        adj[c].update((a, b))
    neighbors = [sorted(s) for s in adj]
    return Tessellation(vertices=vertices, faces=faces_arr, neighbors=neighbors, order=order)


def legendre(n: int, t: float) -> float:
    """Legendre polynomial P_n(t) by the three-term recurrence."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    if abs(t) > 1.0:
        raise ValueError(f"t must lie in [-1, 1], got {t}")
    return float(legendre_table(n, np.array([t]))[n, 0])


def legendre_table(n_max: int, t) -> np.ndarray:
    """Values P_0..P_{n_max} at every entry of ``t``; shape ``(n_max + 1,) + t.shape``."""
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    out = np.empty((n_max + 1,) + t.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = t
    for n in range(1, n_max):
        out[n + 1] = ((2 * n + 1) * t * out[n] - n * out[n - 1]) / (n + 1)
    return out


def legendre_series(coefs, t) -> np.ndarray:
    """Evaluate sum_n coefs[n] P_n(t) elementwise without storing the full table."""
    coefs = np.asarray(coefs, dtype=float)
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    p_prev = np.ones_like(t)
    total = coefs[0] * p_prev
    if len(coefs) == 1:
        return total
    p = t.copy()
    total = total + coefs[1] * p
    for n in range(1, len(coefs) - 1):
        p_prev, p = p, ((2 * n + 1) * t * p - n * p_prev) / (n + 1)
        total = total + coefs[n + 1] * p
    return total


def write_directions_csv(path, directions) -> None:
    dirs = as_directions(directions)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z"])
        for x, y, z in dirs:
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(z))])


def read_directions_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"direction file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0] and rows[0][0].strip().lower() == "x":
        rows = rows[1:]
    data = np.array([[float(v) for v in row] for row in rows if row], dtype=float)
    if data.size == 0:
        raise ValueError(f"no directions in {path}")
    return as_directions(data)
