"""Atom families on the sphere (ridgelets, spherical harmonics, rotated Gaussians)
and the sensing matrices obtained by sampling them at gradient directions."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import sph_harm_y

from .sphere import Tessellation, as_directions, legendre_series, spiral_hemisphere

RIDGELET = "ridgelet"
SPHERICAL_HARMONIC = "sh"
GAUSSIAN = "gaussian"
KINDS = (RIDGELET, SPHERICAL_HARMONIC, GAUSSIAN)

DEFAULT_D0 = np.diag([1700e-6, 300e-6, 300e-6])

# hard cap on the Legendre series before truncation is applied
_MAX_DEGREE = 1000


@dataclass(frozen=True)
class RidgeletSpec:
    rho: float = 0.5
    J: int = 1
    m0: int = 3
    epsilon: float = 1e-6
    summand_tol: float = 1e-9

    def __post_init__(self):
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError(f"rho must be positive and finite, got {self.rho}")
        if self.J < -1:
            raise ValueError(f"J must be >= -1, got {self.J}")
        if self.m0 < 1:
            raise ValueError(f"m0 must be >= 1, got {self.m0}")
        if self.epsilon <= 0 or self.summand_tol <= 0:
            raise ValueError("epsilon and summand_tol must be positive")

    def level_count(self, j: int) -> int:
        return (2 ** (j + 1) * self.m0 + 1) ** 2

    def epsilon_m0(self) -> int:
        """Smallest order with kappa_0(m0) <= epsilon (not used as the default m0)."""
        m = 1
        while kappa(self, 0, m) > self.epsilon:
            m += 1
        return m


def kappa(spec: RidgeletSpec, j: int, x):
    """Dyadically scaled Gaussian exp(-rho (x/2^j)(x/2^j + 1)); zero for j = -1."""
    if j < -1:
        raise ValueError(f"j must be >= -1, got {j}")
    x = np.asarray(x, dtype=float)
    if j == -1:
        out = np.zeros_like(x)
    else:
        y = x / 2.0 ** j
        out = np.exp(-spec.rho * y * (y + 1.0))
    return float(out) if out.ndim == 0 else out


def funk_radon_multiplier(n: int) -> float:
    """Eigenvalue of the Funk-Radon transform on degree-n harmonics (2 pi P_n(0))."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    if n % 2:
        return 0.0
    val = 2.0 * math.pi
    for k in range(2, n + 1, 2):
        val *= -(k - 1) / k
    return val


def funk_radon_multipliers(n_max: int) -> np.ndarray:
    return np.array([funk_radon_multiplier(n) for n in range(n_max + 1)])


def ridgelet_degree_profile(spec: RidgeletSpec, j: int) -> np.ndarray:
    """Legendre coefficients of a level-j ridgelet, truncated where the
    summands stay below ``spec.summand_tol``. Odd entries are zero."""
    if not -1 <= j <= spec.J:
        raise ValueError(f"level {j} outside [-1, {spec.J}]")
    n = np.arange(_MAX_DEGREE + 1)
    lam = funk_radon_multipliers(_MAX_DEGREE)
    coefs = (1.0 / (2 * np.pi)) * ((2 * n + 1) / (4 * np.pi)) * lam * (
        kappa(spec, j + 1, n) - kappa(spec, j, n))
    big = np.nonzero(np.abs(coefs) >= spec.summand_tol)[0]
    if len(big) == 0:
        return coefs[:1].copy()
    n_max = int(big[-1])
    n_max += n_max % 2
    return coefs[: n_max + 1].copy()


def _rotation_from_x(v: np.ndarray) -> np.ndarray:
    """Rotation matrix R with R @ e_x = v."""
    e = np.array([1.0, 0.0, 0.0])
    v = v / np.linalg.norm(v)
    c = float(e @ v)
    if c < -1.0 + 1e-12:
        return np.diag([-1.0, -1.0, 1.0])
    w = np.cross(e, v)
    wx = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    return np.eye(3) + wx + wx @ wx / (1.0 + c)


def fractional_anisotropy(tensor) -> float:
    ev = np.linalg.eigvalsh(np.asarray(tensor, dtype=float))
    md = ev.mean()
    den = np.sqrt(np.sum(ev ** 2))
    if den == 0:
        return 0.0
    return float(np.sqrt(1.5) * np.sqrt(np.sum((ev - md) ** 2)) / den)


def _check_spd(d0) -> np.ndarray:
    d0 = np.asarray(d0, dtype=float)
    if d0.shape != (3, 3) or not np.allclose(d0, d0.T, atol=1e-15, rtol=1e-12):
        raise ValueError("tensor must be a symmetric 3x3 matrix")
    if np.linalg.eigvalsh(d0).min() <= 0:
        raise ValueError("tensor must be positive-definite")
    return d0


def real_sh(degree: int, order: int, directions) -> np.ndarray:
    """Real orthonormal spherical harmonic of the given degree/order."""
    dirs = as_directions(directions)
    theta = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    m = abs(order)
    y = sph_harm_y(degree, m, theta, phi)
    if order > 0:
        return np.sqrt(2.0) * (-1) ** m * y.real
    if order < 0:
        return np.sqrt(2.0) * (-1) ** m * y.imag
    return y.real


@dataclass
class Dictionary:
    """An atom family together with what is needed to evaluate it.

    ``levels``/``level_profiles`` describe zonal (ridgelet) atoms, ``degrees``/
    ``orders`` describe SH atoms, ``tensors`` describes Gaussian atoms.
    """

    kind: str
    M: int
    orientations: np.ndarray | None = None
    levels: np.ndarray | None = None
    level_profiles: dict[int, np.ndarray] = field(default_factory=dict)
    degrees: np.ndarray | None = None
    orders: np.ndarray | None = None
    tensors: np.ndarray | None = None
    b: float | None = None
    scales: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @property
    def degree_profiles(self) -> list[np.ndarray]:
        """Per-atom Legendre coefficients about the atom's own axis (zonal atoms only)."""
        if self.kind != RIDGELET:
            raise TypeError(f"{self.kind} atoms have no zonal degree profile")
        return [self.level_profiles[int(j)] for j in self.levels]

    def level_counts(self) -> dict[int, int]:
        if self.levels is None:
            return {}
        js, counts = np.unique(self.levels, return_counts=True)
        return {int(j): int(c) for j, c in zip(js, counts)}

    def evaluate(self, directions) -> np.ndarray:
        """Atom values at ``directions``; shape (K, M)."""
        return self._evaluate(as_directions(directions), frt=False)

    def evaluate_frt(self, directions) -> np.ndarray:
        """Funk-Radon transformed atom values at ``directions``; shape (K, M)."""
        if self.kind == GAUSSIAN:
            raise NotImplementedError("Funk-Radon transform needs a Legendre/SH expansion; "
                                      "Gaussian atoms have none")
        return self._evaluate(as_directions(directions), frt=True)

    def _evaluate(self, dirs: np.ndarray, frt: bool) -> np.ndarray:
        out = np.empty((len(dirs), self.M))
        if self.kind == RIDGELET:
            for j, prof in self.level_profiles.items():
                cols = np.nonzero(self.levels == j)[0]
                if frt:
                    prof = prof * funk_radon_multipliers(len(prof) - 1)
                out[:, cols] = legendre_series(prof, dirs @ self.orientations[cols].T)
        elif self.kind == SPHERICAL_HARMONIC:
            for m, (deg, order) in enumerate(zip(self.degrees, self.orders)):
                out[:, m] = real_sh(int(deg), int(order), dirs)
                if frt:
                    out[:, m] *= funk_radon_multiplier(int(deg))
        else:
            quad = np.einsum("ki,mij,kj->km", dirs, self.tensors, dirs)
            out[:] = np.exp(-self.b * quad)
        if self.scales is not None:
            out *= self.scales
        return out

    def peak_magnitudes(self) -> np.ndarray:
        """max over the sphere of |atom| for every atom (unscaled)."""
        if self.kind == RIDGELET:
            t = np.linspace(0.0, 1.0, 20001)
            peaks = {j: np.abs(legendre_series(p, t)).max() for j, p in self.level_profiles.items()}
            return np.array([peaks[int(j)] for j in self.levels])
        if self.kind == GAUSSIAN:
            return np.exp(-self.b * np.array([np.linalg.eigvalsh(d)[0] for d in self.tensors]))
        from .sphere import icosphere
        verts = icosphere(5).vertices
        return np.array([np.abs(real_sh(int(n), int(m), verts)).max()
                         for n, m in zip(self.degrees, self.orders)])

    def normalized(self) -> "Dictionary":
        """Copy whose atoms are rescaled to unit peak magnitude."""
        out = replace(self, scales=1.0 / self.peak_magnitudes())
        out.params = dict(self.params, normalized=True)
        return out


def build_ridgelet_dictionary(spec: RidgeletSpec | None = None) -> Dictionary:
    spec = spec or RidgeletSpec()
    orients, levels, profiles = [], [], {}
    for j in range(-1, spec.J + 1):
        n_j = spec.level_count(j)
        orients.append(spiral_hemisphere(n_j))
        levels.append(np.full(n_j, j))
        profiles[j] = ridgelet_degree_profile(spec, j)
    levels = np.concatenate(levels)
    return Dictionary(
        kind=RIDGELET, M=len(levels), orientations=np.vstack(orients), levels=levels,
        level_profiles=profiles,
        params={"rho": spec.rho, "J": spec.J, "m0": spec.m0,
                "epsilon": spec.epsilon, "summand_tol": spec.summand_tol},
    )


def build_sh_dictionary(max_degree: int = 8, even_only: bool = True) -> Dictionary:
    """Real SH basis up to ``max_degree``; ``even_only`` keeps the antipodally
    symmetric part, giving (L+1)(L+2)/2 atoms."""
    if max_degree < 0 or max_degree % 2:
        raise ValueError(f"max_degree must be a non-negative even integer, got {max_degree}")
    step = 2 if even_only else 1
    degrees, orders = [], []
    for n in range(0, max_degree + 1, step):
        for m in range(-n, n + 1):
            degrees.append(n)
            orders.append(m)
    return Dictionary(kind=SPHERICAL_HARMONIC, M=len(degrees), degrees=np.array(degrees),
                      orders=np.array(orders),
                      params={"max_degree": max_degree, "even_only": even_only})


def build_gaussian_dictionary(n_rotations: int = 253, b: float = 1000.0,
                              d0=DEFAULT_D0) -> Dictionary:
    """Rotated copies of exp(-b u^T D0 u), principal axes on spiral points."""
    d0 = _check_spd(d0)
    if n_rotations < 1:
        raise ValueError("n_rotations must be positive")
    evals, evecs = np.linalg.eigh(d0)
    # frame with the principal eigenvector first
    frame = evecs[:, ::-1]
    if np.linalg.det(frame) < 0:
        frame[:, 2] *= -1
    axes = spiral_hemisphere(n_rotations)
    tensors = np.empty((n_rotations, 3, 3))
    for m, v in enumerate(axes):
        rot = _rotation_from_x(v) @ frame.T
        tensors[m] = rot @ d0 @ rot.T
    return Dictionary(kind=GAUSSIAN, M=n_rotations, orientations=axes, tensors=tensors,
                      b=float(b), params={"n_rotations": n_rotations, "b": float(b),
                                          "d0": d0.tolist()})


_KIND_CODES = {RIDGELET: 0, SPHERICAL_HARMONIC: 1, GAUSSIAN: 2, "custom": 3}
_MATRIX_MAGIC = b"RCSMAT01"


@dataclass
class SensingMatrix:
    entries: np.ndarray
    directions: np.ndarray | None = None
    kind: str = "custom"
    dictionary: Dictionary | None = field(default=None, repr=False)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @property
    def shape(self):
        return self.entries.shape

    @property
    def T(self):
        return self.entries.T

    def save(self, path) -> None:
        K, M = self.entries.shape
        with open(path, "wb") as fh:
            fh.write(_MATRIX_MAGIC)
            fh.write(struct.pack("<III", _KIND_CODES[self.kind], K, M))
            fh.write(np.ascontiguousarray(self.entries, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SensingMatrix":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"sensing matrix file not found: {path}")
        raw = path.read_bytes()
        if raw[:8] != _MATRIX_MAGIC:
            raise ValueError(f"{path} is not a sensing matrix file")
        code, K, M = struct.unpack("<III", raw[8:20])
        kind = {v: k for k, v in _KIND_CODES.items()}[code]
        data = np.frombuffer(raw[20:], dtype="<f8")
        if data.size != K * M:
            raise ValueError(f"{path}: payload has {data.size} values, header says {K}x{M}")
        return cls(entries=data.reshape(K, M).astype(float), kind=kind)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in self.entries:
                writer.writerow([repr(float(v)) for v in row])


def assemble_sensing_matrix(dictionary: Dictionary, directions) -> SensingMatrix:
    dirs = as_directions(directions)
    if len(dirs) == 0:
        raise ValueError("need at least one direction")
    return SensingMatrix(entries=dictionary.evaluate(dirs), directions=dirs,
                         kind=dictionary.kind, dictionary=dictionary)


def frt_kernel_matrix(dictionary: Dictionary, tess: Tessellation | np.ndarray) -> np.ndarray:
    """(V, M) matrix of Funk-Radon transformed atoms at the tessellation vertices."""
    verts = tess.vertices if isinstance(tess, Tessellation) else tess
    return dictionary.evaluate_frt(verts)


DICTIONARY_NAMES = ("rdg", "sh8", "gss")


def build_dictionary(name: str, b: float = 3000.0, normalize: bool = True) -> Dictionary:
    """Dictionary by short name: ``rdg``, ``sh8`` or ``gss``.

    With ``normalize`` every atom is scaled to unit peak magnitude, which puts
    the three families on a common footing for a shared l1 weight.
    """
    if name == "rdg":
        dic = build_ridgelet_dictionary()
    elif name == "sh8":
        dic = build_sh_dictionary(8)
    elif name == "gss":
        dic = build_gaussian_dictionary(253, b=b)
    else:
        raise ValueError(f"unknown dictionary {name!r}; expected one of {DICTIONARY_NAMES}")
    return dic.normalized() if normalize else dic
