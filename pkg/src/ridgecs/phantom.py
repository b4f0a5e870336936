"""Synthetic multi-tensor diffusion phantoms and Rician noise."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .field import l2_norm
from .sphere import as_directions

DEFAULT_EIGENVALUES = (1700e-6, 300e-6, 300e-6)
SNR_BISECTION_STEPS = 12


def tensor_along(direction, eigenvalues=DEFAULT_EIGENVALUES) -> np.ndarray:
    """Axially symmetric tensor whose principal eigenvector is ``direction``."""
    v = np.asarray(direction, dtype=float)
    v = v / np.linalg.norm(v)
    lam1, lam2, lam3 = eigenvalues
    if not math.isclose(lam2, lam3):
        raise ValueError("only axially symmetric tensors (lambda2 == lambda3) are supported")
    return lam2 * np.eye(3) + (lam1 - lam2) * np.outer(v, v)


@dataclass
class Component:
    weight: float
    tensor: np.ndarray
    direction: np.ndarray


@dataclass
class VoxelModel:
    components: list[Component]
    s0: float = 1.0

    def __post_init__(self):
        total = sum(c.weight for c in self.components)
        if not self.components or abs(total - 1.0) > 1e-12:
            raise ValueError(f"component weights must sum to 1, got {total}")

    @classmethod
    def from_directions(cls, directions, eigenvalues=DEFAULT_EIGENVALUES, s0=1.0):
        dirs = as_directions(directions)
        w = 1.0 / len(dirs)
        return cls([Component(w, tensor_along(d, eigenvalues), d) for d in dirs], s0=s0)

    @property
    def count(self) -> int:
        return len(self.components)


def synth_signal(model: VoxelModel, b: float, direction) -> float | np.ndarray:
    """s0 * sum_i alpha_i exp(-b u^T D_i u); ``direction`` may be one vector or (K, 3)."""
    if b < 0:
        raise ValueError("b-value must be non-negative")
    u = np.asarray(direction, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    total = np.zeros(len(u))
    for comp in model.components:
        total += comp.weight * np.exp(-b * np.einsum("ki,ij,kj->k", u, comp.tensor, u))
    total *= model.s0
    return float(total[0]) if single else total


@dataclass
class Phantom:
    name: str
    dims: tuple[int, int, int]
    voxels: dict[tuple[int, int, int], VoxelModel]
    eigenvalues: tuple[float, float, float] = DEFAULT_EIGENVALUES
    metadata: dict = field(default_factory=dict)

    def counts(self) -> np.ndarray:
        out = np.zeros(self.dims, dtype=int)
        for idx, vox in self.voxels.items():
            out[idx] = vox.count
        return out

    def fiber_directions(self) -> dict[tuple[int, int, int], np.ndarray]:
        return {idx: np.array([c.direction for c in vox.components])
                for idx, vox in self.voxels.items()}

    def to_json(self) -> dict:
        vox = []
        for idx in sorted(self.voxels):
            v = self.voxels[idx]
            vox.append({
                "index": list(idx),
                "s0": v.s0,
                "weights": [c.weight for c in v.components],
                "directions": [c.direction.tolist() for c in v.components],
                "eigenvalues": [list(self.eigenvalues) for _ in v.components],
            })
        return {"name": self.name, "dims": list(self.dims),
                "eigenvalues": list(self.eigenvalues), "metadata": self.metadata,
                "voxels": vox}

    @classmethod
    def from_json(cls, doc: dict) -> "Phantom":
        voxels = {}
        for v in doc["voxels"]:
            comps = []
            for w, d, ev in zip(v["weights"], v["directions"], v["eigenvalues"]):
                comps.append(Component(w, tensor_along(d, tuple(ev)), np.asarray(d, dtype=float)))
            voxels[tuple(v["index"])] = VoxelModel(comps, s0=v["s0"])
        return cls(name=doc["name"], dims=tuple(doc["dims"]), voxels=voxels,
                   eigenvalues=tuple(doc["eigenvalues"]), metadata=doc.get("metadata", {}))

    def save_json(self, path, **extra) -> None:
        doc = self.to_json()
        doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)


_EX, _EY, _EZ = np.eye(3)


def _bands_phantom(name, n, band, circle_radius=None):
    voxels = {}
    for ix in range(n):
        for iy in range(n):
            dirs = [_EZ]
            if iy in band:
                dirs.append(_EX)
            if ix in band:
                dirs.append(_EY)
            if circle_radius is not None:
                cx = cy = (n - 1) / 2.0
                dx, dy = ix - cx, iy - cy
                r = math.hypot(dx, dy)
                if abs(r - circle_radius) < 0.5:
                    dirs.append(np.array([-dy, dx, 0.0]) / r)
            voxels[(ix, iy, 0)] = VoxelModel.from_directions(dirs)
    meta = {"band_indices": list(band), "through_plane": True}
    if circle_radius is not None:
        meta.update(circle_radius=circle_radius, circle_center=[(n - 1) / 2.0] * 2,
                    circle_halfwidth=0.5)
    return Phantom(name=name, dims=(n, n, 1), voxels=voxels, metadata=meta)


def make_phantom1() -> Phantom:
    """12x12 grid: x- and y-oriented bands crossing at the centre, plus a
    through-plane fibre in every voxel."""
    return _bands_phantom("phantom1", 12, (5, 6))


def make_phantom2() -> Phantom:
    """16x16 grid: the phantom-1 layout with an added circular fibre of radius 6."""
    return _bands_phantom("phantom2", 16, (7, 8), circle_radius=6.0)


def make_phantom(name: str) -> Phantom:
    makers = {"phantom1": make_phantom1, "phantom2": make_phantom2}
    if name not in makers:
        raise ValueError(f"unknown phantom {name!r}; expected one of {sorted(makers)}")
    return makers[name]()


def sample_field(phantom: Phantom, directions, b: float) -> np.ndarray:
    """Noise-free signal field of shape dims + (K,)."""
    dirs = as_directions(directions)
    out = np.empty(tuple(phantom.dims) + (len(dirs),))
    for idx, vox in phantom.voxels.items():
        out[idx] = synth_signal(vox, b, dirs)
    return out


def measure_snr(clean, noisy) -> float:
    """20 log10(||s|| / ||s - s_noisy||) in dB; +inf for identical fields."""
    clean = np.asarray(clean, dtype=float)
    noisy = np.asarray(noisy, dtype=float)
    if clean.shape != noisy.shape:
        raise ValueError(f"shape mismatch {clean.shape} vs {noisy.shape}")
    err = l2_norm(clean - noisy)
    if err == 0:
        return math.inf
    return 20.0 * math.log10(l2_norm(clean) / err)


def _standard_draws(shape, seed: int):
    """Two standard-normal fields, one independent stream per voxel."""
    *vox_shape, k = shape
    n1 = np.empty(shape)
    n2 = np.empty(shape)
    for flat, idx in enumerate(np.ndindex(*vox_shape)):
        rng = np.random.default_rng([int(seed), flat])
        draws = rng.standard_normal((2, k))
        n1[idx], n2[idx] = draws
    return n1, n2


def rician(field_, sigma: float, n1, n2) -> np.ndarray:
    return np.sqrt((field_ + sigma * n1) ** 2 + (sigma * n2) ** 2)


def add_rician_noise(field_, target_snr_db: float, seed: int = 0):
    """Rician-corrupt ``field_`` so that its SNR is close to ``target_snr_db``.

    The noise level is found by bisection on log(sigma) with fixed normal
    draws, so the result is a deterministic function of ``seed``.

    Returns
    -------
    noisy : ndarray
    achieved_snr_db : float
    """
    field_ = np.asarray(field_, dtype=float)
    if math.isinf(target_snr_db) and target_snr_db > 0:
        return field_.copy(), math.inf
    if not math.isfinite(target_snr_db):
        raise ValueError(f"target SNR must be finite or +inf, got {target_snr_db}")
    n1, n2 = _standard_draws(field_.shape, seed)

    def snr_at(log_sigma):
        return measure_snr(field_, rician(field_, math.exp(log_sigma), n1, n2))

    # Gaussian-noise estimate, then widen until it brackets the target
    guess = l2_norm(field_) / (10 ** (target_snr_db / 20.0) * math.sqrt(2.0 * field_.size))
    lo, hi = math.log(guess) - math.log(10.0), math.log(guess) + math.log(10.0)
    while snr_at(lo) < target_snr_db:
        lo -= math.log(10.0)
    while snr_at(hi) > target_snr_db:
        hi += math.log(10.0)
    for _ in range(SNR_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if snr_at(mid) > target_snr_db:
            lo = mid
        else:
            hi = mid
    best = min((lo, hi, 0.5 * (lo + hi)), key=lambda ls: abs(snr_at(ls) - target_snr_db))
    noisy = rician(field_, math.exp(best), n1, n2)
    return noisy, measure_snr(field_, noisy)
