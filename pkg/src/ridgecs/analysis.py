"""ODFs, fibre-direction extraction and the reconstruction quality metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dictionary import build_sh_dictionary
from .sphere import Tessellation

log = logging.getLogger(__name__)

REL_THRESHOLD = 0.4
MERGE_ANGLE_DEG = 15.0


@dataclass
class OdfField:
    values: np.ndarray          # dims + (V,)
    tess: Tessellation
    degenerate: np.ndarray      # dims, True where the raw ODF was all zero


def _normalize_odf(raw: np.ndarray, tess: Tessellation) -> OdfField:
    raw = np.clip(raw, 0.0, None)
    total = raw.sum(axis=-1, keepdims=True)
    degenerate = total[..., 0] <= 0
    if np.any(degenerate):
        log.warning("%d voxel(s) have an all-zero ODF; using a uniform ODF",
                    int(degenerate.sum()))
    safe = np.where(total > 0, total, 1.0)
    values = np.where(total > 0, raw / safe, 1.0 / raw.shape[-1])
    return OdfField(values=values, tess=tess, degenerate=degenerate)


def odf_from_coefficients(c, Q, tess: Tessellation) -> OdfField:
    """Tuch ODF from representation coefficients: Q c, clamped and sum-normalized."""
    c = np.asarray(c, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if c.shape[-1] != Q.shape[1]:
        raise ValueError(f"coefficients have {c.shape[-1]} channels, Q has {Q.shape[1]} columns")
    return _normalize_odf(c @ Q.T, tess)


def odf_from_signal(signal, tess: Tessellation, sh_degree: int = 16) -> OdfField:
    """Tuch ODF from signal values sampled at the tessellation vertices.

    Used for atom families without a Legendre expansion: the signal is fitted
    by even spherical harmonics and transformed degree by degree.
    """
    signal = np.asarray(signal, dtype=float)
    sh = build_sh_dictionary(sh_degree)
    Y = sh.evaluate(tess.vertices)
    coef, *_ = np.linalg.lstsq(Y, signal.reshape(-1, signal.shape[-1]).T, rcond=None)
    Q = sh.evaluate_frt(tess.vertices)
    raw = (Q @ coef).T.reshape(signal.shape)
    return _normalize_odf(raw, tess)


@dataclass
class Mode:
    direction: np.ndarray
    value: float


def _padded_neighbors(tess: Tessellation) -> np.ndarray:
    width = max(len(n) for n in tess.neighbors)
    out = np.empty((len(tess.neighbors), width), dtype=int)
    for i, nb in enumerate(tess.neighbors):
        out[i, : len(nb)] = nb
        out[i, len(nb):] = i
    return out


def find_modes(odf, tess: Tessellation, rel_threshold: float = REL_THRESHOLD,
               merge_angle_deg: float = MERGE_ANGLE_DEG) -> list[Mode]:
    """Local maxima of one voxel's ODF on the tessellation.

    Each vertex climbs to its best neighbour until no neighbour is higher;
    the maxima reached are merged when closer than ``merge_angle_deg`` (axially)
    and dropped when their height above the ODF minimum is under
    ``rel_threshold`` of the full range.
    """
    if not 0 < rel_threshold < 1:
        raise ValueError("rel_threshold must lie in (0, 1)")
    f = np.asarray(odf, dtype=float)
    lo, hi = float(f.min()), float(f.max())
    if hi - lo <= 1e-12 * max(abs(hi), abs(lo), np.finfo(float).tiny):
        return []
    nbrs = _padded_neighbors(tess)
    best = nbrs[np.arange(len(f)), np.argmax(f[nbrs], axis=1)]
    step = np.where(f[best] > f, best, np.arange(len(f)))
    while True:
        nxt = step[step]
        if np.array_equal(nxt, step):
            break
        step = nxt
    peaks = np.unique(step)
    peaks = peaks[f[peaks] - lo >= rel_threshold * (hi - lo)]
    peaks = peaks[np.argsort(-f[peaks], kind="stable")]
    cos_merge = math.cos(math.radians(merge_angle_deg))
    kept: list[Mode] = []
    for p in peaks:
        v = tess.vertices[p]
        if any(abs(float(v @ m.direction)) >= cos_merge for m in kept):
            continue
        if v[2] < 0 or (v[2] == 0 and (v[1] < 0 or (v[1] == 0 and v[0] < 0))):
            v = -v
        kept.append(Mode(direction=v.copy(), value=float(f[p])))
    return kept


def find_mode_field(odf: OdfField, rel_threshold: float = REL_THRESHOLD,
                    merge_angle_deg: float = MERGE_ANGLE_DEG) -> dict:
    """Modes for every voxel, keyed by voxel index tuple."""
    vals = odf.values
    return {idx: find_modes(vals[idx], odf.tess, rel_threshold, merge_angle_deg)
            for idx in np.ndindex(vals.shape[:-1])}


def angular_error(true_dir, est_dir) -> float:
    """Axial angle in degrees between two directions."""
    a = np.asarray(true_dir, dtype=float)
    b = np.asarray(est_dir, dtype=float)
    cos = abs(float(a @ b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.degrees(math.acos(min(1.0, cos)))


def match_errors(true_dirs, est_dirs) -> list[float]:
    """Greedy nearest pairing; one error per true fibre, 90 when unmatched."""
    true_dirs = [np.asarray(t, dtype=float) for t in true_dirs]
    est_dirs = [np.asarray(e, dtype=float) for e in est_dirs]
    pairs = sorted((angular_error(t, e), i, j)
                   for i, t in enumerate(true_dirs) for j, e in enumerate(est_dirs))
    errors = [90.0] * len(true_dirs)
    used_t, used_e = set(), set()
    for err, i, j in pairs:
        if i in used_t or j in used_e:
            continue
        errors[i] = err
        used_t.add(i)
        used_e.add(j)
    return errors


def _mode_dirs(modes) -> list:
    return [m.direction if isinstance(m, Mode) else m for m in modes]


def match_and_average_error(truth: dict, modes: dict) -> float:
    """Average angular error over every true fibre in the grid."""
    errors = []
    for idx, dirs in truth.items():
        errors += match_errors(dirs, _mode_dirs(modes.get(idx, [])))
    if not errors:
        return 0.0
    return float(np.mean(errors))


def nmse(reference, estimate) -> float:
    """Mean over voxels of ||s(r) - s_hat(r)||^2 / ||s(r)||^2."""
    ref = np.asarray(reference, dtype=float)
    est = np.asarray(estimate, dtype=float)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {est.shape}")
    ref = ref.reshape(-1, ref.shape[-1])
    est = est.reshape(-1, est.shape[-1])
    den = np.sum(ref * ref, axis=1)
    ok = den > 0
    if not np.all(ok):
        log.warning("excluding %d zero reference voxel(s) from NMSE", int((~ok).sum()))
    if not np.any(ok):
        raise ValueError("reference field is identically zero")
    num = np.sum((ref[ok] - est[ok]) ** 2, axis=1)
    return float(np.mean(num / den[ok]))


def false_detection_rate(truth_counts, estimated_counts) -> float:
    """Percent mean of |M - M_hat| / M over voxels."""
    m = np.asarray(truth_counts, dtype=float)
    m_hat = np.asarray(estimated_counts, dtype=float)
    if m.shape != m_hat.shape:
        raise ValueError("count arrays differ in shape")
    if np.any(m < 1):
        raise ValueError("true fibre counts must be >= 1")
    return float(100.0 * np.mean(np.abs(m - m_hat) / m))


def mode_counts(modes: dict, dims) -> np.ndarray:
    out = np.zeros(dims, dtype=int)
    for idx, ms in modes.items():
        out[idx] = len(ms)
    return out


def modes_to_json(modes: dict, rel_threshold=REL_THRESHOLD,
                  merge_angle_deg=MERGE_ANGLE_DEG) -> dict:
    return {
        "rel_threshold": rel_threshold,
        "merge_angle_deg": merge_angle_deg,
        "voxels": [{"index": list(idx),
                    "modes": [{"direction": m.direction.tolist(), "value": m.value} for m in ms]}
                   for idx, ms in sorted(modes.items())],
    }


def modes_from_json(doc: dict) -> dict:
    return {tuple(v["index"]): [Mode(np.asarray(m["direction"], dtype=float), m["value"])
                                for m in v["modes"]]
            for v in doc["voxels"]}
