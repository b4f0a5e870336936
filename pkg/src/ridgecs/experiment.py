"""End-to-end pipeline pieces shared by the command line and the sweep runner."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import analysis
from .dictionary import GAUSSIAN, build_dictionary, frt_kernel_matrix
from .field import apply_A
from .phantom import Phantom, add_rician_noise, make_phantom, sample_field
from .solver import SolverParams, sparse_only_reconstruct, split_bregman_reconstruct
from .sphere import Tessellation, greedy_subset, icosphere, spiral_hemisphere

REFERENCE_ORDER = 3
MODES = ("cs", "tv")


@lru_cache(maxsize=None)
def reference_tessellation() -> Tessellation:
    return icosphere(REFERENCE_ORDER)


def gradient_directions(K: int, subset_from: int | None = None) -> np.ndarray:
    """Spiral directions, or a greedy quasi-uniform K-subset of a larger spiral set."""
    if subset_from is None:
        return spiral_hemisphere(K)
    if subset_from < K:
        raise ValueError(f"cannot pick {K} directions out of {subset_from}")
    base = spiral_hemisphere(subset_from)
    return base[np.sort(greedy_subset(base, K))]


def parse_snr(value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    out = float(value)
    if math.isnan(out) or out == -math.inf:
        raise ValueError(f"invalid SNR {value!r}")
    return out


@dataclass
class Dataset:
    phantom: Phantom
    b: float
    directions: np.ndarray
    clean: np.ndarray
    noisy: np.ndarray
    snr_target: float
    snr_achieved: float
    seed: int


def make_dataset(phantom_name: str, b: float, K: int, snr_db, seed: int,
                 subset_from: int | None = None) -> Dataset:
    phantom = make_phantom(phantom_name)
    dirs = gradient_directions(K, subset_from)
    clean = sample_field(phantom, dirs, b)
    snr = parse_snr(snr_db)
    noisy, achieved = add_rician_noise(clean, snr, seed)
    return Dataset(phantom, float(b), dirs, clean, noisy, snr, achieved, int(seed))


@dataclass
class Reconstruction:
    dict_name: str
    mode: str
    coefficients: np.ndarray
    signal_ref: np.ndarray            # reconstructed signal at the reference vertices
    odf: analysis.OdfField
    modes: dict
    trace: list[dict] = field(default_factory=list)
    M: int = 0


def _dictionary_matrices(dict_name: str, b: float, directions: np.ndarray):
    dic = build_dictionary(dict_name, b=b)
    tess = reference_tessellation()
    A = dic.evaluate(directions)
    B = dic.evaluate(tess.vertices)
    Q = None if dic.kind == GAUSSIAN else frt_kernel_matrix(dic, tess)
    return dic, A, B, Q


def reconstruct(signal: np.ndarray, directions: np.ndarray, dict_name: str, mode: str,
                params: SolverParams, b: float, prefilter_tv: bool = False,
                rel_threshold: float = analysis.REL_THRESHOLD,
                merge_angle_deg: float = analysis.MERGE_ANGLE_DEG,
                matrices=None) -> Reconstruction:
    """Reconstruct a signal field and derive reference-set signals, ODFs and modes."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    dic, A, B, Q = matrices or _dictionary_matrices(dict_name, b, directions)
    if signal.shape[-1] != A.shape[0]:
        raise ValueError(f"signal has {signal.shape[-1]} channels but {A.shape[0]} directions")
    if mode == "cs":
        c = sparse_only_reconstruct(A, signal, params, prefilter_tv=prefilter_tv)
        trace = []
    else:
        state = split_bregman_reconstruct(A, signal, params)
        c = state.c
        trace = list(state.trace_rows())
    signal_ref = apply_A(B, c)
    tess = reference_tessellation()
    if Q is None:
        odf = analysis.odf_from_signal(signal_ref, tess)
    else:
        odf = analysis.odf_from_coefficients(c, Q, tess)
    modes = analysis.find_mode_field(odf, rel_threshold, merge_angle_deg)
    return Reconstruction(dict_name, mode, c, signal_ref, odf, modes, trace, M=dic.M)


def reference_signal(phantom: Phantom, b: float) -> np.ndarray:
    return sample_field(phantom, reference_tessellation().vertices, b)


def evaluate(phantom: Phantom, b: float, signal_ref: np.ndarray, modes: dict) -> dict:
    """NMSE against the reference set, average angular error and P_d."""
    ref = reference_signal(phantom, b)
    truth = phantom.fiber_directions()
    return {
        "nmse": analysis.nmse(ref, signal_ref),
        "delta_deg": analysis.match_and_average_error(truth, modes),
        "pd_percent": analysis.false_detection_rate(
            phantom.counts(), analysis.mode_counts(modes, phantom.dims)),
    }


def run_cell(phantom_name: str, b: float, K: int, snr_db, dict_name: str, mode: str,
             seed: int, params: SolverParams, subset_from: int | None = None,
             prefilter_tv: bool = False, rel_threshold: float = analysis.REL_THRESHOLD,
             merge_angle_deg: float = analysis.MERGE_ANGLE_DEG) -> dict:
    data = make_dataset(phantom_name, b, K, snr_db, seed, subset_from)
    rec = reconstruct(data.noisy, data.directions, dict_name, mode, params, b,
                      prefilter_tv, rel_threshold, merge_angle_deg)
    metrics = evaluate(data.phantom, b, rec.signal_ref, rec.modes)
    metrics["snr_achieved_db"] = data.snr_achieved
    metrics["iterations"] = len(rec.trace) if rec.trace else 0
    return metrics
