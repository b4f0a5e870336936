"""Reconstruction solvers: voxelwise FISTA, Chambolle TV denoising and the
split Bregman (ADMM) scheme that couples them."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .field import (apply_A, causal_differences, causal_differences_adjoint, l1_norm,
                    l2_norm, tv_field)

log = logging.getLogger(__name__)

NU_MARGIN = 1.01


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, message: str = "non-finite values"):
        super().__init__(f"split Bregman diverged at iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class SolverParams:
    lam: float = 0.03
    mu: float = 0.05
    gamma: float = 0.5
    max_bregman_iters: int = 20
    inner_fista_iters: int = 200
    inner_tv_iters: int = 100
    rel_change_tol: float = 1e-4

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0:
            raise ValueError("lam and mu must be non-negative")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if min(self.max_bregman_iters, self.inner_fista_iters, self.inner_tv_iters) < 1:
            raise ValueError("iteration budgets must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SolverParams":
        doc = dict(doc)
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown solver parameters: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path) -> "SolverParams":
        doc = load_config(path)
        return cls.from_dict(doc.get("solver", doc))


def load_config(path) -> dict:
    """Read a JSON or TOML config file into a dict."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)


def soft_threshold(t, tau):
    if np.any(np.asarray(tau) < 0):
        raise ValueError("threshold must be non-negative")
    t = np.asarray(t, dtype=float)
    out = np.sign(t) * np.maximum(np.abs(t) - tau, 0.0)
    return float(out) if out.ndim == 0 else out


def operator_norm(A, tol: float = 1e-6, max_iters: int = 10000) -> float:
    """Spectral norm of A A^T by power iteration."""
    A = np.asarray(A, dtype=float)
    gram = A @ A.T
    x = np.random.default_rng(0).standard_normal(gram.shape[0])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iters):
        y = gram @ x
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0
        x = y / new
        if abs(new - est) <= tol * new * 1e-2:
            return new
        est = new
    return est


def lasso_objective(A, c, s, lam) -> np.ndarray:
    """Per-row 0.5 ||A c - s||^2 + lam ||c||_1 for stacked rows c, s."""
    r = c @ A.T - s
    return 0.5 * np.sum(r * r, axis=-1) + lam * np.sum(np.abs(c), axis=-1)


def fista(A, s, lam: float, max_iters: int = 200, tol: float = 1e-4, c0=None,
          nu: float | None = None) -> np.ndarray:
    """FISTA on a stack of independent lasso problems.

    ``s`` has shape (V, K); each row is solved on its own and stops as soon
    as its relative objective change drops below ``tol``, so a row's result
    does not depend on the other rows.
    """
    A = np.asarray(A, dtype=float)
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if lam < 0:
        raise ValueError("lam must be non-negative")
    n_vox, M = s.shape[0], A.shape[1]
    if nu is None:
        nu = NU_MARGIN * operator_norm(A)
    if nu == 0:
        return np.zeros((n_vox, M))
    x = np.zeros((n_vox, M)) if c0 is None else np.array(c0, dtype=float).reshape(n_vox, M)
    y = x.copy()
    t = 1.0
    obj = lasso_objective(A, x, s, lam)
    active = np.arange(n_vox)
    for _ in range(max_iters):
        ya = y[active]
        grad = (ya @ A.T - s[active]) @ A
        x_new = soft_threshold(ya - grad / nu, lam / nu)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y[active] = x_new + ((t - 1.0) / t_new) * (x_new - x[active])
        x[active] = x_new
        t = t_new
        new_obj = lasso_objective(A, x_new, s[active], lam)
        old_obj = obj[active]
        obj[active] = new_obj
        done = np.abs(new_obj - old_obj) <= tol * np.maximum(old_obj, np.finfo(float).tiny)
        active = active[~done]
        if len(active) == 0:
            break
    return x


def fista_voxel(A, s, lam: float, max_iters: int = 200, tol: float = 1e-4, c0=None,
                nu: float | None = None) -> np.ndarray:
    """Solve min 0.5 ||A c - s||^2 + lam ||c||_1 for a single K-vector ``s``."""
    return fista(A, np.asarray(s, dtype=float)[None, :], lam, max_iters, tol, c0, nu)[0]


def _grid_dims(shape) -> int:
    return max(1, sum(1 for n in shape[:3] if n > 1))


def tv_denoise(image, weight: float, max_iters: int = 100, tol: float = 0.0,
               step: float | None = None) -> np.ndarray:
    """Chambolle's dual projection for min 0.5 ||u - f||^2 + weight * TV(u).

    ``image`` is 3-D, or 4-D with a trailing channel axis in which case every
    channel is denoised independently. TV uses the causal clique; the default
    dual step is 1/(4 d) for d non-singleton grid axes.
    """
    f = np.asarray(image, dtype=float)
    if weight < 0:
        raise ValueError("weight must be non-negative")
    if weight == 0 or f.size == 0:
        return f.copy()
    tau = step if step is not None else 1.0 / (4.0 * _grid_dims(f.shape))
    p = np.zeros(f.shape + (3,))
    u = f.copy()
    f_scaled = f / weight
    for _ in range(max_iters):
        g = causal_differences(causal_differences_adjoint(p) - f_scaled)
        mag = np.sqrt(np.sum(g * g, axis=-1, keepdims=True))
        p = (p - tau * g) / (1.0 + tau * mag)
        u_new = f - weight * causal_differences_adjoint(p)
        change = np.max(np.abs(u_new - u))
        u = u_new
        if change <= tol:
            break
    return u


def sparse_only_reconstruct(A, s, params: SolverParams | None = None,
                            prefilter_tv: bool = False) -> np.ndarray:
    """Voxel-by-voxel lasso; optionally TV-filter each channel first."""
    params = params or SolverParams()
    A = np.asarray(A, dtype=float)
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != A.shape[0]:
        raise ValueError(f"signal has {s.shape[-1]} channels, A has {A.shape[0]} rows")
    if prefilter_tv:
        s = tv_denoise(s, params.mu, params.inner_tv_iters)
    flat = s.reshape(-1, s.shape[-1])
    c = fista(A, flat, params.lam, params.inner_fista_iters, params.rel_change_tol)
    return c.reshape(s.shape[:-1] + (A.shape[1],))


def full_objective(A, c, s, lam, mu) -> float:
    Ac = apply_A(A, c)
    return 0.5 * l2_norm(Ac - s) ** 2 + lam * l1_norm(c) + mu * tv_field(Ac)


@dataclass
class SplitBregmanState:
    c: np.ndarray
    u: np.ndarray
    b: np.ndarray
    iteration: int = 0
    objective_trace: list[float] = field(default_factory=list)
    gap_trace: list[float] = field(default_factory=list)
    change_trace: list[float] = field(default_factory=list)

    def trace_rows(self):
        for i, (obj, gap, ch) in enumerate(zip(self.objective_trace, self.gap_trace,
                                               self.change_trace), start=1):
            yield {"iteration": i, "objective": obj, "feasibility_gap": gap,
                   "relative_change": ch}


def split_bregman_reconstruct(A, s, params: SolverParams | None = None) -> SplitBregmanState:
    """ADMM for 0.5||A{c} - s||^2 + lam ||c||_1 + mu TV(A{c}).

    One sparse-coding step and one TV step per Bregman update, FISTA warm
    started from the previous cycle.
    """
    params = params or SolverParams()
    A = np.asarray(A, dtype=float)
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != A.shape[0]:
        raise ValueError(f"signal has {s.shape[-1]} channels, A has {A.shape[0]} rows")
    nu = NU_MARGIN * operator_norm(A)
    lam, mu, gamma = params.lam, params.mu, params.gamma
    vox_shape = s.shape[:-1]
    M = A.shape[1]
    state = SplitBregmanState(c=np.zeros(vox_shape + (M,)), u=s.copy(), b=np.zeros_like(s))
    for it in range(1, params.max_bregman_iters + 1):
        d = state.u - state.b
        c_new = fista(A, d.reshape(-1, d.shape[-1]), lam / gamma, params.inner_fista_iters,
                      params.rel_change_tol, c0=state.c.reshape(-1, M), nu=nu)
        c_new = c_new.reshape(vox_shape + (M,))
        Ac = apply_A(A, c_new)
        d = (s + gamma * (Ac + state.b)) / (1.0 + gamma)
        u = tv_denoise(d, mu / (1.0 + gamma), params.inner_tv_iters)
        b = state.b + (Ac - u)
        if not (np.all(np.isfinite(c_new)) and np.all(np.isfinite(u)) and np.all(np.isfinite(b))):
            raise DivergenceError(it)
        denom = max(l2_norm(c_new), np.finfo(float).tiny)
        change = l2_norm(c_new - state.c) / denom
        state.c, state.u, state.b, state.iteration = c_new, u, b, it
        state.objective_trace.append(
            0.5 * l2_norm(Ac - s) ** 2 + lam * l1_norm(c_new) + mu * tv_field(Ac))
        state.gap_trace.append(l2_norm(Ac - u))
        state.change_trace.append(change)
        log.debug("bregman %d: objective %.6g gap %.3g change %.3g", it,
                  state.objective_trace[-1], state.gap_trace[-1], change)
        if change < params.rel_change_tol:
            break
    return state
