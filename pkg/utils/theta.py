"""
Weights for the coarse correction U = u^k + θ (C^{k+1} - C^k).

estimate_theta builds θ̄ from the fine history and a weighted sum of past
coarse-solver differences; damp_theta turns θ̄ into the θ actually used.
The strip model problem at the bottom of the module runs the weighted
iteration on [0,1]x[0,H] with r = 1, where the admissible θ window of every
node is known from the whole-strip fine solution.
"""
import sys
import os
import logging
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numba as nb
import numpy as np

from config.config import FSM_MAX_ROUNDS, ORACLE_MARGIN, THETA_DEFAULTS
from utils.errors import ConfigurationError
from utils.sweep import INF, Field, _godunov, _numba_setting, fsm_solve

logger = logging.getLogger(__name__)

POLICIES = ("fixed", "estimated", "oracle", "oracle_margin")


@dataclass(frozen=True)
class ThetaParams:
    x0: float = THETA_DEFAULTS["x0"]
    gamma: float = THETA_DEFAULTS["gamma"]
    delta: float = THETA_DEFAULTS["delta"]
    omega: Tuple[float, float, float] = THETA_DEFAULTS["omega"]
    bootstrap: float = THETA_DEFAULTS["bootstrap"]
    denom_guard_factor: float = THETA_DEFAULTS["denom_guard_factor"]

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigurationError(f"theta gamma must be positive, got {self.gamma}")
        if not 0 < self.delta <= 1:
            raise ConfigurationError(f"theta delta must lie in (0, 1], got {self.delta}")
        if len(self.omega) != 3 or any(w < 0 for w in self.omega) or not any(self.omega):
            raise ConfigurationError(f"theta omega must be three non-negative weights, not all zero, got {self.omega}")
        if self.bootstrap < 0:
            raise ConfigurationError(f"theta bootstrap must be >= 0, got {self.bootstrap}")
        if self.denom_guard_factor < 0:
            raise ConfigurationError("theta denom_guard_factor must be >= 0")

    def guard(self, scale=1.0):
        return self.denom_guard_factor * max(1.0, float(scale))


@dataclass(frozen=True)
class ThetaPolicy:
    """How θ is chosen: a constant, the estimator, or (model problem only) the oracle."""

    kind: str = "estimated"
    value: float = 0.0
    params: ThetaParams = field(default_factory=ThetaParams)
    margin: float = ORACLE_MARGIN

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ConfigurationError(f"theta policy must be one of {POLICIES}, got '{self.kind}'")
        if self.kind == "fixed" and not np.isfinite(self.value):
            raise ConfigurationError("fixed theta must be finite")


@nb.njit(**_numba_setting)
def _damp(tb, x0, gamma, delta):
    z = (tb - x0) / gamma
    if z > 40.0:
        sig = 0.0
    elif z < -40.0:
        sig = 1.0
    else:
        sig = 1.0 / (1.0 + np.exp(z))
    v = sig * tb + (1.0 - sig) * delta * tb
    return v if v > 0.0 else 0.0


@nb.njit(**_numba_setting)
def _estimate(u_hi, u_lo, has_lo, c0, c1, c2, c3, n_c, om0, om1, om2, bootstrap, guard):
    """
    θ̄ from u^k - u^{k-1} over the weighted coarse differences.

    c0..c3 are coarse-solver values newest first; n_c of them exist. Missing
    terms are dropped and the remaining weights renormalized. Returns
    (θ̄, fell_back).
    """
    if not has_lo or u_hi >= INF or u_lo >= INF:
        return bootstrap, True
    if n_c < 2 or c0 >= INF or c1 >= INF:
        return bootstrap, True
    acc = om0 * (c0 - c1)
    wsum = om0
    if n_c >= 3 and c2 < INF:
        acc += om1 * (c1 - c2)
        wsum += om1
        if n_c >= 4 and c3 < INF:
            acc += om2 * (c2 - c3)
            wsum += om2
    if wsum <= 0.0:
        return bootstrap, True
    den = acc / wsum
    if not abs(den) >= guard:
        return bootstrap, True
    tb = (u_hi - u_lo) / den
    if not np.isfinite(tb):
        return bootstrap, True
    return tb, False


@nb.njit(**_numba_setting)
def _estimate_many(u_hi, u_lo, has_lo, c0, c1, c2, c3, n_c, om0, om1, om2, bootstrap, guard):
    n = u_hi.size
    out = np.empty(n)
    fell = np.zeros(n, dtype=np.bool_)
    for t in range(n):
        value, fallback = _estimate(u_hi[t], u_lo[t], has_lo, c0[t], c1[t], c2[t], c3[t], n_c,
                                    om0, om1, om2, bootstrap, guard)
        out[t] = value
        fell[t] = fallback
    return out, fell


@nb.njit(**_numba_setting)
def _damp_many(tb, x0, gamma, delta):
    out = np.empty(tb.size)
    for t in range(tb.size):
        out[t] = _damp(tb[t], x0, gamma, delta)
    return out


def theta_single(u_k, u_km1, c_next, c_now):
    """Single-difference estimate (u^k - u^{k-1}) / (C^{k+1} - C^k)."""
    return (np.asarray(u_k) - np.asarray(u_km1)) / (np.asarray(c_next) - np.asarray(c_now))


def _finite_scale(*arrays):
    scale = 0.0
    for a in arrays:
        a = np.asarray(a, dtype=np.float64)
        finite = a[np.abs(a) < INF]
        if finite.size:
            scale = max(scale, float(np.max(np.abs(finite))))
    return scale


def estimate_theta(u_k, u_km1, c_hist, params, return_fallback=False):
    """
    Weighted-history estimate θ̄ per node.

    Args:
        u_k (np.ndarray): fine values at iteration k
        u_km1 (np.ndarray | None): fine values at k-1; None while history is short
        c_hist (list): coarse-solver evaluations newest first, C^{k+1}, C^k, ...
            (up to four; at least two are needed)
        params (ThetaParams): weights, bootstrap and guard factor
        return_fallback (bool): also return the mask of bootstrap nodes

    Returns:
        np.ndarray: θ̄, with params.bootstrap wherever the estimate is unavailable
    """
    u_k = np.asarray(u_k, dtype=np.float64)
    shape = u_k.shape
    flat = [np.ascontiguousarray(np.asarray(c, dtype=np.float64).reshape(-1)) for c in c_hist[:4]]
    n_c = len(flat)
    filler = np.full(u_k.size, INF)
    while len(flat) < 4:
        flat.append(filler)
    has_lo = u_km1 is not None
    u_lo = np.asarray(u_km1, dtype=np.float64).reshape(-1) if has_lo else filler
    guard = params.guard(_finite_scale(u_k))
    om0, om1, om2 = (float(w) for w in params.omega)
    tb, fell = _estimate_many(np.ascontiguousarray(u_k.reshape(-1)), np.ascontiguousarray(u_lo), has_lo,
                              flat[0], flat[1], flat[2], flat[3], n_c,
                              om0, om1, om2, float(params.bootstrap), float(guard))
    tb = tb.reshape(shape)
    if return_fallback:
        return tb, fell.reshape(shape)
    return tb


def damp_theta(theta_bar, params):
    """
    Sigmoid damping [σ θ̄ + (1 - σ) δ θ̄]⁺ with σ = 1 / (1 + exp((θ̄ - x0) / γ)).

    Large θ̄ is pulled down to δθ̄; the result is never negative.
    """
    if np.ndim(theta_bar) == 0:
        return float(_damp(float(theta_bar), params.x0, params.gamma, params.delta))
    tb = np.asarray(theta_bar, dtype=np.float64)
    return _damp_many(np.ascontiguousarray(tb.reshape(-1)), params.x0, params.gamma,
                      params.delta).reshape(tb.shape)


# ---------------------------------------------------------------------------
# Strip model problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelProblem:
    """
    Strip [0,1]x[0,H] with r = 1 and Γ = bottom edge ∪ left edge, g exact.

    Coarse nodes sit at (iH, jh), i = 0..N, j = 0..M, i.e. fine index (iM, j).
    """

    N: int
    M: int

    def __post_init__(self):
        if self.N < 2 or self.M < 2:
            raise ConfigurationError(f"model problem needs N, M >= 2, got N={self.N}, M={self.M}")

    @property
    def H(self):
        return 1.0 / self.N

    @property
    def h(self):
        return 1.0 / (self.N * self.M)

    @property
    def fine_shape(self):
        return (self.N * self.M + 1, self.M + 1)

    def fine_coords(self):
        P, Q = np.meshgrid(np.arange(self.fine_shape[0]), np.arange(self.fine_shape[1]), indexing="ij")
        scale = float(self.N * self.M)
        return P / scale, Q / scale

    def exact(self):
        X, Y = self.fine_coords()
        return np.hypot(X, Y)


def solve_strip(problem, max_rounds=FSM_MAX_ROUNDS):
    """Whole-strip fine solution u^f."""
    exact = problem.exact()
    mask = np.zeros(problem.fine_shape, dtype=bool)
    mask[0, :] = True
    mask[:, 0] = True
    field = Field.from_boundary(mask, exact)
    fsm_solve(field, np.ones(problem.fine_shape), problem.h, max_rounds=max_rounds)
    return field.values


def coarse_column(U, i, H):
    """C_H(U) on column i: 1D advance below the top row, 2D Godunov on it."""
    M = U.shape[1] - 1
    col = U[i - 1, :] + H
    col[M] = _godunov(U[i - 1, M], U[i, 0], H)
    return col


def initial_coarse(problem, uf):
    U = np.empty((problem.N + 1, problem.M + 1))
    U[0, :] = uf[0, :]
    U[:, 0] = uf[:, 0]
    for i in range(1, problem.N + 1):
        U[i, 1:] = coarse_column(U, i, problem.H)[1:]
    return U


def fine_pass(problem, U, max_rounds=FSM_MAX_ROUNDS):
    """
    Subdomain solves on Ω_i = [iH,(i+1)H]x[0,H] with the left edge fixed to
    U[i] and the bottom edge exact; returns u^k on the coarse nodes.
    """
    N, M = problem.N, problem.M
    exact = problem.exact()
    u = np.empty_like(U)
    u[0, :] = U[0, :]
    ones = np.ones((M + 1, M + 1))
    for i in range(N):
        mask = np.zeros((M + 1, M + 1), dtype=bool)
        mask[0, :] = True
        mask[:, 0] = True
        values = exact[i * M:(i + 1) * M + 1, :].copy()
        values[0, :] = U[i, :]
        field = Field.from_boundary(mask, values)
        fsm_solve(field, ones, problem.h, max_rounds=max_rounds)
        u[i + 1, :] = field.values[M, :]
    return u


def oracle_bounds(U_k, u_k, uf, D):
    """
    Admissible θ window per node.

    With D = C^{k+1} - C^k, θ in (m̃, M̄) keeps u^f < U^{k+1} < U^k where
    M̄ = (u^f - u^k)/D, m̄ = (U^k - u^k)/D and m̃ = max(m̄, 0). A zero D
    imposes no constraint: M̄ = +inf, m̃ = 0.

    Returns:
        tuple: (m̃, M̄)
    """
    U_k, u_k, uf, D = (np.asarray(a, dtype=np.float64) for a in (U_k, u_k, uf, D))
    nonzero = D != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        Mbar = np.where(nonzero, (uf - u_k) / D, np.inf)
        mbar = np.where(nonzero, (U_k - u_k) / D, -np.inf)
    return np.maximum(mbar, 0.0), Mbar


@dataclass
class ModelResult:
    problem: ModelProblem
    policy: ThetaPolicy
    uf_strip: np.ndarray
    uf: np.ndarray
    records: List[dict]
    U_history: List[np.ndarray]
    u_history: List[np.ndarray]
    windows: List[np.ndarray]
    reference_l1: float
    reference_l1_rel: float
    reference_linf: float


def _choose_theta(policy, D, mtilde, Mbar, u, u_prev, c_hist, params):
    if policy.kind == "fixed":
        return np.full(D.shape, float(policy.value))
    if policy.kind == "oracle":
        window = (D < 0) & (mtilde < Mbar)
        return np.where(window, mtilde + 0.5 * (Mbar - mtilde), 0.0)
    if policy.kind == "oracle_margin":
        usable = (D < 0) & np.isfinite(Mbar)
        return np.where(usable, np.maximum(Mbar - policy.margin, 0.0), 0.0)
    tb, fell = estimate_theta(u, u_prev, c_hist, params, return_fallback=True)
    return np.where(fell, params.bootstrap, damp_theta(tb, params))


def model_run(N, M, policy=None, max_k=None, max_rounds=FSM_MAX_ROUNDS):
    """
    Weighted two-scale iteration on the strip model problem.

    Args:
        N (int): coarse cells along x
        M (int): fine cells per coarse cell
        policy (ThetaPolicy): θ choice; estimated with default parameters if None
        max_k (int): number of coarse updates, default N
        max_rounds (int): sweep round budget of each fine solve

    Returns:
        ModelResult: per-k records (k, linf, l1_abs, min_Mbar, max_theta_used,
            windows_ok) and the coarse and fine iterates. Record k pairs the
            errors of U^k with the window of the update that produced U^k, so
            record 0 carries no window; windows[k] belongs to U^k -> U^{k+1}.
    """
    policy = policy or ThetaPolicy()
    problem = ModelProblem(N, M)
    max_k = N if max_k is None else int(max_k)
    H, h = problem.H, problem.h

    uf_strip = solve_strip(problem, max_rounds=max_rounds)
    uf = uf_strip[::M, :]
    exact = problem.exact()
    reference_l1 = float(h * h * np.sum(np.abs(uf_strip - exact)))
    reference_l1_rel = float(np.sum(np.abs(uf_strip - exact)) / np.sum(exact))
    reference_linf = float(np.max(np.abs(uf - exact[::M, :])))
    logger.info("model strip N=%d M=%d: |u^f - u^exact| L1=%.3e (relative %.3e)", N, M,
                reference_l1, reference_l1_rel)

    U = initial_coarse(problem, uf)
    U_history, u_history, windows, records = [U.copy()], [], [], []
    u_prev = None
    produced = (None, None, None, None)
    c_old = []

    for k in range(max_k):
        u = fine_pass(problem, U, max_rounds=max_rounds)
        C_now = np.vstack([np.full(M + 1, np.nan)] + [coarse_column(U, i, H) for i in range(1, N + 1)])
        U_next = U.copy()
        theta_used = np.zeros_like(U)
        Mbar_all = np.full_like(U, np.inf)
        window_all = np.zeros(U.shape, dtype=bool)
        falling = np.zeros(U.shape, dtype=bool)
        for i in range(1, N + 1):
            C_next = coarse_column(U_next, i, H)
            D = C_next - C_now[i]
            mtilde, Mbar = oracle_bounds(U[i], u[i], uf[i], D)
            hist = [C_next, C_now[i]] + [c[i] for c in c_old]
            theta = _choose_theta(policy, D, mtilde, Mbar, u[i],
                                  None if u_prev is None else u_prev[i], hist, policy.params)
            U_next[i, 1:] = u[i, 1:] + theta[1:] * D[1:]
            theta_used[i, 1:] = theta[1:]
            Mbar_all[i, 1:] = Mbar[1:]
            window_all[i, 1:] = ((D < 0) & (mtilde < Mbar))[1:]
            falling[i, 1:] = (D < 0)[1:]

        records.append(_model_record(k, U, uf, H, h, *produced))
        produced = (Mbar_all, falling, theta_used, window_all)
        windows.append(window_all)
        u_history.append(u)
        u_prev = u
        c_old = [C_now] + c_old[:1]
        U = U_next
        U_history.append(U.copy())

    records.append(_model_record(max_k, U, uf, H, h, *produced))
    return ModelResult(problem=problem, policy=policy, uf_strip=uf_strip, uf=uf, records=records,
                       U_history=U_history, u_history=u_history, windows=windows,
                       reference_l1=reference_l1, reference_l1_rel=reference_l1_rel,
                       reference_linf=reference_linf)


def _model_record(k, U, uf, H, h, Mbar, falling, theta_used, window):
    err = np.abs(U - uf)
    record = {"k": k, "linf": float(np.max(err)), "l1_abs": float(H * h * np.sum(err)),
              "min_Mbar": float("nan"), "max_theta_used": float("nan"), "windows_ok": None}
    if Mbar is not None:
        if np.any(falling):
            record["min_Mbar"] = float(np.min(Mbar[falling]))
        record["max_theta_used"] = float(np.max(theta_used))
        record["windows_ok"] = bool(np.all(window[falling])) if np.any(falling) else True
    return record
