"""
Two-scale iteration for |∇u| = r on [0,1]^d.

Every coarse-family value (non-shifted and shifted coarse grids) lives in one
"skeleton" array indexed by global fine index (p, q); each coarse grid is a
strided view of it. One iteration is:

    solve_fine     subdomain sweeps with wind-gated boundary data, then merge
    coarse_update  θ-weighted correction on every coarse grid, then causal_sweep

Coarse grids and subdomains are solved by a thread pool over numba kernels
that release the GIL. Every task owns its arrays and results are written back
in task order, so output does not depend on the worker count.
"""
import sys
import os
import time
import logging
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from dataclasses import dataclass, field
from typing import List, Optional

import numba as nb
import numpy as np
from joblib import Parallel, delayed

from config.config import CONV_TOL, FSM_MAX_ROUNDS, MAX_ITERS, REFERENCE_MAX_ROUNDS, UPDATE_ROUNDS
from models.boundary import fixed_nodes
from models.grid import (coarse_lattices, fine_index, fine_lattice, skeleton_mask,
                         subdomain_indices, subdomain_lattice)
from utils.errors import ConfigurationError
from utils.metrics import l1_absolute, l1_relative, linf
from utils.sweep import (INF, Field, _candidate, _candidates_grid, _neighbors, _numba_setting,
                         fsm_solve)
from utils.theta import ThetaPolicy, _damp, _estimate

logger = logging.getLogger(__name__)


@dataclass
class TwoScaleProblem:
    """Static inputs of a run: geometry, sampled slowness and Γ on the fine grid."""

    spec: object
    slowness: object
    boundary: object
    r: np.ndarray
    gamma_mask: np.ndarray
    gamma_values: np.ndarray
    workers: int = 1
    max_rounds: int = FSM_MAX_ROUNDS
    update_rounds: int = UPDATE_ROUNDS

    @property
    def two_d(self):
        return self.spec.d == 2


def prepare(spec, slowness, boundary, workers=1, max_rounds=FSM_MAX_ROUNDS, update_rounds=UPDATE_ROUNDS):
    lattice = fine_lattice(spec)
    r = slowness.sample(spec, lattice)
    mask, values = fixed_nodes(boundary, spec, lattice, slowness)
    if not mask.any():
        raise ConfigurationError("boundary data fixes no node of the fine grid")
    return TwoScaleProblem(spec=spec, slowness=slowness, boundary=boundary, r=r,
                           gamma_mask=mask, gamma_values=values, workers=max(1, int(workers)),
                           max_rounds=int(max_rounds), update_rounds=int(update_rounds))


@dataclass
class CoarseState:
    """Skeleton values U and winds W at iteration k, with short histories."""

    U: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    fixed: np.ndarray
    skeleton: np.ndarray
    k: int = 0
    history: List[np.ndarray] = field(default_factory=list)
    c_history: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def empty(cls, spec):
        shape = spec.fine_shape
        return cls(U=np.full(shape, INF), wx=np.zeros(shape, dtype=np.int8),
                   wy=np.zeros(shape, dtype=np.int8), fixed=np.zeros(shape, dtype=bool),
                   skeleton=skeleton_mask(spec))

    def wind(self, p, q=0):
        return (int(self.wx[p, q]), int(self.wy[p, q]))


@dataclass
class FineState:
    """Subdomain solutions, their merge on the skeleton and the patched fine field."""

    sub_u: np.ndarray
    sub_wx: np.ndarray
    sub_wy: np.ndarray
    sub_kept: np.ndarray
    u: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    patched: np.ndarray
    u_prev: Optional[np.ndarray] = None
    max_rounds_used: int = 0


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@nb.njit(**_numba_setting)
def _axis_sides(k, N, M):
    """
    Subdomains along one axis containing fine index k.

    Returns (a0, sign0, a1, sign1, count); sign is the inward normal component
    of that subdomain at k, 0 when k is interior to it along this axis.
    """
    if k % M == 0:
        c = k // M
        if 0 < c < N:
            return c - 1, -1, c, 1, 2
        if c == 0:
            return 0, 1, 0, 0, 1
        return N - 1, -1, 0, 0, 1
    return k // M, 0, 0, 0, 1


@nb.njit(**_numba_setting)
def _gate(p, q, N, M, two_d, fx, fy, cx, cy, tx, ty):
    """Some adjacent subdomain sees fine, coarse and candidate winds all arriving (>= 0)."""
    xa0, xs0, xa1, xs1, nxo = _axis_sides(p, N, M)
    if two_d:
        ya0, ys0, ya1, ys1, nyo = _axis_sides(q, N, M)
    else:
        ys0, ys1, nyo = 0, 0, 1
    x_shared = nxo == 2
    y_shared = nyo == 2
    any_shared = x_shared or y_shared
    for ia in range(nxo):
        sx = xs0 if ia == 0 else xs1
        if any_shared and not x_shared:
            sx = 0
        for ib in range(nyo):
            sy = ys0 if ib == 0 else ys1
            if any_shared and not y_shared:
                sy = 0
            if sx == 0 and sy == 0:
                continue
            if (fx * sx >= 0 and cx * sx >= 0 and tx * sx >= 0
                    and fy * sy >= 0 and cy * sy >= 0 and ty * sy >= 0):
                return True
    return False


@nb.njit(**_numba_setting)
def _causal_kernel(U, wx, wy, fixed, M, two_d):
    nx, ny = U.shape
    step = 1 if two_d else M
    n_s2 = 2 if two_d else 1
    raised = 0
    for o1 in range(2):
        for o2 in range(n_s2):
            for ii in range(nx):
                p = ii if o1 == 0 else nx - 1 - ii
                on_v = p % M == 0
                for jj in range(ny):
                    q = jj if o2 == 0 else ny - 1 - jj
                    on_h = (q % M == 0) if two_d else on_v
                    if not (on_v or on_h) or fixed[p, q]:
                        continue
                    if two_d and on_v:
                        if wy[p, q] < 0 and q + 1 < ny and U[p, q + 1] < INF and U[p, q] < U[p, q + 1]:
                            U[p, q] = U[p, q + 1]
                            raised += 1
                        if wy[p, q] > 0 and q >= 1 and U[p, q - 1] < INF and U[p, q] < U[p, q - 1]:
                            U[p, q] = U[p, q - 1]
                            raised += 1
                    if on_h:
                        if wx[p, q] < 0 and p + step < nx and U[p + step, q] < INF and U[p, q] < U[p + step, q]:
                            U[p, q] = U[p + step, q]
                            raised += 1
                        if wx[p, q] > 0 and p >= step and U[p - step, q] < INF and U[p, q] < U[p - step, q]:
                            U[p, q] = U[p - step, q]
                            raised += 1
    return raised


@nb.njit(**_numba_setting)
def _merge_kernel(sub_u, sub_wx, sub_wy, sub_kept, cwx, cwy, N, M, two_d, out_u, out_wx, out_wy):
    """
    Merge overlapping subdomain values on the skeleton.

    A receiving subdomain qualifies when the coarse wind and every reached
    fine wind have a non-negative component along its inward normals; the
    value then comes from the subdomain it receives from. Candidates that
    still hold their unchanged arriving datum (sub_kept) are skipped while a
    computed candidate exists. Several qualifying sources, or none, resolve
    to the minimum.
    """
    nx, ny = out_u.shape
    cu = np.empty(4)
    ck = np.zeros(4, dtype=np.bool_)
    fwx = np.zeros(4, dtype=np.int64)
    fwy = np.zeros(4, dtype=np.int64)
    for p in range(nx):
        for q in range(ny):
            if two_d:
                if p % M != 0 and q % M != 0:
                    continue
            elif p % M != 0:
                continue
            xa0, xs0, xa1, xs1, nxo = _axis_sides(p, N, M)
            if two_d:
                ya0, ys0, ya1, ys1, nyo = _axis_sides(q, N, M)
            else:
                ya0, ys0, ya1, ys1, nyo = 0, 0, 0, 0, 1
            x_shared = nxo == 2
            y_shared = nyo == 2

            n = 0
            computed = False
            for ia in range(nxo):
                a = xa0 if ia == 0 else xa1
                for ib in range(nyo):
                    b = ya0 if ib == 0 else ya1
                    cu[n] = sub_u[a, b, p - a * M, q - b * M]
                    ck[n] = sub_kept[a, b, p - a * M, q - b * M]
                    fwx[n] = sub_wx[a, b, p - a * M, q - b * M]
                    fwy[n] = sub_wy[a, b, p - a * M, q - b * M]
                    if cu[n] < INF and not ck[n]:
                        computed = True
                    n += 1

            chosen = -1
            if n > 1:
                for c in range(n):
                    ia = c // nyo
                    ib = c % nyo
                    sx = (xs0 if ia == 0 else xs1) if x_shared else 0
                    sy = (ys0 if ib == 0 else ys1) if y_shared else 0
                    ok = cwx[p, q] * sx >= 0 and cwy[p, q] * sy >= 0
                    for e in range(n):
                        if cu[e] < INF and (fwx[e] * sx < 0 or fwy[e] * sy < 0):
                            ok = False
                    if ok:
                        oa = 1 - ia if x_shared else ia
                        ob = 1 - ib if y_shared else ib
                        o = oa * nyo + ob
                        if cu[o] < INF and not (computed and ck[o]):
                            if chosen < 0 or cu[o] < cu[chosen]:
                                chosen = o
            if chosen < 0:
                for c in range(n):
                    if computed and (ck[c] or cu[c] >= INF):
                        continue
                    if chosen < 0 or cu[c] < cu[chosen]:
                        chosen = c
            out_u[p, q] = cu[chosen]
            out_wx[p, q] = fwx[chosen]
            out_wy[p, q] = fwy[chosen]


# ---------------------------------------------------------------------------
# step 1: coarse initialization
# ---------------------------------------------------------------------------

def _solve_block(mask, values, r, spacing, max_rounds, bc_mask=None, bc_values=None, bc_wx=None, bc_wy=None):
    # arriving data seeds the sweep; only Γ nodes are fixed
    block = Field.from_boundary(mask, values)
    if bc_mask is not None:
        block.values[bc_mask] = bc_values[bc_mask]
        block.wx[bc_mask] = bc_wx[bc_mask]
        block.wy[bc_mask] = bc_wy[bc_mask]
    report = fsm_solve(block, np.ascontiguousarray(r), spacing, max_rounds=max_rounds)
    return block, report


def initialize_coarse(problem):
    """
    U⁰ and W⁰: every coarse grid swept independently, then one causal sweep.

    Raises:
        ConfigurationError: a coarse grid has no fixed node
    """
    spec = problem.spec
    state = CoarseState.empty(spec)
    tasks = []
    for lattice in coarse_lattices(spec):
        mask, values = fixed_nodes(problem.boundary, spec, lattice, problem.slowness)
        if not mask.any():
            raise ConfigurationError(f"coarse grid '{lattice.name}' has no node near Γ; no source is reachable")
        tasks.append((lattice, mask, values))

    results = Parallel(n_jobs=problem.workers, prefer="threads")(
        delayed(_solve_block)(mask, values, problem.r[lattice.slices()], spec.H, problem.max_rounds)
        for lattice, mask, values in tasks
    )
    for (lattice, mask, _), (block, report) in zip(tasks, results):
        sl = lattice.slices()
        state.U[sl] = block.values
        state.wx[sl] = block.wx
        state.wy[sl] = block.wy
        state.fixed[sl] = mask
        logger.debug("coarse grid %s: %d rounds", lattice.name, report.rounds)

    raised = causal_sweep(state, spec)
    state.history = [state.U.copy()]
    logger.info("initialized %d coarse grids (causal sweep raised %d nodes)", len(tasks), raised)
    return state


def causal_sweep(state, spec):
    """
    Raise skeleton nodes that undercut their upwind neighbor on the same grid
    line, sweeping all grids together in the 2^d orderings. Winds are kept.

    Returns:
        int: number of raises
    """
    return int(_causal_kernel(state.U, state.wx, state.wy, state.fixed, spec.M, spec.d == 2))


# ---------------------------------------------------------------------------
# step 2 and 3: subdomain boundary data, fine solves, merge
# ---------------------------------------------------------------------------

def subdomain_bcs(state, spec, boundary):
    """
    Boundary values of one subdomain from the coarse state.

    An entry takes U when its wind arrives through the entry's normal
    (W · n > 0, either normal at corners), INF otherwise.

    Args:
        state (CoarseState): current coarse values and winds
        spec (GridSpec): grid geometry
        boundary (SubdomainBoundary): entries from grid.boundary_of

    Returns:
        dict: NodeId -> value
    """
    out = {}
    for entry in boundary.entries:
        idx = fine_index(spec, entry.node)
        p, q = idx if spec.d == 2 else (idx[0], 0)
        wind = state.wind(p, q)
        arriving = any(sum(w * n for w, n in zip(wind, normal)) > 0 for normal in entry.normals)
        out[entry.node] = float(state.U[p, q]) if arriving else INF
    return out


def boundary_block(state, spec, i, j=0):
    """Arriving-node mask and coarse data on the (M+1)^d block of subdomain (i, j)."""
    M = spec.M
    sl = subdomain_lattice(spec, i, j).slices()
    U, wx, wy = state.U[sl], state.wx[sl], state.wy[sl]
    arriving = np.zeros(U.shape, dtype=bool)
    if spec.d == 1:
        arriving[0, 0] = wx[0, 0] > 0
        arriving[M, 0] = wx[M, 0] < 0
    else:
        west, east = wx[0, :] > 0, wx[M, :] < 0
        south, north = wy[:, 0] > 0, wy[:, M] < 0
        arriving[0, 1:M] = west[1:M]
        arriving[M, 1:M] = east[1:M]
        arriving[1:M, 0] = south[1:M]
        arriving[1:M, M] = north[1:M]
        arriving[0, 0] = west[0] or south[0]
        arriving[M, 0] = east[0] or south[M]
        arriving[0, M] = west[M] or north[0]
        arriving[M, M] = east[M] or north[M]
    arriving &= U < INF
    return arriving, U.copy(), wx.copy(), wy.copy()


def solve_fine(problem, state, previous=None):
    """
    Solve every subdomain with its gated boundary data, then merge at the
    skeleton and assemble the patched fine field.

    Γ nodes inside a subdomain stay fixed at g and keep an Unset wind. Arriving
    coarse data seeds its node with the coarse value and wind; the sweep may
    still lower a seed from inside the subdomain.
    """
    spec = problem.spec
    N, M = spec.N, spec.M
    nb_ = N if spec.d == 2 else 1
    my = M + 1 if spec.d == 2 else 1
    blocks = subdomain_indices(spec)

    def inputs(idx):
        sl = subdomain_lattice(spec, *idx).slices()
        arriving, U, wx, wy = boundary_block(state, spec, *idx)
        bc = arriving & ~problem.gamma_mask[sl]
        return (problem.gamma_mask[sl], problem.gamma_values[sl], problem.r[sl], spec.h,
                problem.max_rounds, bc, U, wx, wy)

    jobs = [inputs(idx) for idx in blocks]
    results = Parallel(n_jobs=problem.workers, prefer="threads")(
        delayed(_solve_block)(*args) for args in jobs
    )

    sub_u = np.empty((N, nb_, M + 1, my))
    sub_wx = np.zeros((N, nb_, M + 1, my), dtype=np.int8)
    sub_wy = np.zeros((N, nb_, M + 1, my), dtype=np.int8)
    sub_kept = np.zeros((N, nb_, M + 1, my), dtype=bool)
    patched = np.full(spec.fine_shape, INF)
    rounds = 0
    for idx, args, (block, report) in zip(blocks, jobs, results):
        a, b = idx if spec.d == 2 else (idx[0], 0)
        sub_u[a, b] = block.values
        sub_wx[a, b] = block.wx
        sub_wy[a, b] = block.wy
        seeded, seed = args[5], args[6]
        sub_kept[a, b] = seeded & (block.values == seed)
        patched[subdomain_lattice(spec, *idx).slices()] = block.values
        rounds = max(rounds, report.rounds)

    u = np.full(spec.fine_shape, INF)
    wx = np.zeros(spec.fine_shape, dtype=np.int8)
    wy = np.zeros(spec.fine_shape, dtype=np.int8)
    _merge_kernel(sub_u, sub_wx, sub_wy, sub_kept, state.wx, state.wy, N, M, spec.d == 2, u, wx, wy)
    patched[state.skeleton] = u[state.skeleton]

    return FineState(sub_u=sub_u, sub_wx=sub_wx, sub_wy=sub_wy, sub_kept=sub_kept, u=u, wx=wx, wy=wy, patched=patched,
                     u_prev=None if previous is None else previous.u, max_rounds_used=rounds)


# ---------------------------------------------------------------------------
# step 4: weighted coarse update
# ---------------------------------------------------------------------------

def _update_grid(lattice, problem, state, fine, c_hist, policy, guard):
    spec = problem.spec
    sl = lattice.slices()

    def grid(a):
        return np.array(a[sl])

    U, wx, wy = grid(state.U), grid(state.wx), grid(state.wy)
    r = grid(problem.r)
    C = [grid(c) for c in c_hist]
    while len(C) < 3:
        C.append(np.full(U.shape, INF))
    has_prev = fine.u_prev is not None
    u_prev = grid(fine.u_prev) if has_prev else np.full(U.shape, INF)
    theta_bar = np.full(U.shape, np.nan)
    theta_used = np.full(U.shape, np.nan)
    weighted = np.zeros(U.shape, dtype=bool)
    params = policy.params
    om0, om1, om2 = (float(w) for w in params.omega)
    _coarse_update_kernel(U, wx, wy, grid(state.fixed), r, spec.H, grid(fine.u), grid(fine.wx), grid(fine.wy),
                          grid(state.wx), grid(state.wy), u_prev, has_prev,
                          C[0], C[1], C[2], len(c_hist), policy.kind == "estimated", float(policy.value),
                          params.x0, params.gamma, params.delta, om0, om1, om2, float(params.bootstrap),
                          float(guard), lattice.origin[0], lattice.origin[1], lattice.stride,
                          spec.N, spec.M, spec.d == 2, problem.update_rounds,
                          theta_bar, theta_used, weighted)
    return U, wx, wy, theta_bar, theta_used, weighted


def coarse_snapshot(problem, state):
    """C_H(nbrs(U)) on every coarse grid, stored on the skeleton."""
    C = np.full(problem.spec.fine_shape, INF)
    for lattice in coarse_lattices(problem.spec):
        sl = lattice.slices()
        C[sl] = _candidates_grid(np.ascontiguousarray(state.U[sl]), np.ascontiguousarray(problem.r[sl]),
                                 problem.spec.H)
    return C


def coarse_update(problem, state, fine, policy):
    """
    U^{k+1} from U^k and the merged fine values u^k, in place.

    Each coarse grid is Gauss-Seidel swept from U^k. A node passing the wind
    gate takes u^k + θ (Ũ - C^k), where Ũ is the coarse solver on the current
    neighbors and C^k the same solver on U^k; any other node takes u^k. The
    wind becomes w^k. A causal sweep follows.

    Returns:
        dict: θ statistics and the number of weighted nodes
    """
    if policy.kind not in ("fixed", "estimated"):
        raise ConfigurationError(f"theta policy '{policy.kind}' is only available for the model problem")
    spec = problem.spec
    C_now = coarse_snapshot(problem, state)
    c_hist = [C_now] + state.c_history[:2]
    finite = fine.u[state.skeleton]
    finite = finite[finite < INF]
    guard = policy.params.guard(float(np.max(np.abs(finite))) if finite.size else 1.0)

    lattices = coarse_lattices(spec)
    results = Parallel(n_jobs=problem.workers, prefer="threads")(
        delayed(_update_grid)(lattice, problem, state, fine, c_hist, policy, guard) for lattice in lattices
    )
    theta_bar = np.full(spec.fine_shape, np.nan)
    theta_used = np.full(spec.fine_shape, np.nan)
    weighted = np.zeros(spec.fine_shape, dtype=bool)
    for lattice, (U, wx, wy, tb, tu, wt) in zip(lattices, results):
        sl = lattice.slices()
        state.U[sl] = U
        state.wx[sl] = wx
        state.wy[sl] = wy
        theta_bar[sl] = tb
        theta_used[sl] = tu
        weighted[sl] = wt

    raised = causal_sweep(state, spec)
    state.k += 1
    state.history = [state.U.copy()] + state.history[:2]
    state.c_history = [C_now] + state.c_history[:2]

    stats = {"n_weighted": int(weighted.sum()), "causal_raised": raised}
    for name, values in (("theta_bar", theta_bar[weighted]), ("theta_used", theta_used[weighted])):
        if values.size:
            stats.update({f"{name}_min": float(values.min()), f"{name}_mean": float(values.mean()),
                          f"{name}_max": float(values.max())})
        else:
            stats.update({f"{name}_min": float("nan"), f"{name}_mean": float("nan"),
                          f"{name}_max": float("nan")})
    logger.debug("coarse update k=%d: %d weighted nodes, %d causal raises", state.k, stats["n_weighted"], raised)
    return stats


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def reference_solve(problem, max_rounds=REFERENCE_MAX_ROUNDS):
    """Whole-domain fine sweep u^f, the ground truth of the iteration."""
    block = Field.from_boundary(problem.gamma_mask, problem.gamma_values)
    report = fsm_solve(block, problem.r, problem.spec.h, max_rounds=max_rounds)
    logger.info("reference solve: %d rounds, converged=%s", report.rounds, report.converged)
    return block, report


@dataclass
class TwoScaleResult:
    status: str
    iterations: int
    history: List[dict]
    coarse: CoarseState
    fine: FineState
    snapshots: List[dict]

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def patched(self):
        return self.fine.patched


def _errors(problem, state, fine, reference):
    if reference is None:
        nan = float("nan")
        return {"l1_rel": nan, "l1_abs": nan, "linf": nan, "fine_l1_rel": nan}
    spec = problem.spec
    mask = state.skeleton
    return {
        "l1_rel": l1_relative(state.U[mask], reference[mask]),
        "l1_abs": l1_absolute(state.U[mask], reference[mask], spec.h, spec.d),
        "linf": linf(state.U[mask], reference[mask]),
        "fine_l1_rel": l1_relative(fine.patched, reference),
    }


def run(problem, policy=None, max_iters=MAX_ITERS, conv_tol=CONV_TOL, reference=None, snapshot_every=0):
    """
    Run steps 1 -> (2 -> 3 -> 4)* until the coarse values stop changing.

    Convergence means max |U^{k+1} - U^k| < conv_tol with identical winds and
    U^{k+1} within conv_tol of the merged fine values on the skeleton;
    hitting max_iters is a status, not an error.

    Args:
        problem (TwoScaleProblem): prepared inputs
        policy (ThetaPolicy): fixed or estimated θ, estimated by default
        max_iters (int): coarse update budget
        conv_tol (float): convergence threshold
        reference (np.ndarray): whole-domain fine solution for error records
        snapshot_every (int): keep U and the patched field every that many iterations

    Returns:
        TwoScaleResult
    """
    policy = policy or ThetaPolicy()
    state = initialize_coarse(problem)
    fine = None
    history, snapshots = [], []
    status = "max_iters"
    iterations = 0

    for k in range(max_iters):
        started = time.perf_counter()
        fine = solve_fine(problem, state, fine)
        record = {"k": k}
        record.update(_errors(problem, state, fine, reference))

        U_old, wx_old, wy_old = state.U.copy(), state.wx.copy(), state.wy.copy()
        record.update(coarse_update(problem, state, fine, policy))
        iterations = k + 1

        mask = state.skeleton
        change = float(np.max(np.abs(state.U[mask] - U_old[mask])))
        wind_changes = int(np.count_nonzero((state.wx[mask] != wx_old[mask]) | (state.wy[mask] != wy_old[mask])))
        free = mask & ~state.fixed & (fine.u < INF)
        gap = float(np.max(np.abs(state.U[free] - fine.u[free]), initial=0.0))
        converged = change < conv_tol and wind_changes == 0 and gap < conv_tol
        record.update({"max_change": change, "wind_changes": wind_changes, "fine_gap": gap,
                       "fine_rounds_max": fine.max_rounds_used,
                       "wall_ms": 1000.0 * (time.perf_counter() - started), "converged": converged})
        history.append(record)
        logger.info("k=%d change=%.3e wind changes=%d l1_rel=%.3e", k, change, wind_changes, record["l1_rel"])

        if snapshot_every and k % snapshot_every == 0:
            snapshots.append({"k": k, "U": U_old, "patched": fine.patched.copy()})
        if converged:
            status = "converged"
            break

    if status != "converged":
        logger.warning("two-scale iteration did not converge in %d iterations", max_iters)
    return TwoScaleResult(status=status, iterations=iterations, history=history, coarse=state,
                          fine=fine, snapshots=snapshots)
