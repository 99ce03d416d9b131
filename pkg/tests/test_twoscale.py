import os

import numpy as np
import pytest

from config.config import HISTORY_COLUMNS
from models.boundary import DomainEdges, PointSources
from models.grid import GridSpec, boundary_of, fine_index, subdomain_indices
from models.slowness import make_catalog_field
from utils.errors import ConfigurationError
from utils.helpers import write_field_csv
from utils.theta import ThetaPolicy
from utils.twoscale import (INF, CoarseState, _gate, _merge_kernel, _solve_block, boundary_block, causal_sweep,
                            coarse_update, initialize_coarse, prepare, reference_solve, run, solve_fine,
                            subdomain_bcs)


def _skeleton_distance(spec, state):
    P, Q = np.meshgrid(*(np.arange(n) for n in spec.fine_shape), indexing="ij")
    return np.hypot(P * spec.h, Q * spec.h)[state.skeleton]


def test_initialize_point_source(corner_problem):
    state = initialize_coarse(corner_problem)
    spec = corner_problem.spec
    assert state.k == 0
    assert np.all(state.U[state.skeleton] < INF)
    assert np.all(state.U[~state.skeleton] == INF)
    assert np.max(np.abs(state.U[state.skeleton] - _skeleton_distance(spec, state))) <= 2 * spec.H
    free = state.skeleton & ~state.fixed
    assert np.all((state.wx[free] != 0) | (state.wy[free] != 0))
    assert len(state.history) == 1


def test_initialize_needs_source_on_every_grid(unit_slowness):
    spec = GridSpec(d=2, N=3, M=4)
    problem = prepare(spec, unit_slowness, DomainEdges(edges=("left",)))
    with pytest.raises(ConfigurationError):
        initialize_coarse(problem)


def test_causal_sweep_one_d():
    spec = GridSpec(d=1, N=4, M=5)
    state = CoarseState.empty(spec)
    state.U[::5, 0] = [0.0, 0.5, 0.3, 0.8, 0.9]
    state.wx[5::5, 0] = 1
    state.fixed[0, 0] = True
    assert causal_sweep(state, spec) == 1
    assert state.U[10, 0] == 0.5
    assert state.U[15, 0] == 0.8


def test_causal_sweep_vertical_line():
    spec = GridSpec(d=2, N=2, M=3)
    state = CoarseState.empty(spec)
    P, Q = np.meshgrid(np.arange(7), np.arange(7), indexing="ij")
    dist = np.hypot(P, Q) / 6.0
    state.U[state.skeleton] = dist[state.skeleton]
    state.wx[state.skeleton] = 1
    state.wy[state.skeleton] = 1
    state.fixed[0, 0] = True
    assert causal_sweep(state, spec) == 0

    state.U[3, 2] = state.U[3, 1] - 0.1
    assert causal_sweep(state, spec) == 1
    assert state.U[3, 2] == state.U[3, 1]


def test_bcs_agree_with_block(corner_problem):
    spec = corner_problem.spec
    state = initialize_coarse(corner_problem)
    for i, j in subdomain_indices(spec):
        bcs = subdomain_bcs(state, spec, boundary_of(spec, i, j))
        assert len(bcs) == 4 * spec.M
        arriving, U, _, _ = boundary_block(state, spec, i, j)
        for node, value in bcs.items():
            p, q = fine_index(spec, node)
            local = (p - i * spec.M, q - j * spec.M)
            assert arriving[local] == (value < INF)
            if value < INF:
                assert U[local] == value
        # interior of the block never carries boundary data
        assert not arriving[1:-1, 1:-1].any()


def test_source_corner_subdomain_receives_no_outflow_data(corner_problem):
    spec = corner_problem.spec
    state = initialize_coarse(corner_problem)
    arriving, _, _, _ = boundary_block(state, spec, 1, 1)
    # waves from the origin enter through the west and south sides only
    assert not arriving[spec.M, 1:spec.M].any()
    assert not arriving[1:spec.M, spec.M].any()
    assert arriving[0, 1:spec.M].any()


def _merge_1d(values, winds, coarse_wind, kept=(False, False)):
    """Merge at the shared node of a two-interval 1D problem (N=2, M=3)."""
    sub_u = np.full((2, 1, 4, 1), 7.0)
    sub_wx = np.ones((2, 1, 4, 1), dtype=np.int8)
    sub_wy = np.zeros((2, 1, 4, 1), dtype=np.int8)
    sub_u[0, 0, 3, 0], sub_u[1, 0, 0, 0] = values
    sub_wx[0, 0, 3, 0], sub_wx[1, 0, 0, 0] = winds
    sub_kept = np.zeros((2, 1, 4, 1), dtype=bool)
    sub_kept[0, 0, 3, 0], sub_kept[1, 0, 0, 0] = kept
    cwx = np.full((7, 1), coarse_wind, dtype=np.int8)
    cwy = np.zeros((7, 1), dtype=np.int8)
    out_u = np.full((7, 1), INF)
    out_wx = np.zeros((7, 1), dtype=np.int8)
    out_wy = np.zeros((7, 1), dtype=np.int8)
    _merge_kernel(sub_u, sub_wx, sub_wy, sub_kept, cwx, cwy, 2, 3, False, out_u, out_wx, out_wy)
    return out_u[3, 0], int(out_wx[3, 0]), out_u


def test_merge_disagreeing_winds_takes_minimum():
    value, wind, _ = _merge_1d((2.0, 1.5), (1, -1), 1)
    assert value == 1.5
    assert wind == -1


def test_merge_agreeing_winds_takes_upwind():
    value, wind, _ = _merge_1d((2.0, 1.5), (1, 1), 1)
    assert value == 2.0
    assert wind == 1
    value, wind, _ = _merge_1d((1.5, 2.0), (-1, -1), -1)
    assert value == 2.0
    assert wind == -1


def test_merge_unreached_upwind_falls_back():
    value, wind, _ = _merge_1d((INF, 1.5), (1, 1), 1)
    assert value == 1.5


def test_merge_skips_unchanged_seed():
    value, wind, _ = _merge_1d((1.0, 1.5), (1, -1), 1, kept=(True, False))
    assert value == 1.5
    assert wind == -1
    value, _, _ = _merge_1d((1.0, 1.5), (1, -1), 1, kept=(True, True))
    assert value == 1.0
    value, _, _ = _merge_1d((1.0, INF), (1, 0), 1, kept=(True, False))
    assert value == 1.0


def test_merge_ties_take_minimum():
    # no wind component along the shared axis: both intervals qualify as upwind
    value, wind, _ = _merge_1d((2.0, 1.5), (0, 0), 0)
    assert value == 1.5
    value, _, _ = _merge_1d((1.5, 2.0), (0, 0), 0)
    assert value == 1.5


def test_merge_domain_ends_single_candidate():
    _, _, out = _merge_1d((2.0, 1.5), (1, 1), 1)
    assert out[0, 0] == 7.0
    assert out[6, 0] == 7.0
    assert np.all(out[[1, 2, 4, 5], 0] == INF)


def test_gate_one_d():
    # shared node p=3 between intervals 0 and 1
    assert _gate(3, 0, 2, 3, False, 1, 0, 1, 0, 1, 0)
    assert not _gate(3, 0, 2, 3, False, -1, 0, 1, 0, 1, 0)
    assert _gate(3, 0, 2, 3, False, -1, 0, -1, 0, -1, 0)
    assert _gate(3, 0, 2, 3, False, 0, 0, 0, 0, 0, 0)


def test_seed_is_lowered_from_inside():
    mask = np.zeros((11, 1), dtype=bool)
    mask[0, 0] = True
    values = np.zeros((11, 1))
    r = np.ones((11, 1))
    seeded = np.zeros((11, 1), dtype=bool)
    seeded[10, 0] = True
    wx = np.full((11, 1), -1, dtype=np.int8)
    wy = np.zeros((11, 1), dtype=np.int8)

    block, report = _solve_block(mask, values, r, 0.1, 20, seeded, np.full((11, 1), 5.0), wx, wy)
    assert report.converged
    assert not block.fixed[10, 0]
    assert block.values[10, 0] == pytest.approx(1.0)
    assert block.wx[10, 0] == 1

    block, _ = _solve_block(mask, values, r, 0.1, 20, seeded, np.full((11, 1), 0.25), wx, wy)
    assert block.values[10, 0] == 0.25
    assert block.wx[10, 0] == -1
    assert block.values[9, 0] == pytest.approx(0.35)
    assert block.values[1, 0] == pytest.approx(0.1)


def test_zero_theta_is_causal_injection(corner_problem):
    spec = corner_problem.spec
    state = initialize_coarse(corner_problem)
    fine = solve_fine(corner_problem, state)
    skel = state.skeleton
    assert np.all(fine.u[skel] < INF)

    free = skel & ~state.fixed
    expected = CoarseState(U=np.where(free, fine.u, state.U), wx=np.where(free, fine.wx, state.wx),
                           wy=np.where(free, fine.wy, state.wy), fixed=state.fixed.copy(), skeleton=skel)
    causal_sweep(expected, spec)

    stats = coarse_update(corner_problem, state, fine, ThetaPolicy(kind="fixed", value=0.0))
    assert state.k == 1
    np.testing.assert_array_equal(state.U[skel], expected.U[skel])
    np.testing.assert_array_equal(state.wx[skel], expected.wx[skel])
    assert stats["n_weighted"] >= 0


def test_oracle_policy_rejected(corner_problem):
    state = initialize_coarse(corner_problem)
    fine = solve_fine(corner_problem, state)
    with pytest.raises(ConfigurationError):
        coarse_update(corner_problem, state, fine, ThetaPolicy(kind="oracle"))


def test_patched_field_holds_subdomain_solutions(corner_problem):
    spec = corner_problem.spec
    state = initialize_coarse(corner_problem)
    fine = solve_fine(corner_problem, state)
    M = spec.M
    np.testing.assert_array_equal(fine.patched[1:M, 1:M], fine.sub_u[0, 0, 1:M, 1:M])
    np.testing.assert_array_equal(fine.patched[state.skeleton], fine.u[state.skeleton])
    assert fine.patched[0, 0] == 0.0


def test_constant_slowness_converges_to_reference(corner_problem):
    reference, report = reference_solve(corner_problem)
    assert report.converged
    result = run(corner_problem, ThetaPolicy(), max_iters=30, reference=reference.values)
    assert result.converged
    last = result.history[-1]
    assert last["fine_l1_rel"] < 1e-8
    assert np.max(np.abs(result.patched - reference.values)) < 1e-8
    assert last["fine_gap"] < 1e-10
    assert set(HISTORY_COLUMNS) <= set(last)


def test_one_d_gaussian_bump(gauss_problem):
    reference, _ = reference_solve(gauss_problem)
    result = run(gauss_problem, ThetaPolicy(), max_iters=20, reference=reference.values, snapshot_every=1)
    assert result.converged
    assert result.iterations <= 10
    skel = result.coarse.skeleton
    assert np.max(np.abs(result.coarse.U[skel] - result.patched[skel])) <= 1e-10
    assert np.max(np.abs(result.patched - reference.values)) <= 1e-10
    assert len(result.snapshots) == result.iterations


def test_one_d_crossing_point_reached_from_the_left(gauss_problem):
    # the bump at x=0.75 makes the right-hand path to x=0.6 longer by about 0.25
    result = run(gauss_problem, ThetaPolicy(), max_iters=20)
    assert result.converged
    p = 6 * gauss_problem.spec.M
    assert abs(result.coarse.U[p, 0] - 0.6) < 1e-6
    assert result.coarse.wx[p, 0] == 1
    assert np.all(result.fine.sub_u[6, 0, 0, 0] >= result.fine.u[p, 0])


def test_fixed_theta_one_d(gauss_problem):
    reference, _ = reference_solve(gauss_problem)
    result = run(gauss_problem, ThetaPolicy(kind="fixed", value=0.0), max_iters=30, reference=reference.values)
    assert result.converged
    assert np.max(np.abs(result.patched - reference.values)) <= 1e-10


def test_max_iters_is_a_status(corner_problem):
    result = run(corner_problem, max_iters=1)
    assert result.iterations == 1
    assert result.status in ("converged", "max_iters")
    assert np.isnan(result.history[0]["l1_rel"])


def test_worker_count_does_not_change_results():
    spec = GridSpec(d=2, N=4, M=10)
    slowness = make_catalog_field("r2")
    source = PointSources(((0.3, 0.6),))
    results = [run(prepare(spec, slowness, source, workers=w), max_iters=15) for w in (1, 4)]
    np.testing.assert_array_equal(results[0].coarse.U, results[1].coarse.U)
    np.testing.assert_array_equal(results[0].patched, results[1].patched)
    assert results[0].iterations == results[1].iterations


def _run_against_reference(kind, source, workers=1, max_iters=80):
    spec = GridSpec(d=2, N=10, M=50)
    problem = prepare(spec, make_catalog_field(kind), PointSources((source,)), workers=workers)
    reference, _ = reference_solve(problem)
    return run(problem, ThetaPolicy(), max_iters=max_iters, reference=reference.values), reference


def _decreasing(values, slack=1e-12):
    return all(b <= a * (1 + 1e-9) + slack for a, b in zip(values, values[1:]))


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["r1", "r2"])
def test_smooth_sine_matches_reference(kind):
    result, reference = _run_against_reference(kind, (0.5, 0.5))
    assert result.converged
    assert result.history[-1]["fine_l1_rel"] < 1e-8
    errors = [row["l1_rel"] for row in result.history]
    assert _decreasing(errors[len(errors) // 2:])


@pytest.mark.slow
def test_enclosed_subdomain_recovers_monotone_decrease():
    result, reference = _run_against_reference("barrier_box", (0.0, 0.0), max_iters=100)
    assert result.converged
    errors = [row["l1_rel"] for row in result.history]
    assert _decreasing(errors[30:])
    assert result.history[-1]["fine_l1_rel"] < 1e-8


@pytest.mark.slow
def test_parallel_run_is_bit_identical(tmp_path):
    serial, _ = _run_against_reference("r1", (0.5, 0.5), workers=1)
    parallel, _ = _run_against_reference("r1", (0.5, 0.5), workers=os.cpu_count() or 1)
    a = write_field_csv(tmp_path / "serial.csv", serial.patched)
    b = write_field_csv(tmp_path / "parallel.csv", parallel.patched)
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


@pytest.mark.extended
@pytest.mark.parametrize("seed", range(3))
def test_extended_checkerboard(seed):
    spec = GridSpec(d=2, N=14, M=100)
    problem = prepare(spec, make_catalog_field("checkerboard", {"eps": 7 * spec.h}, seed=seed),
                      PointSources(((0.5, 0.5),)), workers=os.cpu_count() or 1)
    reference, _ = reference_solve(problem)
    result = run(problem, ThetaPolicy(), max_iters=100, reference=reference.values)
    assert result.converged
    assert result.history[-1]["fine_l1_rel"] < 1e-8
