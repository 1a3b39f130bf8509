import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctsr.assembly import RegressionProblem
from ctsr.cases import (
    CONVECTION,
    DIFFUSION,
    GIESEKUS3D,
    PRESSURE_GRAD,
    TAU,
    TAU_ADVECTION,
    TAU_GRADU_LEFT,
    TAU_GRADU_RIGHT,
    TAU_TAU,
    case_tensor_library,
)
from ctsr.selection import (
    GroundTruth,
    ParetoPoint,
    dimension_split_diagnostic,
    dtol_grid,
    knee_point,
    pareto_front,
    prediction_error,
    redundancy_count,
    suggested_dtol,
    sweep_dtol,
    write_sweep_csv,
)
from ctsr.solver import Hyperparams, SparseSolution, train_stridge

BURGERS_TRUTH = GroundTruth(((CONVECTION, -1.0), (DIFFUSION, 0.1)))


def solution_with(library, values):
    coeffs = np.zeros(len(library))
    for term, v in values.items():
        coeffs[library.index(term)] = v
    return SparseSolution(coeffs, 0.0, 1.0, 1, ((0.1, 0.0),))


def test_prediction_error_burgers_reference_values():
    lib = [CONVECTION, DIFFUSION, PRESSURE_GRAD]
    sol = solution_with(lib, {CONVECTION: -0.997, DIFFUSION: 0.100})
    assert prediction_error(sol, BURGERS_TRUTH, lib) == pytest.approx(
        0.15, abs=1e-9)
    exact = solution_with(lib, {CONVECTION: -1.0, DIFFUSION: 0.1})
    assert prediction_error(exact, BURGERS_TRUTH, lib) == 0.0


def test_prediction_error_five_term_reference_value():
    lib = [TAU, TAU_ADVECTION, TAU_GRADU_RIGHT, TAU_GRADU_LEFT, TAU_TAU]
    truth = GroundTruth(((TAU, 1.0), (TAU_ADVECTION, 0.008),
                         (TAU_GRADU_RIGHT, -0.008),
                         (TAU_GRADU_LEFT, -0.008), (TAU_TAU, 0.93)))
    sol = solution_with(lib, {TAU: 1.04, TAU_ADVECTION: 0.00781,
                              TAU_GRADU_RIGHT: -0.00789,
                              TAU_GRADU_LEFT: -0.00790, TAU_TAU: 0.906})
    assert prediction_error(sol, truth, lib) == pytest.approx(2.32,
                                                              abs=0.005)


def test_prediction_error_missing_term_counts_full():
    lib = [CONVECTION, DIFFUSION]
    sol = solution_with(lib, {CONVECTION: -1.0})
    assert prediction_error(sol, BURGERS_TRUTH, lib) == pytest.approx(50.0)


def test_prediction_error_unresolvable_truth():
    with pytest.raises(ValueError, match="not in the library"):
        prediction_error(solution_with([CONVECTION], {}), BURGERS_TRUTH,
                         [CONVECTION])


def test_ground_truth_validation():
    with pytest.raises(ValueError):
        GroundTruth(())
    with pytest.raises(ValueError):
        GroundTruth(((CONVECTION, 0.0),))


def test_redundancy_count_examples():
    lib = list(case_tensor_library("convection2d"))
    truth_terms = [t for t, _ in GroundTruth(
        ((CONVECTION, -1.0), (DIFFUSION, 0.00071), (PRESSURE_GRAD, -1.0),
         (TAU, 1.0))).terms]
    # 4 true terms followed by 73 distractors = 77 columns, all nonzero
    truth = GroundTruth(((CONVECTION, -1.0), (DIFFUSION, 0.00071),
                         (PRESSURE_GRAD, -1.0)))
    extra = [t for t in lib if t not in truth_terms]
    lib77 = [CONVECTION, DIFFUSION, PRESSURE_GRAD, extra[0]] + extra[1:74]
    truth4 = GroundTruth(((CONVECTION, -1.0), (DIFFUSION, 0.00071),
                          (PRESSURE_GRAD, -1.0), (extra[0], 2.0)))
    assert len(lib77) == 77
    dense = SparseSolution(np.ones(77), 0.0, 1.0, 1, ((0.1, 0.0),))
    assert redundancy_count(dense, truth4, lib77) == 73

    sol = solution_with(lib, {CONVECTION: -1.0, DIFFUSION: 0.0007,
                              PRESSURE_GRAD: -0.99})
    assert redundancy_count(sol, truth, lib) == 0
    zero = SparseSolution(np.zeros(len(lib)), 0.0, 1.0, 1, ((0.1, 0.0),))
    assert redundancy_count(zero, truth, lib) == 0


def test_redundancy_invariant_under_column_permutation():
    rng = np.random.default_rng(0)
    lib = list(case_tensor_library("burgers2d"))
    sol = solution_with(lib, {CONVECTION: -1.0, DIFFUSION: 0.1,
                              lib[5]: 0.3})
    base = redundancy_count(sol, BURGERS_TRUTH, lib)
    perm = rng.permutation(len(lib))
    lib_p = [lib[i] for i in perm]
    coeffs_p = sol.coefficients[perm]
    sol_p = SparseSolution(coeffs_p, 0.0, 1.0, 1, ((0.1, 0.0),))
    assert redundancy_count(sol_p, BURGERS_TRUTH, lib_p) == base == 1


def point(d_tol, sparsity, residual):
    return ParetoPoint(d_tol, sparsity, residual, None)


def test_pareto_front_examples():
    pts = [point(0.1, 2, 1.0), point(0.2, 3, 0.5), point(0.3, 3, 2.0)]
    front = pareto_front(pts)
    assert [(p.sparsity, p.residual) for p in front] == [(2, 1.0), (3, 0.5)]

    single = [point(0.1, 4, 0.2)]
    assert pareto_front(single) == single

    curve = [point(10.0 ** -k, k, 10.0 ** -k) for k in range(5)]
    assert pareto_front(curve) == sorted(curve, key=lambda p: p.sparsity)


def test_pareto_front_tie_keeps_smaller_dtol():
    pts = [point(0.1, 2, 1.0), point(0.01, 2, 1.0)]
    front = pareto_front(pts)
    assert len(front) == 1 and front[0].d_tol == 0.01


@given(st.lists(st.tuples(st.integers(0, 6),
                          st.sampled_from([0.25, 0.5, 1.0, 2.0, 4.0])),
                min_size=1, max_size=25))
@settings(max_examples=200, deadline=None)
def test_pareto_front_nondomination(raw):
    pts = [point(1e-3 * (i + 1), s, r) for i, (s, r) in enumerate(raw)]
    front = pareto_front(pts)
    ids = {id(p) for p in front}
    for p in front:
        for q in pts:
            strictly_better = (q.sparsity <= p.sparsity
                               and q.residual <= p.residual
                               and (q.sparsity < p.sparsity
                                    or q.residual < p.residual))
            assert not strictly_better
    for p in pts:
        if id(p) in ids:
            continue
        assert any(q.sparsity <= p.sparsity and q.residual <= p.residual
                   for q in front)


def test_knee_point_corner_and_degenerate():
    l_shape = [point(0.1, 1, 1e2), point(0.2, 2, 1e-4),
               point(0.3, 3, 5e-5)]
    assert knee_point(l_shape).sparsity == 2

    line = [point(0.1, 1, 1e3), point(0.2, 2, 1e2), point(0.3, 3, 1e1)]
    assert knee_point(line).sparsity == 2

    assert knee_point([point(0.1, 1, 1.0)]) is None
    assert knee_point([]) is None


def test_knee_point_ignores_bulge_above_the_chord():
    # residual barely drops from sparsity 1 to 2 (above the chord), then
    # collapses at 3: the elbow is the collapse point, not the bulge
    front = [point(100.0, 1, 1e3), point(10.0, 2, 5e2),
             point(0.01, 3, 1e-9), point(0.001, 4, 1e-10)]
    assert knee_point(front).sparsity == 3


def test_suggested_dtol_prefers_walked_tolerance():
    assert suggested_dtol(point(0.25, 2, 1.0)) == pytest.approx(0.25)

    sol = SparseSolution(np.ones(3), 0.0, 1.0, 1, ((0.5, 0.0),),
                         best_tol=0.5)
    assert suggested_dtol(ParetoPoint(1e-5, 3, 0.0, sol)) == pytest.approx(0.5)


def synthetic_problem(seed=0, n=120, noise_z=0.0, dim=1):
    rng = np.random.default_rng(seed)
    lib = [CONVECTION, DIFFUSION, PRESSURE_GRAD]
    theta = rng.normal(size=(n * max(dim, 1), 3))
    lhs = -1.0 * theta[:, 0] + 0.1 * theta[:, 1]
    if noise_z and dim == 3:
        lhs[2 * n:] += noise_z * rng.normal(size=n)
    row_meta = tuple((i, (a + 1,)) for a in range(dim) for i in range(n))
    return RegressionProblem(theta, lhs, tuple(lib), row_meta, dim,
                             1 if dim > 1 else 0)


def test_sweep_single_point_matches_direct_run():
    problem = synthetic_problem()
    hyper = Hyperparams(d_tol=0.05, seed=3)
    pts = sweep_dtol(problem, hyper, grid=[0.05])
    direct = train_stridge(problem, hyper)
    assert len(pts) == 1
    assert np.array_equal(pts[0].solution.coefficients, direct.coefficients)
    expected = np.linalg.norm(
        problem.theta @ direct.coefficients - problem.lhs)
    assert pts[0].residual == pytest.approx(expected, rel=1e-12)
    assert pts[0].d_tol == 0.05


def test_sweep_zero_lhs_is_all_trivial():
    problem = synthetic_problem()
    problem.lhs = np.zeros(problem.n_rows)
    pts = sweep_dtol(problem, Hyperparams(d_tol=0.1), grid=[1e-4, 1e-2, 1.0])
    assert all(p.sparsity == 0 and p.residual == 0.0 for p in pts)


def test_sweep_recovers_truth_at_reasonable_tolerances():
    problem = synthetic_problem(seed=5)
    pts = sweep_dtol(problem, Hyperparams(d_tol=0.1, seed=2),
                     grid=dtol_grid(1e-3, 1e0, 7))
    sparsities = {p.sparsity for p in pts}
    assert 2 in sparsities
    front = pareto_front(pts)
    assert all(p.residual >= 0 for p in front)


def test_dimension_split_diagnostic_z_noise():
    problem = synthetic_problem(seed=7, n=150, noise_z=2.0, dim=3)
    truth = BURGERS_TRUTH
    hyper = Hyperparams(d_tol=0.05, seed=0)
    out = dimension_split_diagnostic(problem, truth, hyper)
    assert set(out) == {"x", "y", "z", "stacked"}
    assert out["z"] > out["x"] and out["z"] > out["y"]
    assert out["stacked"] < out["z"]

    flat = synthetic_problem(seed=1)
    with pytest.raises(ValueError, match="order-1"):
        dimension_split_diagnostic(flat, truth, hyper)


def test_write_sweep_csv(tmp_path):
    pts = [point(0.1, 1, 1e2), point(0.2, 2, 1e-4), point(0.3, 3, 5e-5)]
    front = pareto_front(pts)
    knee = knee_point(front)
    path = tmp_path / "sweep.csv"
    write_sweep_csv(pts, front, knee, path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "d_tol,sparsity,residual,is_front,is_knee"
    assert len(rows) == 4
    knee_rows = [r for r in rows[1:] if r.endswith(",1")]
    assert len(knee_rows) == 1 and knee_rows[0].split(",")[1] == "2"
