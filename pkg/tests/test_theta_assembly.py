from itertools import permutations, product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctsr.assembly import (
    PrescribedLhs,
    TimeDerivativeLhs,
    assemble_lhs,
    assemble_problem,
    assemble_scalar_problem,
    assemble_theta_from_samples,
    case_lhs_spec,
    contract_candidate,
    evaluate_candidate,
    free_component_tuples,
    gather_samples,
    sample_at,
)
from ctsr.cases import BURGERS2D, CONVECTION, DIFFUSION, GIESEKUS3D, TAU
from ctsr.datasets import CLAMPED, PERIODIC, GridDataset, sample_points
from ctsr.library import InputTensorSpec, LibrarySpec, ScalarCandidate
from ctsr.terms import (
    CandidateTerm,
    TensorFactor,
    canonicalize,
    factor_shape,
    labeled_term,
)

U1 = factor_shape("u", 1)
DU = factor_shape("u", 1, 1)
D2U = factor_shape("u", 1, 2)
G1 = factor_shape("g", 1)


def brute_force_evaluate(term, sample, dim, free_values):
    """Naive reference: explicit loop over repeated-suffix assignments."""
    fixed = {lab: free_values[k] - 1
             for k, lab in enumerate(term.free_suffixes)}
    reps = term.repeated_suffixes
    total = 0.0
    for combo in product(range(dim), repeat=len(reps)):
        a = dict(fixed)
        a.update(zip(reps, combo))
        value = 1.0
        for f in term.factors:
            arr = np.asarray(sample[(f.base, f.deriv_order)])
            value *= float(arr[tuple(a[s] for s in f.slots)])
        total += value
    return total


def integer_sample(term, dim, seed):
    """Integer-valued arrays honouring each factor's slot symmetries
    (mixed partials commute, symmetric tensors are symmetric)."""
    rng = np.random.default_rng(seed)
    out = {}
    for f in term.factors:
        key = (f.base, f.deriv_order)
        if key in out:
            continue
        arr = rng.integers(-3, 4, size=(dim,) * len(f.slots)).astype(float)
        for group in f.symmetric_slot_groups:
            sym = np.zeros_like(arr)
            for perm in permutations(group):
                axes = list(range(arr.ndim))
                for a, b in zip(group, perm):
                    axes[a] = b
                sym = sym + arr.transpose(axes)
            arr = sym
        out[key] = arr
    return out


def test_convection_contraction_example():
    term = CONVECTION  # u[j] du[i]/dx[j]
    sample = {("u", 0): np.array([2.0, 3.0]),
              ("u", 1): np.eye(2)}
    assert evaluate_candidate(term, sample, 2, (1,)) == 2.0
    assert evaluate_candidate(term, sample, 2, (2,)) == 3.0
    assert brute_force_evaluate(term, sample, 2, (1,)) == 2.0


def test_zero_second_derivatives_give_zero():
    sample = {("u", 2): np.zeros((2, 2, 2))}
    assert evaluate_candidate(DIFFUSION, sample, 2, (1,)) == 0.0


def test_orthogonal_vectors_contract_to_zero():
    term = canonicalize(labeled_term((U1, U1, G1), [0, 1, 1]))  # u_i u_j g_j
    sample = {("u", 0): np.array([1.0, 0.0, 0.0]),
              ("g", 0): np.array([0.0, 0.0, -1.0])}
    assert evaluate_candidate(term, sample, 3, (1,)) == 0.0
    sample2 = {("u", 0): np.array([1.0, 0.0, 0.0]),
               ("g", 0): np.array([1.0, 0.0, 0.0])}
    assert evaluate_candidate(term, sample2, 3, (1,)) == 1.0


def test_free_value_validation():
    sample = {("u", 0): np.array([1.0, 2.0]), ("u", 1): np.eye(2)}
    with pytest.raises(ValueError, match="free suffix"):
        evaluate_candidate(CONVECTION, sample, 2, (1, 1))
    with pytest.raises(ValueError, match="outside"):
        evaluate_candidate(CONVECTION, sample, 2, (0,))
    with pytest.raises(ValueError, match="outside"):
        evaluate_candidate(CONVECTION, sample, 2, (3,))
    with pytest.raises(KeyError):
        evaluate_candidate(DIFFUSION, sample, 2, (1,))


TEMPLATES = [(U1,), (DU,), (D2U,), (U1, DU), (U1, D2U), (U1, U1, D2U),
             (G1, U1, U1)]


@st.composite
def term_and_inputs(draw):
    template = TEMPLATES[draw(st.integers(0, len(TEMPLATES) - 1))]
    n = sum(f.n_slots for f in template)
    labels = [draw(st.integers(0, n - 1)) for _ in range(n)]
    from collections import Counter
    counts = Counter(labels)
    if any(v > 2 for v in counts.values()):
        labels = list(range(n))
    term = labeled_term(template, labels)
    dim = draw(st.sampled_from((2, 3)))
    free = tuple(draw(st.integers(1, dim)) for _ in range(term.order))
    seed = draw(st.integers(0, 2 ** 31))
    return term, dim, free, seed


@given(term_and_inputs())
@settings(max_examples=200, deadline=None)
def test_contraction_matches_brute_force(data):
    term, dim, free, seed = data
    sample = integer_sample(term, dim, seed)
    fast = evaluate_candidate(term, sample, dim, free)
    slow = brute_force_evaluate(term, sample, dim, free)
    # integer-valued inputs keep both routes exact in double precision
    assert fast == slow


@given(term_and_inputs())
@settings(max_examples=100, deadline=None)
def test_canonical_form_is_numerically_equivalent(data):
    term, dim, free, seed = data
    sample = integer_sample(term, dim, seed)
    canon = canonicalize(term)
    a = evaluate_candidate(term, sample, dim, free)
    b = evaluate_candidate(canon, sample, dim, free)
    assert np.isclose(a, b, rtol=1e-12, atol=1e-12)


def test_row_counts():
    rng = np.random.default_rng(0)

    def samples_for(dim, n):
        return {("u", 0): rng.normal(size=(dim, n)),
                ("u", 1): rng.normal(size=(dim, dim, n)),
                ("tau", 0): rng.normal(size=(dim, dim, n))}

    p = assemble_theta_from_samples([CONVECTION], samples_for(2, 1000),
                                    2, 1, 1000)
    assert p.theta.shape == (2000, 1)
    p = assemble_theta_from_samples([CONVECTION], samples_for(3, 7), 3, 1, 7)
    assert p.theta.shape == (21, 1)
    p = assemble_theta_from_samples([TAU], samples_for(3, 1000), 3, 2, 1000)
    assert p.theta.shape == (9000, 1)
    p = assemble_theta_from_samples([TAU], samples_for(3, 10), 3, 2, 10,
                                    unique_pairs=True)
    assert p.theta.shape == (60, 1)
    assert free_component_tuples(3, 2, unique_pairs=True) == [
        (0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def test_component_major_row_order():
    u = np.array([[0.0, 1.0, 2.0], [10.0, 11.0, 12.0]])
    term = canonicalize(labeled_term((U1,), [0]))  # u[i]
    p = assemble_theta_from_samples([term], {("u", 0): u}, 2, 1, 3)
    assert np.array_equal(p.theta[:, 0], [0, 1, 2, 10, 11, 12])
    assert p.row_meta[0] == (0, (1,))
    assert p.row_meta[3] == (0, (2,))

    tau = np.zeros((2, 2, 1))
    for i in range(2):
        for j in range(2):
            tau[i, j, 0] = 100 * i + 10 * j
    p2 = assemble_theta_from_samples([TAU], {("tau", 0): tau}, 2, 2, 1)
    assert np.array_equal(p2.theta[:, 0], [0, 10, 100, 110])
    assert [m[1] for m in p2.row_meta] == [(1, 1), (1, 2), (2, 1), (2, 2)]


def test_metadata_bijection():
    rng = np.random.default_rng(3)
    samples = {("u", 0): rng.normal(size=(2, 5)),
               ("u", 1): rng.normal(size=(2, 2, 5)),
               ("u", 2): rng.normal(size=(2, 2, 2, 5))}
    terms = [CONVECTION, DIFFUSION]
    p = assemble_theta_from_samples(terms, samples, 2, 1, 5)
    for r in range(p.n_rows):
        s, free = p.row_meta[r]
        for c, term in enumerate(p.column_meta):
            direct = evaluate_candidate(term, sample_at(samples, s), 2, free)
            assert np.isclose(direct, p.theta[r, c], rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("term,degree", [
    (DIFFUSION, 1),
    (CONVECTION, 2),
    (canonicalize(labeled_term((U1, U1, D2U), [1, 1, 0, 2, 2])), 3),
])
def test_column_scales_with_field_power(term, degree):
    rng = np.random.default_rng(degree)
    samples = {("u", 0): rng.normal(size=(2, 8)),
               ("u", 1): rng.normal(size=(2, 2, 8)),
               ("u", 2): rng.normal(size=(2, 2, 2, 8))}
    scaled = {k: 1.7 * v for k, v in samples.items()}
    base = contract_candidate(term, samples, 2, (8,))
    up = contract_candidate(term, scaled, 2, (8,))
    assert np.allclose(up, 1.7 ** degree * base, rtol=1e-12)


def test_non_finite_evaluation_names_sample_and_candidate():
    u = np.ones((2, 6))
    du = np.ones((2, 2, 6))
    du[1, 0, 3] = np.nan
    with pytest.raises(ValueError, match=r"u\[j\] du\[i\]/dx\[j\].*sample 3"):
        assemble_theta_from_samples([CONVECTION],
                                    {("u", 0): u, ("u", 1): du}, 2, 1, 6)


def linear_velocity_dataset(coeffs, n=9, steady=True, times=3):
    """u = A x on a clamped grid; derivatives are exact inside margins."""
    h = 1.0 / (n - 1)
    x = np.arange(n) * h
    X, Y = np.meshgrid(x, x, indexing="ij")
    A = np.asarray(coeffs, dtype=float)
    t = 1 if steady else times
    fields = {
        "u": np.broadcast_to(A[0, 0] * X + A[0, 1] * Y, (t, n, n)).copy(),
        "v": np.broadcast_to(A[1, 0] * X + A[1, 1] * Y, (t, n, n)).copy(),
    }
    return GridDataset(2, (n, n), (h, h), 0.1, t, (CLAMPED, CLAMPED), fields)


def test_prescribed_shear_rate_lhs():
    A = [[0.3, -0.2], [0.5, 1.1]]
    ds = linear_velocity_dataset(A)
    spec = LibrarySpec(
        (InputTensorSpec("u", 1, max_deriv=1, component_names=("u", "v")),),
        P=1, target_order=2, spatial_dim=2)
    table = sample_points(ds, 12, 0, seed=0)
    eta = 0.0043
    grad = CandidateTerm((TensorFactor("u", 1, 1, (0, 1), ()),))
    grad_t = CandidateTerm((TensorFactor("u", 1, 1, (1, 0), ()),))
    lhs = assemble_lhs(PrescribedLhs(((eta, grad), (eta, grad_t)), "shear"),
                       table, spec)
    n = table.n_rows
    gamma = np.array(A) + np.array(A).T
    expect = np.concatenate([np.full(n, eta * gamma[i, j])
                             for i in range(2) for j in range(2)])
    assert np.allclose(lhs, expect, atol=1e-10)


def test_time_derivative_lhs_cases():
    spec = BURGERS2D.library_spec()
    ds = linear_velocity_dataset([[1.0, 0.0], [0.0, 1.0]], steady=False)
    table = sample_points(ds, 10, 1, seed=1)
    lhs = assemble_lhs(TimeDerivativeLhs("u"), table, spec)
    assert lhs.shape == (20,)
    assert np.allclose(lhs, 0.0)

    ramp = linear_velocity_dataset([[1.0, 0.0], [0.0, 1.0]], steady=False)
    for name in ("u", "v"):
        arr = ramp.fields[name]
        ramp.fields[name] = arr + (0.1 * np.arange(3))[:, None, None]
    table = sample_points(ramp, 10, 1, seed=1)
    lhs = assemble_lhs(TimeDerivativeLhs("u"), table, spec)
    assert np.allclose(lhs, 1.0, atol=1e-12)

    with pytest.raises(ValueError, match="unknown quantity"):
        assemble_lhs(TimeDerivativeLhs("q"), table, spec)


def test_assemble_problem_on_dataset():
    ds = linear_velocity_dataset([[0.4, 0.1], [-0.3, 0.2]], steady=False)
    spec = BURGERS2D.library_spec()
    table = sample_points(ds, 8, 1, seed=2)
    problem = assemble_problem([CONVECTION, DIFFUSION], table, spec,
                               TimeDerivativeLhs("u"))
    assert problem.theta.shape == (16, 2)
    assert problem.lhs.shape == (16,)
    # linear field: second derivatives vanish, convection is A(Ax)
    assert np.allclose(problem.theta[:, 1], 0.0, atol=1e-8)
    samples = gather_samples(table, spec)
    direct = contract_candidate(CONVECTION, samples, 2, (table.n_rows,))
    assert np.allclose(problem.theta[:, 0],
                       np.concatenate([direct[0], direct[1]]))


def test_gather_samples_missing_channel():
    ds = linear_velocity_dataset([[1.0, 0.0], [0.0, 1.0]])
    spec = LibrarySpec(
        (InputTensorSpec("q", 0, max_deriv=1),), P=1, target_order=1,
        spatial_dim=2)
    table = sample_points(ds, 4, 0, seed=0)
    with pytest.raises(ValueError, match="no channel 'q'"):
        gather_samples(table, spec)


def test_scalar_problem_columns_are_products():
    ds = linear_velocity_dataset([[0.4, 0.1], [-0.3, 0.2]], steady=False)
    ds.time_derivatives["u"] = np.full((3, 9, 9), 2.5)
    table = sample_points(ds, 6, 1, seed=4)
    cands = [ScalarCandidate(("u",)), ScalarCandidate(("u", "v")),
             ScalarCandidate((), ("u", (0,)))]
    p = assemble_scalar_problem(cands, table, "u")
    u = table.gather("u")
    v = table.gather("v")
    assert p.theta.shape == (6, 3)
    assert np.array_equal(p.theta[:, 0], u)
    assert np.array_equal(p.theta[:, 1], u * v)
    assert np.allclose(p.theta[:, 2], 0.4, atol=1e-10)
    assert np.allclose(p.lhs, 2.5)


def test_case_lhs_specs():
    assert case_lhs_spec(BURGERS2D) == TimeDerivativeLhs("u")
    spec = case_lhs_spec(GIESEKUS3D)
    assert isinstance(spec, PrescribedLhs)
    assert len(spec.terms) == 2
    assert all(c == 0.0043 for c, _ in spec.terms)
    texts = {t.text for _, t in spec.terms}
    assert texts == {"du[i]/dx[j]", "du[j]/dx[i]"}


def test_write_csv(tmp_path):
    rng = np.random.default_rng(0)
    samples = {("u", 0): rng.normal(size=(2, 3)),
               ("u", 1): rng.normal(size=(2, 2, 3))}
    p = assemble_theta_from_samples([CONVECTION], samples, 2, 1, 3)
    p.lhs = np.arange(6.0)
    out = tmp_path / "problem.csv"
    p.write_csv(out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "sample,components,u[j] du[i]/dx[j],lhs"
    assert len(lines) == 7
    first = lines[1].split(",")
    assert first[0] == "0" and float(first[-1]) == 0.0
