"""Numeric evaluation of candidate terms and regression-system assembly.

Each candidate column is the Einstein-summation contraction of its factors
evaluated at every sample point.  Rows stack the ordered free-suffix
component tuples block-wise: all samples for the first component tuple,
then all samples for the next, and so on.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import product
from string import ascii_lowercase

import numpy as np

from ctsr.datasets import SampleTable
from ctsr.library import (
    InputTensorSpec,
    LibrarySpec,
    ScalarCandidate,
    component_names,
)
from ctsr.terms import CandidateTerm


@dataclass(frozen=True)
class TimeDerivativeLhs:
    """Regress against the time derivative of a declared quantity."""

    quantity: str


@dataclass(frozen=True)
class PrescribedLhs:
    """Regress against a fixed linear combination of terms.

    The terms may be valid-but-non-canonical (e.g. a gradient transpose);
    only their contraction matters here.
    """

    terms: tuple[tuple[float, CandidateTerm], ...]
    label: str


LhsSpec = TimeDerivativeLhs | PrescribedLhs


@dataclass
class RegressionProblem:
    """Dense linear system theta @ xi = lhs with provenance metadata.

    row_meta holds (sample index, 1-based free component tuple) per row;
    column_meta holds the candidate behind each column.
    """

    theta: np.ndarray
    lhs: np.ndarray | None
    column_meta: tuple
    row_meta: tuple[tuple[int, tuple[int, ...]], ...]
    dim: int
    target_order: int

    @property
    def n_rows(self) -> int:
        return self.theta.shape[0]

    @property
    def n_columns(self) -> int:
        return self.theta.shape[1]

    def write_csv(self, path) -> None:
        """Dump theta, lhs and metadata as one delimited table."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["sample", "components"]
            header += [getattr(c, "text", str(c)) for c in self.column_meta]
            header.append("lhs")
            writer.writerow(header)
            for r in range(self.n_rows):
                sample, comps = self.row_meta[r]
                row = [sample, " ".join(str(v) for v in comps)]
                row += [repr(float(v)) for v in self.theta[r]]
                row.append("" if self.lhs is None
                           else repr(float(self.lhs[r])))
                writer.writerow(row)


def free_component_tuples(dim: int, order: int,
                          unique_pairs: bool = False) -> list[tuple[int, ...]]:
    """Ordered free-index tuples, lexicographic.  unique_pairs keeps only
    i <= j for order-2 targets (sensitivity studies; default keeps all)."""
    tuples = list(product(range(dim), repeat=order))
    if unique_pairs and order == 2:
        tuples = [t for t in tuples if t[0] <= t[1]]
    return tuples


def contract_candidate(term: CandidateTerm, samples: dict, dim: int,
                       trailing_shape: tuple[int, ...] = ()) -> np.ndarray:
    """Contract a candidate for every free-suffix assignment at once.

    samples maps (base name, derivative order) to an array whose leading
    axes are the factor slots (base components first, then derivative
    axes, each of length dim) and whose trailing axes index samples.
    Returns shape (dim,)*order + trailing sample shape.
    """
    if not term.factors:
        return np.ones(tuple(trailing_shape))
    labels = sorted({s for f in term.factors for s in f.slots})
    if len(labels) > len(ascii_lowercase):
        raise ValueError("too many distinct suffixes for contraction")
    letter = {lab: ascii_lowercase[k] for k, lab in enumerate(labels)}
    operands = []
    subscripts = []
    for f in term.factors:
        key = (f.base, f.deriv_order)
        if key not in samples:
            raise KeyError(
                f"no sample values for '{f.base}' at derivative order "
                f"{f.deriv_order}")
        arr = np.asarray(samples[key])
        k = len(f.slots)
        if arr.shape[:k] != (dim,) * k:
            raise ValueError(
                f"sample array for {key} has leading shape "
                f"{arr.shape[:k]}, expected {(dim,) * k}")
        operands.append(arr)
        subscripts.append("".join(letter[s] for s in f.slots) + "...")
    out = "".join(letter[s] for s in term.free_suffixes)
    expr = ",".join(subscripts) + "->" + out + "..."
    return np.einsum(expr, *operands)


def evaluate_candidate(term: CandidateTerm, sample: dict, dim: int,
                       free_values: tuple[int, ...]) -> float:
    """Value of one candidate at one sample point.

    free_values assigns each free suffix (in sorted suffix order) a
    component value in 1..dim; repeated suffixes are summed over.
    """
    free_values = tuple(free_values)
    if len(free_values) != term.order:
        raise ValueError(
            f"term '{term.text}' has {term.order} free suffix(es), "
            f"got {len(free_values)} values")
    for v in free_values:
        if not 1 <= v <= dim:
            raise ValueError(f"free value {v} outside 1..{dim}")
    vals = contract_candidate(term, sample, dim)
    return float(np.asarray(vals)[tuple(v - 1 for v in free_values)])


def gather_samples(table: SampleTable, spec: LibrarySpec) -> dict:
    """Evaluate every declared quantity (and its derivatives) at the
    table's sample points, shaped for contract_candidate."""
    ds = table.dataset
    if ds.spatial_dim != spec.spatial_dim:
        raise ValueError(
            f"dataset is {ds.spatial_dim}D but the library spec expects "
            f"{spec.spatial_dim}D")
    dim = spec.spatial_dim
    n = table.n_rows
    out: dict[tuple[str, int], np.ndarray] = {}
    for inp in spec.inputs:
        names = component_names(inp, dim)
        for ch in set(names.values()):
            if ch not in ds.fields:
                raise ValueError(
                    f"dataset has no channel '{ch}' for quantity "
                    f"'{inp.name}'")
        for d in range(inp.max_deriv + 1):
            arr = np.empty((dim,) * (inp.base_order + d) + (n,))
            for comp, channel in names.items():
                for axes in product(range(dim), repeat=d):
                    arr[comp + axes] = table.gather(channel, axes)
            out[(inp.name, d)] = arr
    return out


def sample_at(samples: dict, index: int) -> dict:
    """Slice one sample point out of a gathered-samples mapping."""
    return {key: arr[..., index] for key, arr in samples.items()}


def assemble_theta_from_samples(terms, samples: dict, dim: int,
                                target_order: int, n_samples: int,
                                unique_pairs: bool = False
                                ) -> RegressionProblem:
    tuples = free_component_tuples(dim, target_order, unique_pairs)
    theta = np.empty((len(tuples) * n_samples, len(terms)))
    for c, term in enumerate(terms):
        vals = np.asarray(
            contract_candidate(term, samples, dim, (n_samples,)))
        for b, tup in enumerate(tuples):
            theta[b * n_samples:(b + 1) * n_samples, c] = vals[tup]
        bad = np.flatnonzero(~np.isfinite(theta[:, c]))
        if bad.size:
            r = int(bad[0])
            raise ValueError(
                f"candidate '{term.text}' is non-finite at sample "
                f"{r % n_samples}, component tuple "
                f"{tuple(v + 1 for v in tuples[r // n_samples])}")
    row_meta = tuple(
        (s, tuple(v + 1 for v in tup))
        for tup in tuples for s in range(n_samples))
    return RegressionProblem(theta, None, tuple(terms), row_meta, dim,
                             target_order)


def assemble_theta(terms, table: SampleTable, spec: LibrarySpec,
                   unique_pairs: bool = False) -> RegressionProblem:
    samples = gather_samples(table, spec)
    return assemble_theta_from_samples(
        terms, samples, spec.spatial_dim, spec.target_order, table.n_rows,
        unique_pairs)


def assemble_lhs(lhs_spec: LhsSpec, table: SampleTable, spec: LibrarySpec,
                 unique_pairs: bool = False) -> np.ndarray:
    """Left-hand-side vector aligned row-for-row with assemble_theta."""
    dim = spec.spatial_dim
    order = spec.target_order
    n = table.n_rows
    tuples = free_component_tuples(dim, order, unique_pairs)

    if isinstance(lhs_spec, TimeDerivativeLhs):
        matches = [i for i in spec.inputs if i.name == lhs_spec.quantity]
        if not matches:
            raise ValueError(
                f"unknown quantity '{lhs_spec.quantity}' for the "
                f"time-derivative target")
        inp = matches[0]
        if inp.base_order != order:
            raise ValueError(
                f"quantity '{inp.name}' has order {inp.base_order}, "
                f"target equation order is {order}")
        names = component_names(inp, dim)
        cache: dict[str, np.ndarray] = {}
        out = np.empty(len(tuples) * n)
        for b, tup in enumerate(tuples):
            ch = names[tup]
            if ch not in cache:
                ds = table.dataset
                if ch not in ds.fields and ch not in ds.time_derivatives:
                    raise ValueError(f"dataset has no channel '{ch}'")
                cache[ch] = table.gather_time_derivative(ch)
            out[b * n:(b + 1) * n] = cache[ch]
    elif isinstance(lhs_spec, PrescribedLhs):
        samples = gather_samples(table, spec)
        acc = np.zeros((dim,) * order + (n,))
        for coeff, term in lhs_spec.terms:
            if term.order != order:
                raise ValueError(
                    f"prescribed term '{term.text}' has order "
                    f"{term.order}, target equation order is {order}")
            acc = acc + coeff * contract_candidate(term, samples, dim, (n,))
        out = np.concatenate([np.asarray(acc[tup]) for tup in tuples])
    else:
        raise TypeError(f"unsupported lhs spec {type(lhs_spec).__name__}")

    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        r = int(bad[0])
        raise ValueError(
            f"left-hand side is non-finite at sample {r % n}, component "
            f"tuple {tuple(v + 1 for v in tuples[r // n])}")
    return out


def assemble_problem(terms, table: SampleTable, spec: LibrarySpec,
                     lhs_spec: LhsSpec,
                     unique_pairs: bool = False) -> RegressionProblem:
    problem = assemble_theta(terms, table, spec, unique_pairs)
    problem.lhs = assemble_lhs(lhs_spec, table, spec, unique_pairs)
    return problem


def assemble_scalar_problem(candidates: list[ScalarCandidate],
                            table: SampleTable,
                            lhs_channel: str) -> RegressionProblem:
    """Componentwise baseline: one row per sample, one regression per
    left-hand-side channel."""
    n = table.n_rows
    theta = np.empty((n, len(candidates)))
    for c, cand in enumerate(candidates):
        col = np.ones(n)
        for ch in cand.monomial:
            col = col * table.gather(ch)
        if cand.derivative is not None:
            ch, axes = cand.derivative
            col = col * table.gather(ch, axes)
        if not np.isfinite(col).all():
            s = int(np.flatnonzero(~np.isfinite(col))[0])
            raise ValueError(
                f"candidate '{cand.text}' is non-finite at sample {s}")
        theta[:, c] = col
    lhs = table.gather_time_derivative(lhs_channel)
    if not np.isfinite(lhs).all():
        raise ValueError(f"lhs channel '{lhs_channel}' is non-finite")
    row_meta = tuple((s, ()) for s in range(n))
    return RegressionProblem(theta, lhs, tuple(candidates), row_meta,
                             table.dataset.spatial_dim, 0)


def case_lhs_spec(preset) -> LhsSpec:
    """Materialize a case preset's lhs declaration."""
    kind = preset.lhs[0]
    if kind == "time_derivative":
        return TimeDerivativeLhs(preset.lhs[1])
    if kind == "shear_rate":
        scale = preset.lhs[1]
        from ctsr.terms import TensorFactor
        grad = CandidateTerm((TensorFactor("u", 1, 1, (0, 1), ()),))
        grad_t = CandidateTerm((TensorFactor("u", 1, 1, (1, 0), ()),))
        return PrescribedLhs(((scale, grad), (scale, grad_t)),
                             label=f"{scale}*(du[i]/dx[j] + du[j]/dx[i])")
    raise ValueError(f"unknown lhs kind {kind!r}")
