"""Empirical rotation/reflection checks for candidate evaluation.

Candidates built from full index contractions should commute with any
orthogonal change of frame: evaluating on rotated fields must equal
rotating the evaluation.  This module provides the transforms, analytic
and grid-based field sources to test against, and the deviation
measurements, plus a CSV report of candidate x transform deviations.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import permutations, product

import numpy as np

from .assembly import contract_candidate
from .datasets import GridDataset, fd_derivative
from .library import component_names
from .synth import TrigField, TrigMode, random_trig_field, trig_sum

ORTHOGONALITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class OrthogonalTransform:
    matrix: np.ndarray
    kind: str = "general"
    label: str = ""

    def __post_init__(self):
        R = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", R)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("transform matrix must be square")
        if np.max(np.abs(R.T @ R - np.eye(R.shape[0]))) > ORTHOGONALITY_TOL:
            raise ValueError("matrix is not orthogonal within 1e-12")
        if self.kind not in ("lattice-symmetry", "general"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "lattice-symmetry":
            snapped = np.round(R)
            if np.max(np.abs(R - snapped)) > ORTHOGONALITY_TOL or not all(
                    np.count_nonzero(col) == 1 for col in snapped.T):
                raise ValueError(
                    "lattice-symmetry transforms must be signed permutations")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))

    def compose(self, other: OrthogonalTransform) -> OrthogonalTransform:
        """Transform equal to applying `other` first, then this one."""
        kind = ("lattice-symmetry"
                if self.kind == other.kind == "lattice-symmetry"
                else "general")
        label = f"{self.label}*{other.label}" if self.label else ""
        return OrthogonalTransform(self.matrix @ other.matrix, kind, label)


def identity_transform(dim: int) -> OrthogonalTransform:
    return OrthogonalTransform(np.eye(dim), "lattice-symmetry", "identity")


def lattice_symmetries(dim: int) -> list[OrthogonalTransform]:
    """All signed permutation matrices: the symmetries mapping a periodic
    grid onto itself (8 in 2D, 48 in 3D)."""
    out = []
    for perm in permutations(range(dim)):
        for signs in product((1.0, -1.0), repeat=dim):
            R = np.zeros((dim, dim))
            for a, (p, s) in enumerate(zip(perm, signs)):
                R[p, a] = s
            out.append(OrthogonalTransform(R, "lattice-symmetry",
                                           f"lattice-{len(out):02d}"))
    return out


def random_rotation(rng: np.random.Generator, dim: int,
                    label: str = "") -> OrthogonalTransform:
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return OrthogonalTransform(q, "general", label or "rotation")


def random_reflection(rng: np.random.Generator, dim: int,
                      label: str = "") -> OrthogonalTransform:
    t = random_rotation(rng, dim)
    R = t.matrix.copy()
    R[:, 0] = -R[:, 0]
    return OrthogonalTransform(R, "general", label or "reflection")


class AnalyticFieldSource:
    """Random trigonometric fields for every case input, evaluable (with
    exact derivatives) at arbitrary points, and closed under orthogonal
    transforms.  Arbitrary rotations are only meaningful here: rotating
    sampled grid data would need interpolation, which contaminates the
    check."""

    def __init__(self, dim: int, quantities: dict[str, dict]):
        self.dim = dim
        # name -> {"order": k, "components": {index tuple: TrigField}}
        self.quantities = quantities

    @classmethod
    def for_case(cls, preset, rng: np.random.Generator, n_modes: int = 4,
                 max_wavenumber: int = 2, amplitude: float = 1.0,
                 constants: dict[str, float] | None = None):
        """Draw one random steady field per input component; channels
        listed in `constants` become uniform fields of that value."""
        constants = constants or {}
        dim = preset.spatial_dim
        quantities = {}
        for inp in preset.inputs:
            names = component_names(inp, dim)
            comps: dict[tuple[int, ...], TrigField] = {}
            for comp in sorted(names):
                key = tuple(sorted(comp))
                if key in comps:
                    comps[comp] = comps[key]
                    continue
                ch = names[comp]
                if ch in constants:
                    f = TrigField((TrigMode(constants[ch],
                                            (0.0,) * dim, 0.0, 0.0),), dim)
                else:
                    f = random_trig_field(rng, dim, n_modes, max_wavenumber,
                                          amplitude)
                comps[comp] = f
            quantities[inp.name] = {"order": inp.base_order,
                                    "components": comps}
        return cls(dim, quantities)

    def samples(self, points: np.ndarray, needs) -> dict:
        """Evaluate requested (name, derivative order) arrays at points of
        shape (dim, n), in the layout contract_candidate expects."""
        points = np.asarray(points, dtype=float)
        n = points.shape[1]
        out = {}
        for name, d in sorted(set(needs)):
            q = self.quantities[name]
            order = q["order"]
            arr = np.empty((self.dim,) * (order + d) + (n,))
            for comp in np.ndindex(*(self.dim,) * order):
                base = q["components"][comp]
                for axes in np.ndindex(*(self.dim,) * d):
                    arr[comp + axes] = base.derivative(axes).evaluate(points)
            out[(name, d)] = arr
        return out

    def transformed(self, transform: OrthogonalTransform) -> AnalyticFieldSource:
        """Fields observed in the transformed frame: an order-k quantity
        picks up k factors of R and its argument is mapped by R^T."""
        R = transform.matrix
        quantities = {}
        for name, q in self.quantities.items():
            order = q["order"]
            comps = {}
            for comp in np.ndindex(*(self.dim,) * order):
                parts = []
                for src in np.ndindex(*(self.dim,) * order):
                    weight = math.prod(R[i, a] for i, a in zip(comp, src))
                    if weight != 0.0:
                        parts.append(q["components"][src].rotate(R)
                                     .scaled(weight))
                if not parts:
                    parts = [TrigField((TrigMode(0.0, (0.0,) * self.dim,
                                                 0.0, 0.0),), self.dim)]
                comps[comp] = trig_sum(parts)
            quantities[name] = {"order": order, "components": comps}
        return AnalyticFieldSource(self.dim, quantities)


def _signed_permutation(transform: OrthogonalTransform):
    """Decompose R e_a = s_a e_{perm(a)} into (perm, signs)."""
    R = np.round(transform.matrix)
    perm = [int(np.flatnonzero(R[:, a])[0]) for a in range(transform.dim)]
    signs = [float(R[perm[a], a]) for a in range(transform.dim)]
    return perm, signs


def _permute_grid_axes(arr: np.ndarray, transform: OrthogonalTransform,
                       offset: int) -> np.ndarray:
    """Relocate grid values for a signed permutation: the transformed
    array at index m takes the original value at index s_a * m_perm(a)
    along each original axis a.  `offset` counts leading non-grid axes."""
    perm, signs = _signed_permutation(transform)
    dim = transform.dim
    out = arr
    for a in range(dim):
        if signs[a] < 0:
            ax = offset + a
            out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    inverse = [perm.index(j) for j in range(dim)]
    axes = (list(range(offset)) + [offset + inverse[j] for j in range(dim)]
            + list(range(offset + dim, arr.ndim)))
    return np.ascontiguousarray(np.transpose(out, axes))


def transform_fields(source, transform: OrthogonalTransform):
    """Transformed copy of a field source.

    Analytic sources accept any orthogonal transform.  Grid datasets only
    accept lattice symmetries, which map the periodic lattice onto itself;
    anything else would require interpolation.
    """
    if isinstance(source, AnalyticFieldSource):
        return source.transformed(transform)
    if not isinstance(source, GridDataset):
        raise TypeError(f"cannot transform {type(source).__name__}")
    if transform.kind != "lattice-symmetry":
        raise ValueError("grid datasets transform only under lattice "
                         "symmetries; use an analytic source for general "
                         "rotations")
    ds = source
    dim = ds.spatial_dim
    if transform.dim != dim:
        raise ValueError("transform dimension does not match the dataset")
    perm, _ = _signed_permutation(transform)
    inverse = [perm.index(j) for j in range(dim)]
    new_shape = tuple(ds.shape[inverse[j]] for j in range(dim))
    new_spacing = tuple(ds.spacing[inverse[j]] for j in range(dim))
    if new_shape != tuple(ds.shape) and len(set(ds.shape)) != 1:
        raise ValueError("axis permutation requires matching grid extents")

    R = transform.matrix

    def transform_quantity(order, comp_to_channel, arrays):
        moved = {c: _permute_grid_axes(arrays[ch], transform, 1)
                 for c, ch in comp_to_channel.items()}
        out = {}
        for comp, ch in comp_to_channel.items():
            acc = np.zeros_like(moved[comp])
            for src in np.ndindex(*(dim,) * order):
                weight = math.prod(R[i, a] for i, a in zip(comp, src))
                if weight != 0.0:
                    acc = acc + weight * moved[src]
            out[ch] = acc
        return out

    fields = {}
    for q in ds.quantities.values():
        full = {c: ch for c, ch in q.components.items()}
        fields.update(transform_quantity(q.order, full, ds.fields))

    time_derivatives = dict(ds.time_derivatives)
    lhs_name = ds.provenance.get("lhs_quantity")
    if lhs_name and lhs_name in ds.quantities and ds.time_derivatives:
        q = ds.quantities[lhs_name]
        stored = {c: ch for c, ch in q.components.items()
                  if ch in ds.time_derivatives}
        if stored:
            full = {c: q.components[c] for c in q.components}
            arrays = {q.components[c]: ds.time_derivatives[
                q.components[tuple(sorted(c)) if q.symmetric else c]]
                for c in q.components}
            time_derivatives = transform_quantity(q.order, full, arrays)
            time_derivatives = {ch: time_derivatives[ch]
                                for ch in ds.time_derivatives}

    provenance = dict(ds.provenance)
    provenance["frame_transform"] = [[float(v) for v in row]
                                     for row in transform.matrix]
    return GridDataset(
        spatial_dim=dim,
        shape=new_shape,
        spacing=new_spacing,
        dt=ds.dt,
        times=ds.times,
        boundary=ds.boundary,
        fields=fields,
        quantities=dict(ds.quantities),
        time_derivatives=time_derivatives,
        derivatives={},
        provenance=provenance,
    )


def _apply_frame(arr: np.ndarray, R: np.ndarray, order: int) -> np.ndarray:
    """Contract R onto each of the first `order` axes."""
    out = arr
    for ax in range(order):
        out = np.moveaxis(np.tensordot(R, out, axes=(1, ax)), 0, ax)
    return out


def _term_needs(term):
    """Sample arrays a term consumes.

    A term is either a library candidate or, for negative controls, a
    callable taking the samples dict, carrying `needs`, `order` and
    `text` attributes.
    """
    factors = getattr(term, "factors", None)
    if factors is None:
        return set(term.needs)
    return {(f.base, f.deriv_order) for f in factors}


def _term_order(term) -> int:
    if getattr(term, "factors", None) is None:
        return term.order
    return len(term.free_suffixes)


def _evaluate_term(term, samples, dim: int, n: int) -> np.ndarray:
    if getattr(term, "factors", None) is None:
        return np.asarray(term(samples))
    return contract_candidate(term, samples, dim, (n,))


def check_equivariance(term, source: AnalyticFieldSource,
                       transform: OrthogonalTransform,
                       points: np.ndarray) -> float:
    """Max pointwise deviation between evaluating on transformed fields
    and transforming the evaluation.

    The transformed-frame evaluation at x corresponds to the original
    evaluation at R^T x, so both sides are compared on matched points.
    """
    R = transform.matrix
    points = np.asarray(points, dtype=float)
    n = points.shape[1]
    needs = _term_needs(term)
    order = _term_order(term)
    left = _evaluate_term(term, source.transformed(transform)
                          .samples(points, needs), source.dim, n)
    right = _evaluate_term(term, source.samples(R.T @ points, needs),
                           source.dim, n)
    return float(np.max(np.abs(left - _apply_frame(right, R, order))))


def check_grid_equivariance(term, dataset: GridDataset,
                            transform: OrthogonalTransform) -> float:
    """Same comparison on a periodic grid with stencil derivatives.

    Signed permutations commute exactly with central stencils, so the
    deviation is pure floating-point noise.
    """
    dim = dataset.spatial_dim
    order = len(term.free_suffixes)
    trailing = (dataset.times,) + tuple(dataset.shape)
    transformed = transform_fields(dataset, transform)

    def grid_samples(ds, needs):
        out = {}
        for name, d in sorted(needs):
            q = ds.quantities[name]
            arr = np.empty((dim,) * (q.order + d)
                           + (ds.times,) + tuple(ds.shape))
            for comp, ch in q.components.items():
                for axes in np.ndindex(*(dim,) * d):
                    arr[comp + axes] = fd_derivative(ds, ch, axes)
            out[(name, d)] = arr
        return out

    needs = _term_needs(term)
    left = contract_candidate(term, grid_samples(transformed, needs), dim,
                              (transformed.times,) + tuple(transformed.shape))
    right = contract_candidate(term, grid_samples(dataset, needs), dim,
                               trailing)
    right = _apply_frame(right, transform.matrix, order)
    right = _permute_grid_axes(right, transform, order + 1)
    return float(np.max(np.abs(left - right)))


def check_equation_invariance(coefficients, terms,
                              source: AnalyticFieldSource,
                              transform: OrthogonalTransform,
                              points: np.ndarray,
                              lhs_terms, lhs_coefficients) -> float:
    """Residual-norm increase OF A FITTED MODEL under a change of frame.

    The target data transforms by the tensor law (it is measured, not
    re-derived), while every candidate is re-evaluated on the transformed
    fields with the same coefficients.  The increase is normalized by the
    target norm because an exactly-recovered model leaves a near-zero
    baseline residual that would make a relative-to-residual measure
    meaningless.
    """
    R = transform.matrix
    points = np.asarray(points, dtype=float)
    dim = source.dim
    n = points.shape[1]

    model_entries = [(c, t) for c, t in zip(coefficients, terms) if c != 0.0]
    needs = set()
    for _, t in model_entries:
        needs |= _term_needs(t)
    lhs_needs = set()
    for t in lhs_terms:
        lhs_needs |= _term_needs(t)

    def evaluate(entries, samples, order):
        acc = np.zeros((dim,) * order + (n,))
        for c, t in entries:
            acc = acc + c * _evaluate_term(t, samples, dim, n)
        return acc

    lhs_entries = list(zip(lhs_coefficients, lhs_terms))
    order = max((_term_order(t) for _, t in lhs_entries), default=1)

    base_samples = source.samples(points, needs | lhs_needs)
    y0 = evaluate(lhs_entries, base_samples, order)
    r0 = evaluate(model_entries, base_samples, order) - y0

    moved = source.transformed(transform).samples(R @ points,
                                                  needs | lhs_needs)
    y1 = _apply_frame(y0, R, order)
    r1 = evaluate(model_entries, moved, order) - y1

    scale = max(float(np.linalg.norm(y0)), 1e-30)
    return (float(np.linalg.norm(r1)) - float(np.linalg.norm(r0))) / scale


def equivariance_report(terms, source: AnalyticFieldSource, transforms,
                        points: np.ndarray) -> list[dict]:
    """Deviation of every candidate under every transform."""
    rows = []
    for term in terms:
        for transform in transforms:
            rows.append({
                "term": getattr(term, "text", str(term)),
                "transform": transform.label or transform.kind,
                "kind": transform.kind,
                "deviation": check_equivariance(term, source, transform,
                                                points),
            })
    return rows


def summarize_report(rows, threshold: float = 1e-8) -> dict:
    worst = max(rows, key=lambda r: r["deviation"], default=None)
    failures = [r for r in rows if r["deviation"] >= threshold]
    return {
        "n_checks": len(rows),
        "threshold": threshold,
        "max_deviation": worst["deviation"] if worst else 0.0,
        "worst_term": worst["term"] if worst else "",
        "failures": len(failures),
        "passed": not failures,
    }


def write_equivariance_csv(rows, path) -> None:
    """Matrix form: one row per candidate, one column per transform."""
    terms = list(dict.fromkeys(r["term"] for r in rows))
    transforms = list(dict.fromkeys(r["transform"] for r in rows))
    cell = {(r["term"], r["transform"]): r["deviation"] for r in rows}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["term"] + transforms)
        for t in terms:
            writer.writerow([t] + [repr(cell[(t, name)])
                                   for name in transforms])
