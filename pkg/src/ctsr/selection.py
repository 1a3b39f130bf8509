"""Discovery-quality metrics, the d_tol sweep, and diagnostics.

Coefficient error and redundancy are measured against a declared ground
truth; the sweep trades off sparsity against residual and suggests a
tolerance at the knee of the Pareto front.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from ctsr.library import AXIS_LETTERS
from ctsr.solver import Hyperparams, SparseSolution, train_stridge
from ctsr.terms import CandidateTerm


@dataclass(frozen=True)
class GroundTruth:
    """The exact equation: canonical terms with their true coefficients."""

    terms: tuple[tuple[CandidateTerm, float], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("ground truth must contain at least one term")
        for term, coeff in self.terms:
            if coeff == 0:
                raise ValueError(
                    f"ground-truth coefficient for '{term.text}' is zero")

    def column_map(self, library) -> dict[int, float]:
        """Map library column index -> true coefficient."""
        out = {}
        for term, coeff in self.terms:
            hits = [i for i, t in enumerate(library) if t == term]
            if not hits:
                raise ValueError(
                    f"ground-truth term '{term.text}' is not in the library")
            out[hits[0]] = coeff
        return out


@dataclass
class ParetoPoint:
    d_tol: float
    sparsity: int
    residual: float
    solution: SparseSolution


def prediction_error(solution: SparseSolution, truth: GroundTruth,
                     library) -> float:
    """Mean relative coefficient error over the true terms, in percent.

    A true term with zero identified coefficient contributes exactly
    100% (|0 - c|/|c| = 1), which keeps the metric total for omissions.
    """
    cols = truth.column_map(library)
    errs = [abs(solution.coefficients[i] - c) / abs(c)
            for i, c in cols.items()]
    return 100.0 * float(np.mean(errs))


def redundancy_count(solution: SparseSolution, truth: GroundTruth,
                     library) -> int:
    """Number of identified nonzero terms absent from the ground truth."""
    truth_cols = set(truth.column_map(library))
    return len(set(solution.support) - truth_cols)


def dtol_grid(lo: float = 1e-5, hi: float = 1e3, n: int = 60) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)


def sweep_dtol(problem, hyper: Hyperparams,
               grid=None) -> list[ParetoPoint]:
    """One tuning run per grid tolerance; residuals are measured on the
    full raw problem so points are comparable across tolerances."""
    if grid is None:
        grid = dtol_grid()
    theta, lhs = problem.theta, problem.lhs
    points = []
    for d in np.asarray(grid, dtype=float):
        sol = train_stridge(problem, replace(hyper, d_tol=float(d)))
        residual = float(np.linalg.norm(theta @ sol.coefficients - lhs))
        points.append(ParetoPoint(float(d), sol.sparsity, residual, sol))
    return points


def pareto_front(points: list[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated subset under (minimize sparsity, minimize residual);
    exact ties keep the smallest d_tol.  Sorted by sparsity."""
    if not points:
        raise ValueError("no sweep points")
    best: dict[int, ParetoPoint] = {}
    for p in points:
        q = best.get(p.sparsity)
        if q is None or (p.residual, p.d_tol) < (q.residual, q.d_tol):
            best[p.sparsity] = p
    front = []
    incumbent = math.inf
    for s in sorted(best):
        if best[s].residual < incumbent:
            front.append(best[s])
            incumbent = best[s].residual
    return front


def knee_point(front: list[ParetoPoint]) -> ParetoPoint | None:
    """Front point farthest below the chord between the extremes, in
    (sparsity, log10 residual) coordinates.

    The distance is signed: the elbow of a decreasing tradeoff curve
    bends toward the origin, below the chord.  A point bulging above the
    chord marks diminishing returns, not an elbow, so it never wins.
    Near-ties (within 1e-9) resolve to the median such point, so a
    degenerate straight-line front suggests its midpoint.  Fronts with
    fewer than two points yield no suggestion.
    """
    if len(front) < 2:
        return None
    pts = sorted(front, key=lambda p: p.sparsity)
    x = np.array([p.sparsity for p in pts], dtype=float)
    y = np.log10(np.maximum([p.residual for p in pts], 1e-300))
    dx, dy = x[-1] - x[0], y[-1] - y[0]
    length = math.hypot(dx, dy)
    dist = (dy * (x - x[0]) - dx * (y - y[0])) / length
    ties = np.flatnonzero(dist >= dist.max() - 1e-9)
    return pts[int(ties[len(ties) // 2])]


def suggested_dtol(point: ParetoPoint) -> float:
    """Tolerance to recommend for a front point.

    The tuning walk can capture its best iterate far from the grid value
    it started at, and several starting values often converge on the same
    model; the tolerance that actually produced the point's coefficients
    is the reproducible recommendation.  Synthetic points without an
    attached solution fall back to their grid value.
    """
    sol = point.solution
    if sol is None or not math.isfinite(getattr(sol, "best_tol", math.nan)):
        return point.d_tol
    return float(sol.best_tol)


def dimension_split_diagnostic(problem, truth: GroundTruth,
                               hyper: Hyperparams) -> dict[str, float]:
    """Per-axis coefficient errors from regressing each free-component
    row block alone, plus the error of the full stacked regression."""
    if problem.target_order != 1:
        raise ValueError("the split diagnostic expects an order-1 target")
    dim = problem.dim
    n = problem.n_rows // dim
    library = problem.column_meta
    out = {}
    for a in range(dim):
        rows = slice(a * n, (a + 1) * n)
        sol = train_stridge((problem.theta[rows], problem.lhs[rows]), hyper)
        out[AXIS_LETTERS[a]] = prediction_error(sol, truth, library)
    out["stacked"] = prediction_error(train_stridge(problem, hyper),
                                      truth, library)
    return out


def write_sweep_csv(points: list[ParetoPoint], front: list[ParetoPoint],
                    knee: ParetoPoint | None, path) -> None:
    on_front = {id(p) for p in front}
    knee_id = id(knee) if knee is not None else None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["d_tol", "sparsity", "residual", "is_front",
                         "is_knee"])
        for p in points:
            writer.writerow([repr(p.d_tol), p.sparsity, repr(p.residual),
                             int(id(p) in on_front),
                             int(id(p) == knee_id)])
