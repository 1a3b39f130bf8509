"""Sparse regression solvers.

Ridge regression with hard-threshold iteration (sequential thresholded
ridge) and the train/test tolerance-tuning loop around it.  All solves are
deterministic given the seed.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hyperparams:
    d_tol: float
    lam: float = 1e-5
    n_train: int = 25
    n_stridge: int = 10
    split_ratio: float = 0.8
    seed: int = 0
    # "multiplicative": improve -> tol/1.5, worsen -> tol*2 (capped)
    # "additive": improve -> tol+eta, worsen -> backtrack with shrinking eta
    tol_schedule: str = "multiplicative"
    normalize_columns: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.d_tol <= 0:
            raise ValueError("d_tol must be > 0")
        if self.n_train < 1 or self.n_stridge < 1:
            raise ValueError("n_train and n_stridge must be >= 1")
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must lie in (0, 1)")
        if self.tol_schedule not in ("multiplicative", "additive"):
            raise ValueError(f"unknown tol_schedule {self.tol_schedule!r}")


@dataclass
class SparseSolution:
    coefficients: np.ndarray
    test_error: float
    kappa: float
    iterations_run: int
    tolerance_trace: tuple[tuple[float, float], ...]
    # tolerance at which the returned coefficients were produced; more
    # informative than the starting d_tol because the tuning walk may
    # capture its best iterate far from where it began
    best_tol: float = math.nan

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.coefficients))

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self.coefficients))


def ridge(theta: np.ndarray, lhs: np.ndarray, lam: float) -> np.ndarray:
    """Minimize ||theta @ xi - lhs||^2 + lam * ||xi||^2.

    Solved as an augmented least-squares problem, which stays stable when
    theta is ill-conditioned; lam = 0 degrades to the minimum-norm
    least-squares solution.
    """
    theta = np.asarray(theta, dtype=float)
    lhs = np.asarray(lhs, dtype=float).reshape(-1)
    n, k = theta.shape
    if lam > 0:
        aug = np.vstack([theta, math.sqrt(lam) * np.eye(k)])
        rhs = np.concatenate([lhs, np.zeros(k)])
    else:
        aug, rhs = theta, lhs
    xi, _, rank, _ = np.linalg.lstsq(aug, rhs, rcond=None)
    if lam == 0 and rank < k:
        log.debug("rank-deficient unregularized solve (rank %d of %d); "
                  "minimum-norm solution returned", rank, k)
    return xi


def condition_number(theta: np.ndarray) -> float:
    """Effective condition number: largest singular value over the smallest
    one above the rank cutoff.

    Tensor candidate libraries contain exact algebraic identities (e.g. the
    2D antisymmetrization identity among quadratic second-derivative
    products), so their matrices have structurally zero singular values on
    any data.  Counting those as conditioning would price every nonzero
    model at infinity and reduce model selection to "fewest terms wins";
    instead the zero directions are treated as what they are - identities -
    and conditioning is measured on the row space.  An all-zero matrix has
    no usable directions and maps to inf.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.size == 0:
        raise ValueError("empty matrix has no condition number")
    s = np.linalg.svd(theta, compute_uv=False)
    smax = float(s[0])
    cutoff = smax * max(theta.shape) * np.finfo(float).eps
    kept = s[s > cutoff]
    if kept.size == 0:
        return math.inf
    return smax / float(kept[-1])


def selection_error(theta_test: np.ndarray, lhs_test: np.ndarray,
                    xi: np.ndarray, kappa: float) -> float:
    """Squared test residual plus a condition-weighted sparsity penalty."""
    nnz = int(np.count_nonzero(xi))
    resid = theta_test @ xi - lhs_test
    penalty = 0.0 if nnz == 0 else 1e-3 * kappa * nnz
    return float(resid @ resid) + penalty


def stridge(theta: np.ndarray, lhs: np.ndarray, lam: float, tol: float,
            n_stridge: int) -> np.ndarray:
    """Sequential thresholded ridge.

    Ridge-solve, zero out coefficients below tol, re-solve on the
    survivors until the active set stabilizes (or n_stridge iterations),
    then debias with an unregularized refit on the final support.
    tol = 0 returns the plain ridge solution untouched.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    theta = np.asarray(theta, dtype=float)
    lhs = np.asarray(lhs, dtype=float).reshape(-1)
    k = theta.shape[1]
    xi = ridge(theta, lhs, lam)
    if tol == 0:
        return xi
    active = np.flatnonzero(np.abs(xi) >= tol)
    for _ in range(n_stridge):
        if active.size == 0:
            return np.zeros(k)
        sub = ridge(theta[:, active], lhs, lam)
        survivors = np.abs(sub) >= tol
        if survivors.all():
            break
        active = active[survivors]
    if active.size == 0:
        return np.zeros(k)
    out = np.zeros(k)
    out[active] = np.linalg.lstsq(theta[:, active], lhs, rcond=None)[0]
    return out


def _split_rows(n: int, split_ratio: float, seed: int):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(round(split_ratio * n))
    train, test = perm[:n_train], perm[n_train:]
    if train.size == 0 or test.size == 0:
        raise ValueError(
            f"degenerate split: {train.size} train / {test.size} test rows")
    return train, test


def train_stridge(problem, hyper: Hyperparams) -> SparseSolution:
    """Tune the hard threshold on a seeded 4:1 split and return the
    best-scoring sparse solution encountered."""
    if hasattr(problem, "theta"):
        theta, lhs = problem.theta, problem.lhs
    else:
        theta, lhs = problem
    theta = np.asarray(theta, dtype=float)
    lhs = np.asarray(lhs, dtype=float).reshape(-1)
    n, k = theta.shape

    train, test = _split_rows(n, hyper.split_ratio, hyper.seed)

    if hyper.normalize_columns:
        norms = np.linalg.norm(theta, axis=0)
        norms[norms == 0] = 1.0
    else:
        norms = np.ones(k)
    theta_n = theta / norms

    kappa = condition_number(theta_n[train])

    w_base = np.linalg.lstsq(theta_n[train], lhs[train], rcond=None)[0]
    e1 = selection_error(theta_n[test], lhs[test], w_base, kappa)

    tol = hyper.d_tol
    tol_cap = 10.0 * hyper.d_tol * 2.0 ** hyper.n_train
    eta = hyper.d_tol

    best_w = None
    best_e = math.inf
    best_tol = hyper.d_tol
    trace = []
    for step in range(hyper.n_train):
        w = stridge(theta_n[train], lhs[train], hyper.lam, tol,
                    hyper.n_stridge)
        e2 = selection_error(theta_n[test], lhs[test], w, kappa)
        trace.append((tol, e2))
        if best_w is None or e2 < best_e:
            best_w, best_e, best_tol = w, e2, tol

        if hyper.tol_schedule == "multiplicative":
            if e2 < e1:
                e1 = e2
                tol = tol / 1.5
            else:
                tol = min(tol * 2.0, tol_cap)
        else:
            if e2 <= e1:
                e1 = e2
                tol = tol + eta
            else:
                tol = max(0.0, tol - 2.0 * eta)
                eta = 2.0 * eta / (hyper.n_train - step)
                tol = tol + eta

    return SparseSolution(
        coefficients=best_w / norms,
        test_error=best_e,
        kappa=kappa,
        iterations_run=len(trace),
        tolerance_trace=tuple(trace),
        best_tol=best_tol,
    )


def solution_csv(solution: SparseSolution, column_meta, path) -> None:
    """Write (column index, term, coefficient) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["column", "term", "coefficient"])
        for i, coeff in enumerate(solution.coefficients):
            term = column_meta[i] if column_meta is not None else ""
            writer.writerow([i, getattr(term, "text", str(term)),
                             repr(float(coeff))])


def solution_diagnostics(solution: SparseSolution) -> dict:
    """JSON-ready diagnostics record."""
    return {
        "test_error": solution.test_error,
        "kappa": solution.kappa,
        "sparsity": solution.sparsity,
        "support": list(solution.support),
        "iterations_run": solution.iterations_run,
        "best_tol": solution.best_tol,
        "tolerance_trace": [[t, e] for t, e in solution.tolerance_trace],
    }
