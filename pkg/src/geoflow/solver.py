"""Sparse linear algebra for the per-step block systems.

Thin layer over :mod:`scipy.sparse`: triplet accumulation, products and a
direct / preconditioned-GMRES solve that always reports an independently
recomputed residual.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.io
from scipy import sparse
from scipy.sparse import linalg as spla


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class TripletMatrix:
    """Accumulates (row, col, value) entries; duplicates are summed on finalize."""

    def __init__(self, shape):
        self.shape = (int(shape[0]), int(shape[1]))
        self._rows, self._cols, self._vals = [], [], []

    def add(self, rows, cols, values):
        r = np.asarray(rows, dtype=np.int64).ravel()
        c = np.asarray(cols, dtype=np.int64).ravel()
        v = np.broadcast_to(np.asarray(values, dtype=np.float64), r.shape).ravel()
        if r.shape != c.shape:
            raise ValueError("row and column index arrays differ in length")
        if r.size and (r.min() < 0 or r.max() >= self.shape[0] or c.min() < 0 or c.max() >= self.shape[1]):
            raise IndexError("triplet index out of range")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite matrix entry")
        self._rows.append(r)
        self._cols.append(c)
        self._vals.append(v)

    def finalize(self):
        if not self._rows:
            return sparse.csr_matrix(self.shape)
        m = sparse.csr_matrix(
            (np.concatenate(self._vals), (np.concatenate(self._rows), np.concatenate(self._cols))),
            shape=self.shape,
        )
        m.sum_duplicates()
        return m


def spmv(A, x):
    """Sparse matrix-vector product."""
    x = np.asarray(x, dtype=np.float64)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    wall_time: float
    singular: bool
    message: str = ""


def relative_residual(A, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return float(r / nb) if nb > 0 else float(r)


def _ilu(A):
    # closest scipy analogue to ILU(0): no extra fill, no dropping
    return spla.spilu(A.tocsc(), fill_factor=1.0, drop_tol=0.0)


def lu_factor(A):
    """Sparse LU factors of ``A``; raises SolverError when ``A`` is singular."""
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            return spla.splu(sparse.csc_matrix(A))
    except (RuntimeError, spla.MatrixRankWarning) as exc:
        rep = SolveReport("DirectLU", 0, float("inf"), time.perf_counter() - t0, True, str(exc))
        raise SolverError(f"factorization failed: {exc}", rep) from None


def solve(A, b, method="DirectLU", tol=1e-10, *, restart=50, raise_on_failure=False):
    """Solve ``A x = b``; returns ``(x, SolveReport)``.

    The singular flag is set when factorization fails, the result is not
    finite, or the recomputed relative residual exceeds ``tol``.  Singular
    systems are never regularized.
    """
    A = sparse.csr_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if b.shape != (n,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({n},)")
    t0 = time.perf_counter()
    iters = 0
    msg = ""
    x = np.zeros(n)
    failed = False
    if method == "DirectLU":
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                lu = spla.splu(A.tocsc())
            x = lu.solve(b)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            failed, msg = True, str(exc)
    elif method == "GMRES":
        count = [0]

        def cb(_):
            count[0] += 1

        try:
            ilu = _ilu(A)
            M = spla.LinearOperator(A.shape, ilu.solve, dtype=np.float64)
        except RuntimeError as exc:
            M, msg = None, f"ILU failed ({exc}); unpreconditioned"
        x, info = spla.gmres(
            A, b, rtol=tol, restart=restart, maxiter=max(1, 10 * n // restart),
            M=M, callback=cb, callback_type="pr_norm",
        )
        iters = count[0]
        if info != 0:
            msg = (msg + "; " if msg else "") + f"gmres info={info}"
    else:
        raise ValueError(f"unknown method {method!r}")
    elapsed = time.perf_counter() - t0
    finite = bool(np.all(np.isfinite(x)))
    res = relative_residual(A, x, b) if finite else float("inf")
    singular = failed or not finite or (method == "DirectLU" and res > tol)
    report = SolveReport(method, iters, res, elapsed, singular, msg)
    if raise_on_failure and (singular or res > tol):
        raise SolverError(f"linear solve failed: {msg or f'residual {res:.3e}'}", report)
    return x, report


def export_matrix_market(path, A, b=None):
    """Write ``A`` (and optionally ``b``) in MatrixMarket format for offline debugging."""
    scipy.io.mmwrite(str(path), sparse.coo_matrix(A))
    if b is not None:
        scipy.io.mmwrite(str(path) + ".rhs", np.asarray(b).reshape(-1, 1))


class LinearSolver:
    """Per-run solve strategy for a sequence of slowly varying systems.

    With ``reuse_factorization`` the LU factors of an earlier matrix drive
    iterative refinement on the current one, measured on the true residual;
    the factors are rebuilt when refinement stagnates, needs more than
    ``refactor_after`` sweeps or misses ``tol``.  Every
    returned solution meets ``tol`` exactly as a fresh factorization would, or
    is flagged singular.  The cached factors are owned by this object, so
    independent runs never share state.
    """

    def __init__(self, method="DirectLU", tol=1e-10, *, reuse_factorization=False, refactor_after=10):
        if method not in ("DirectLU", "GMRES"):
            raise ValueError(f"unknown method {method!r}")
        self.method = method
        self.tol = float(tol)
        self.reuse = bool(reuse_factorization) and method == "DirectLU"
        self.refactor_after = int(refactor_after)
        self._lu = None
        self._shape = None
        self.factorizations = 0

    def reset(self):
        self._lu = None
        self._shape = None

    def _factor_and_solve(self, A, b, t0):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                lu = spla.splu(A.tocsc())
            x = lu.solve(b)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            self.reset()
            return np.zeros(len(b)), SolveReport("DirectLU", 0, float("inf"), time.perf_counter() - t0, True, str(exc))
        self.factorizations += 1
        finite = bool(np.all(np.isfinite(x)))
        res = relative_residual(A, x, b) if finite else float("inf")
        singular = not finite or res > self.tol
        self._lu, self._shape = (None, None) if singular else (lu, A.shape)
        return x, SolveReport("DirectLU", 0, res, time.perf_counter() - t0, singular)

    def solve(self, A, b):
        if not self.reuse:
            return solve(A, b, self.method, self.tol)
        A = sparse.csr_matrix(A)
        b = np.asarray(b, dtype=np.float64)
        if A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise ValueError(f"dimension mismatch: {A.shape} and {b.shape}")
        t0 = time.perf_counter()
        if self._lu is None or self._shape != A.shape:
            return self._factor_and_solve(A, b, t0)
        # iterative refinement against the lagged factors, on the true residual
        x = self._lu.solve(b)
        res = relative_residual(A, x, b)
        iters = 1
        nb = np.linalg.norm(b)
        while res > 0.5 * self.tol and iters < self.refactor_after:
            prev = res
            x = x + self._lu.solve(b - A @ x)
            iters += 1
            res = relative_residual(A, x, b) if nb > 0 else 0.0
            if not np.isfinite(res) or res > 0.5 * prev:
                break  # stagnating: the factors are too far from A
        if not res <= self.tol:
            return self._factor_and_solve(A, b, t0)
        if iters > self.refactor_after // 2:
            self._lu = None  # convergence slowing; rebuild on the next call
        return x, SolveReport("DirectLU", iters, res, time.perf_counter() - t0, False, "reused factorization")
