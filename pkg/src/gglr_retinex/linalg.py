"""Sparse symmetric linear algebra for the per-patch quadratic systems.

Holds a small compressed-row matrix type, a (Jacobi-)preconditioned conjugate
gradient solver, condition-number estimators and a dense direct-solve oracle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

DENSE_EIG_CAP = 2000
# eigenvalues below this fraction of lambda_max count as zero
KAPPA_ZERO_RTOL = 1e-12


class NotPositiveDefiniteError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"non-finite value encountered at CG iteration {iteration}")


@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """Symmetric matrix in compressed-row form (full pattern, not a triangle).

    Build instances with :meth:`from_coo` or :meth:`from_dense`; the raw
    constructor trusts its arrays.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for arr in (self.row_offsets, self.col_indices, self.values):
            arr.setflags(write=False)

    @classmethod
    def from_coo(cls, n: int, rows, cols, vals) -> "SparseSymMatrix":
        """Assemble from triplets, summing duplicates.

        Only the upper triangle (i <= j) of the input is read; the lower one is
        mirrored from it so (i, j) and (j, i) hold bit-identical values. Callers
        passing a full symmetric pattern therefore lose nothing.
        """
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols and vals must have the same length")
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
            raise ValueError("triplet index out of range")

        upper = rows <= cols
        r, c, v = rows[upper], cols[upper], vals[upper]
        key = r * n + c
        uniq, inverse = np.unique(key, return_inverse=True)
        summed = np.zeros(uniq.size)
        np.add.at(summed, inverse, v)
        ur, uc = np.divmod(uniq, n)

        off = ur != uc
        all_r = np.concatenate([ur, uc[off]])
        all_c = np.concatenate([uc, ur[off]])
        all_v = np.concatenate([summed, summed[off]])
        order = np.lexsort((all_c, all_r))
        all_r, all_c, all_v = all_r[order], all_c[order], all_v[order]

        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(all_r, minlength=n), out=offsets[1:])
        return cls(n, offsets, all_c, all_v)

    @classmethod
    def from_dense(cls, a) -> "SparseSymMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("dense matrix must be square")
        if not np.array_equal(a, a.T):
            raise ValueError("dense matrix is not symmetric")
        r, c = np.nonzero(a)
        return cls.from_coo(a.shape[0], r, c, a[r, c])

    @classmethod
    def identity(cls, n: int) -> "SparseSymMatrix":
        idx = np.arange(n)
        return cls.from_coo(n, idx, idx, np.ones(n))

    @classmethod
    def diag(cls, d) -> "SparseSymMatrix":
        d = np.asarray(d, dtype=np.float64)
        idx = np.arange(d.size)
        return cls.from_coo(d.size, idx, idx, d)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def row_indices(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.row_offsets))

    def coo(self):
        return self.row_indices, self.col_indices, self.values

    def diagonal(self) -> np.ndarray:
        rows = self.row_indices
        on_diag = rows == self.col_indices
        d = np.zeros(self.n)
        d[rows[on_diag]] = self.values[on_diag]
        return d

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.row_indices, self.col_indices] = self.values
        return a

    def scaled(self, p) -> "SparseSymMatrix":
        """Return diag(p) @ self @ diag(p)."""
        p = np.asarray(p, dtype=np.float64)
        rows = self.row_indices
        vals = self.values * p[rows] * p[self.col_indices]
        return SparseSymMatrix(self.n, self.row_offsets.copy(), self.col_indices.copy(), vals)

    def __add__(self, other: "SparseSymMatrix") -> "SparseSymMatrix":
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")
        r1, c1, v1 = self.coo()
        r2, c2, v2 = other.coo()
        return SparseSymMatrix.from_coo(
            self.n, np.concatenate([r1, r2]), np.concatenate([c1, c2]), np.concatenate([v1, v2])
        )

    def __matmul__(self, x):
        return matvec(self, x)

    def is_structurally_symmetric(self) -> bool:
        a = {(int(i), int(j)): v for i, j, v in zip(*self.coo())}
        return all((j, i) in a and a[(j, i)] == v for (i, j), v in a.items())


def matvec(A: SparseSymMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != A.n:
        raise ValueError(f"dimension mismatch: matrix is {A.n}x{A.n}, vector has shape {x.shape}")
    prod = A.values * x[A.col_indices]
    out = np.zeros(A.n)
    nonempty = np.diff(A.row_offsets) > 0
    if prod.size:
        out[nonempty] = np.add.reduceat(prod, A.row_offsets[:-1][nonempty])
    return out


@dataclass(frozen=True)
class DiagPreconditioner:
    """Symmetric diagonal scaling P = diag(p) with p_i = A_ii^(-1/2)."""

    p: np.ndarray

    def apply_to(self, A: SparseSymMatrix) -> SparseSymMatrix:
        return A.scaled(self.p)


def build_jacobi(A: SparseSymMatrix) -> DiagPreconditioner:
    d = A.diagonal()
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        raise NotPositiveDefiniteError(
            f"Jacobi scaling needs a positive diagonal; A[{bad[0]},{bad[0]}] = {d[bad[0]]}"
        )
    p = 1.0 / np.sqrt(d)
    if not np.all(np.isfinite(p)):
        raise NotPositiveDefiniteError("diagonal too small for a finite Jacobi scaling")
    return DiagPreconditioner(p)


@dataclass
class SolveReport:
    iterations: int
    final_relative_residual: float
    converged: bool
    kappa_before: Optional[float] = None
    kappa_after: Optional[float] = None
    wall_time: float = 0.0
    preconditioned: bool = False


def cg_solve(
    A: SparseSymMatrix,
    b,
    tol: float = 1e-6,
    max_iter: Optional[int] = None,
    precond: Optional[DiagPreconditioner] = None,
    x0=None,
    estimate_kappa: bool = False,
):
    """Conjugate gradient for a symmetric positive-definite ``A``.

    With ``precond`` the symmetrically scaled system diag(p) A diag(p) xh = diag(p) b
    is solved by plain CG and ``x = diag(p) xh`` is returned; the stopping rule
    ``||b - A x|| / ||b|| <= tol`` is then evaluated on the scaled system.

    Returns ``(x, SolveReport)``. Running out of iterations is not an error: the
    iterate with the smallest residual is returned with ``converged=False``.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or b.size != A.n:
        raise ValueError(f"dimension mismatch: matrix is {A.n}x{A.n}, rhs has shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side contains non-finite values")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = 10 * A.n

    kappa_before = kappa_after = None
    if precond is not None:
        M = precond.apply_to(A)
        rhs = precond.p * b
        start = None if x0 is None else np.asarray(x0, dtype=np.float64) / precond.p
    else:
        M = A
        rhs = b
        start = None if x0 is None else np.asarray(x0, dtype=np.float64)
    if estimate_kappa:
        kappa_before = _kappa_auto(A)
        kappa_after = _kappa_auto(M) if precond is not None else kappa_before

    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        report = SolveReport(0, 0.0, True, kappa_before, kappa_after,
                             time.perf_counter() - t0, precond is not None)
        return np.zeros(A.n), report

    if start is None:
        x = np.zeros(A.n)
        r = rhs.copy()
    else:
        x = start.copy()
        r = rhs - matvec(M, x)
    rel = np.linalg.norm(r) / bnorm
    best_x, best_rel = x.copy(), rel
    d = r.copy()
    rr = r @ r
    k = 0
    while rel > tol and k < max_iter:
        Md = matvec(M, d)
        dMd = d @ Md
        alpha = rr / dMd
        x = x + alpha * d
        r = r - alpha * Md
        rr_new = r @ r
        k += 1
        if not (np.isfinite(alpha) and np.isfinite(rr_new)):
            raise NonFiniteError(k)
        rel = np.sqrt(rr_new) / bnorm
        if rel < best_rel:
            best_x, best_rel = x.copy(), rel
        d = r + (rr_new / rr) * d
        rr = rr_new

    converged = best_rel <= tol
    x = best_x
    if precond is not None:
        x = precond.p * x
    report = SolveReport(k, float(best_rel), bool(converged), kappa_before, kappa_after,
                         time.perf_counter() - t0, precond is not None)
    return x, report


def dense_eigvalsh(A) -> np.ndarray:
    a = A.to_dense() if isinstance(A, SparseSymMatrix) else np.asarray(A, dtype=np.float64)
    if a.shape[0] > DENSE_EIG_CAP:
        raise ValueError(f"dense eigensolver capped at n={DENSE_EIG_CAP}, got {a.shape[0]}")
    return np.linalg.eigvalsh(a)


def lanczos_extremes(A: SparseSymMatrix, steps: int = 80, seed: int = 0):
    """Ritz estimates of (lambda_min, lambda_max) with full reorthogonalisation."""
    n = A.n
    m = min(steps, n)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    Q = np.zeros((m, n))
    alpha = np.zeros(m)
    beta = np.zeros(m)
    k_used = m
    for k in range(m):
        Q[k] = q
        w = matvec(A, q)
        alpha[k] = q @ w
        w -= Q[: k + 1].T @ (Q[: k + 1] @ w)
        w -= Q[: k + 1].T @ (Q[: k + 1] @ w)
        bk = np.linalg.norm(w)
        if k + 1 < m:
            if bk < 1e-14 * max(1.0, abs(alpha[k])):
                k_used = k + 1
                break
            beta[k] = bk
            q = w / bk
    T = np.diag(alpha[:k_used]) + np.diag(beta[: k_used - 1], 1) + np.diag(beta[: k_used - 1], -1)
    ev = np.linalg.eigvalsh(T)
    return float(ev[0]), float(ev[-1])


def estimate_condition_number(A: SparseSymMatrix, method: str = "dense-eig", steps: int = 80) -> float:
    """lambda_max / lambda_min of a symmetric positive-definite matrix."""
    if method == "dense-eig":
        ev = dense_eigvalsh(A)
        lo, hi = float(ev[0]), float(ev[-1])
    elif method == "lanczos":
        lo, hi = lanczos_extremes(A, steps=steps)
    else:
        raise ValueError(f"unknown method {method!r}; use 'dense-eig' or 'lanczos'")
    if hi <= 0 or lo <= KAPPA_ZERO_RTOL * hi:
        raise NotPositiveDefiniteError(f"matrix is not positive definite (lambda_min={lo:.3e}, lambda_max={hi:.3e})")
    return hi / lo


def _kappa_auto(A: SparseSymMatrix) -> float:
    return estimate_condition_number(A, "dense-eig" if A.n <= DENSE_EIG_CAP else "lanczos")


def dense_solve_oracle(A, b) -> np.ndarray:
    """Direct solve by LU with partial pivoting (LAPACK)."""
    a = A.to_dense() if isinstance(A, SparseSymMatrix) else np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if a.shape[0] > DENSE_EIG_CAP:
        raise ValueError(f"dense oracle capped at n={DENSE_EIG_CAP}")
    if np.linalg.cond(a) > 1.0 / np.finfo(float).eps:
        raise np.linalg.LinAlgError("matrix is singular to working precision")
    return np.linalg.solve(a, b)


def is_diagonally_dominant(A: SparseSymMatrix, strict: bool = False) -> bool:
    rows = A.row_indices
    on_diag = rows == A.col_indices
    off = np.bincount(rows[~on_diag], weights=np.abs(A.values[~on_diag]), minlength=A.n)
    d = A.diagonal()
    return bool(np.all(d > off) if strict else np.all(d >= off))
