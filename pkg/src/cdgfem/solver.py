"""Sparse linear solvers for the assembled (nonsymmetric) systems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SolverConfig",
    "SolveReport",
    "SolverError",
    "SingularMatrixError",
    "NonConvergenceError",
    "ilu0",
    "solve",
]

DIRECT_LIMIT = 20000


class SolverError(RuntimeError):
    pass


class SingularMatrixError(SolverError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, message: str, residual: float, x: np.ndarray | None = None):
        super().__init__(message)
        self.residual = residual
        self.x = x


@dataclass
class SolverConfig:
    """``method`` is ``"auto"``, ``"direct"`` or ``"gmres"``; ``"auto"`` picks
    sparse LU up to ``DIRECT_LIMIT`` unknowns."""

    method: str = "auto"
    tol: float = 1e-12
    max_iter: int = 2000
    restart: int = 60
    preconditioner: str = "ilu0"
    refinement_steps: int = 3

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.method not in ("auto", "direct", "gmres"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.preconditioner not in ("none", "diagonal", "ilu0"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveReport:
    method: str
    residual: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {"method": self.method, "relative_residual": self.residual,
                "iterations": self.iterations, "converged": self.converged}


def ilu0(A: sp.spmatrix) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Incomplete LU with zero fill-in.

    Returns a unit lower triangular ``L`` and upper triangular ``U`` whose
    product matches ``A`` on its sparsity pattern.
    """
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.sort_indices()
    n = A.shape[0]
    indptr, indices, data = A.indptr, A.indices, A.data
    diag = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        row = indices[indptr[i]:indptr[i + 1]]
        pos = np.searchsorted(row, i)
        if pos < row.size and row[pos] == i:
            diag[i] = indptr[i] + pos
    if np.any(diag < 0):
        raise SingularMatrixError("ILU(0) needs a structurally nonzero diagonal")

    for i in range(1, n):
        start, end = indptr[i], indptr[i + 1]
        cols = indices[start:end]
        where = {int(c): start + p for p, c in enumerate(cols)}
        for p in range(start, diag[i]):
            k = indices[p]
            pivot = data[diag[k]]
            if pivot == 0.0:
                raise SingularMatrixError(f"zero pivot in ILU(0) at row {k}")
            data[p] /= pivot
            lik = data[p]
            for r in range(diag[k] + 1, indptr[k + 1]):
                t = where.get(int(indices[r]))
                if t is not None:
                    data[t] -= lik * data[r]
    if np.any(data[diag] == 0.0):
        raise SingularMatrixError("zero pivot in ILU(0)")
    L = sp.tril(A, k=-1, format="csr") + sp.identity(n, format="csr")
    U = sp.triu(A, format="csr")
    return L.tocsr(), U.tocsr()


def _preconditioner(A: sp.csr_matrix, kind: str):
    n = A.shape[0]
    if kind == "none":
        return None
    if kind == "diagonal":
        d = A.diagonal()
        if np.any(d == 0):
            raise SingularMatrixError("zero diagonal entry; Jacobi preconditioner undefined")
        inv = 1.0 / d
        return spla.LinearOperator((n, n), matvec=lambda v: inv * np.ravel(v), dtype=float)
    L, U = ilu0(A)
    Lc, Uc = L.tocsr(), U.tocsr()

    def apply(v):
        y = spla.spsolve_triangular(Lc, np.ravel(v), lower=True, unit_diagonal=True)
        return spla.spsolve_triangular(Uc, y, lower=False)

    return spla.LinearOperator((n, n), matvec=apply, dtype=float)


def _relres(A, x, b, bnorm):
    return float(np.linalg.norm(A @ x - b) / bnorm)


def solve(system_or_matrix, rhs: np.ndarray | None = None,
          config: SolverConfig | None = None) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = rhs``.

    Accepts either a :class:`~cdgfem.assembly.SparseSystem` or a matrix plus
    right-hand side.  Raises :class:`NonConvergenceError` if the relative
    residual cannot be brought below ``config.tol``.
    """
    config = config or SolverConfig()
    if rhs is None:
        A, b = system_or_matrix.matrix, system_or_matrix.rhs
    else:
        A, b = system_or_matrix, rhs
    A = sp.csr_matrix(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.size:
        raise ValueError(f"shape mismatch: matrix {A.shape}, rhs {b.shape}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport("trivial", 0.0, 0, True)

    method = config.method
    if method == "auto":
        method = "direct" if A.shape[0] <= DIRECT_LIMIT else "gmres"

    if method == "direct":
        try:
            lu = spla.splu(A.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        x = lu.solve(b)
        res = _relres(A, x, b, bnorm)
        steps = 0
        while res > config.tol and steps < config.refinement_steps:
            x = x + lu.solve(b - A @ x)
            res = _relres(A, x, b, bnorm)
            steps += 1
        if not np.isfinite(res) or res > config.tol:
            raise NonConvergenceError(f"direct solve residual {res:.3e} above tolerance", res, x)
        return x, SolveReport("direct", res, steps, True)

    M = _preconditioner(A, config.preconditioner)
    x = np.zeros_like(b)
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    cycles = max(1, -(-config.max_iter // config.restart))
    rtol = config.tol
    res = 1.0
    while cycles > 0:
        chunk = min(cycles, 20)
        x, info = spla.gmres(A, b, x0=x, rtol=rtol, atol=0.0, restart=config.restart,
                             maxiter=chunk, M=M, callback=count, callback_type="pr_norm")
        cycles -= chunk
        res = _relres(A, x, b, bnorm)
        if res <= config.tol:
            return x, SolveReport("gmres", res, iters, True)
        if info == 0:
            # scipy stops on the preconditioned residual; tighten until the true one passes
            rtol *= max(config.tol / res, 1e-4)
    raise NonConvergenceError(f"GMRES stalled at relative residual {res:.3e}", res, x)
