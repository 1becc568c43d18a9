"""Direct sparse LU solve for complex-symmetric indefinite systems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10
PIVOT_TOL = 1e-14
PIVOT_THRESHOLD = 0.1
ORDERING = "MMD_AT_PLUS_A"


class SingularMatrixError(ArithmeticError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Factorization:
    lu: spla.SuperLU
    matrix: sp.csc_matrix

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def solve(self, rhs, refine_steps: int = 3) -> np.ndarray:
        b = np.asarray(rhs, dtype=complex)
        if b.shape != (self.dimension,):
            raise ValueError(f"rhs has shape {b.shape}, expected ({self.dimension},)")
        nb = np.linalg.norm(b)
        if nb == 0:
            return np.zeros_like(b)
        x = self.lu.solve(b)
        for _ in range(refine_steps):
            r = b - self.matrix @ x
            if np.linalg.norm(r) <= RESIDUAL_TOL * nb:
                break
            x = x + self.lu.solve(r)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("solution is not finite")
        res = np.linalg.norm(b - self.matrix @ x) / nb
        if res > RESIDUAL_TOL:
            raise SolverError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
        return x


def factorize(matrix) -> Factorization:
    A = sp.csc_matrix(matrix, dtype=complex)
    n, m = A.shape
    if n != m:
        raise ValueError(f"matrix is not square: {A.shape}")
    try:
        # symmetric mode keeps the minimum-degree ordering of A + A^T intact
        lu = spla.splu(
            A, permc_spec=ORDERING, diag_pivot_thresh=PIVOT_THRESHOLD, options={"SymmetricMode": True}
        )
    except RuntimeError as exc:
        raise SingularMatrixError(f"matrix is singular: {exc}") from exc
    d = np.abs(lu.U.diagonal())
    if n and (d.min() <= PIVOT_TOL * d.max()):
        raise SingularMatrixError(f"pivot ratio {d.min() / d.max():.2e} below {PIVOT_TOL:g}")
    return Factorization(lu, A)


def solve(matrix, rhs) -> np.ndarray:
    b = np.asarray(rhs)
    if matrix.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {matrix.shape}, rhs {b.shape}")
    if not np.any(b):
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"matrix is not square: {matrix.shape}")
        return np.zeros(b.shape, dtype=complex)
    return factorize(matrix).solve(b)
