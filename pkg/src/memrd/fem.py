"""P1 surface finite elements: mass/stiffness assembly, integration, solvers.

All operators are assembled over the triangles of a :class:`~memrd.mesh.SurfaceMesh`
using the standard nodal basis. Within each triangle the basis functions are
linear; tangential gradients live in the triangle plane. The weighted mass
matrix integrates (linear weight) x (linear) x (linear) exactly, no lumping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.io import mmwrite
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, bicgstab, eigsh

from .mesh import DEGENERATE_AREA, DegenerateTriangleError, SurfaceMesh

__all__ = [
    "FemOperators",
    "P1Assembler",
    "LinearSolveError",
    "EigenSolveError",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "integrate",
    "jacobi_preconditioner",
    "solve_nonsymmetric",
    "solve_nonsymmetric_with_stats",
    "laplace_beltrami_eigs",
    "write_matrix_market",
]

# Dense generalized eigensolver is cheaper and more robust below this size.
DENSE_EIG_LIMIT = 2000


class LinearSolveError(RuntimeError):
    """Iterative solve failed; carries the final unpreconditioned residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class EigenSolveError(RuntimeError):
    """The eigenvalue iteration did not converge."""


class P1Assembler:
    """Per-mesh assembly engine with a fixed canonical sparsity pattern.

    The mass, stiffness and every weighted mass matrix of one mesh share the
    same CSR pattern (vertex pairs joined by a triangle). The weighted mass
    data depends *linearly* on the nodal weight vector, so it is precomputed
    as a sparse map ``data = G @ w``; reassembling per time step is then a
    single sparse matvec.
    """

    def __init__(self, mesh: SurfaceMesh):
        self.mesh = mesh
        n = mesh.n_vertices
        tri = mesh.triangles
        areas = mesh.triangle_areas

        # coo layout: per triangle the 9 entries (a, b) in row-major local order
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()

        pattern = sparse.coo_matrix(
            (np.ones(rows.size), (rows, cols)), shape=(n, n)
        ).tocsr()
        pattern.sort_indices()
        self.n = n
        self.indptr = pattern.indptr
        self.indices = pattern.indices
        self.nnz = pattern.nnz

        csr_rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(self.indptr))
        csr_keys = csr_rows * n + self.indices
        self._entry_pos = np.searchsorted(csr_keys, rows * n + cols)

        # Exact integrals of psi_a * psi_b * psi_c over a triangle are
        # area/60 * (6 if a=b=c, 2 if exactly two coincide, 1 if all distinct).
        coeff = np.empty((3, 3, 3))
        for a in range(3):
            for b in range(3):
                for c in range(3):
                    if a == b:
                        coeff[a, b, c] = 6.0 if c == a else 2.0
                    else:
                        coeff[a, b, c] = 2.0 if c in (a, b) else 1.0
        coeff /= 60.0

        g_vals = (areas[:, None, None, None] * coeff[None, :, :, :]).ravel()
        g_rows = np.repeat(self._entry_pos, 3)
        g_cols = np.broadcast_to(tri[:, None, None, :], (len(tri), 3, 3, 3)).ravel()
        self._weight_map = sparse.coo_matrix(
            (g_vals, (g_rows, g_cols)), shape=(self.nnz, n)
        ).tocsr()

        self._mass_data = self._weight_map @ np.ones(n)
        self._stiffness_data = self._assemble_stiffness_data()

    def _assemble_stiffness_data(self) -> np.ndarray:
        mesh = self.mesh
        v, tri = mesh.vertices, mesh.triangles
        areas = mesh.triangle_areas
        if np.any(areas <= DEGENERATE_AREA):
            idx = int(np.argmin(areas))
            raise DegenerateTriangleError(
                f"triangle {idx} has area {areas[idx]:.3e}; stiffness undefined"
            )
        # Edge opposite local vertex a: e_a = p_{a+2} - p_{a+1} (cyclic).
        p = v[tri]  # (m, 3, 3)
        e = np.empty_like(p)
        e[:, 0] = p[:, 2] - p[:, 1]
        e[:, 1] = p[:, 0] - p[:, 2]
        e[:, 2] = p[:, 1] - p[:, 0]
        local = np.einsum("tix,tjx->tij", e, e) / (4.0 * areas)[:, None, None]
        data = np.zeros(self.nnz)
        np.add.at(data, self._entry_pos, local.ravel())
        return data

    def _csr(self, data: np.ndarray) -> sparse.csr_matrix:
        return sparse.csr_matrix(
            (data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n)
        )

    def mass(self) -> sparse.csr_matrix:
        return self._csr(self._mass_data.copy())

    def stiffness(self) -> sparse.csr_matrix:
        return self._csr(self._stiffness_data.copy())

    def weighted_mass_data(self, w: np.ndarray) -> np.ndarray:
        """CSR data array of the weighted mass matrix for nodal weights ``w``."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.n,):
            raise ValueError(f"weight vector has length {w.shape}, expected ({self.n},)")
        return self._weight_map @ w

    def weighted_mass(self, w: np.ndarray) -> sparse.csr_matrix:
        return self._csr(self.weighted_mass_data(w))


@dataclass(frozen=True)
class FemOperators:
    """Mass and stiffness matrices of one mesh (shared CSR pattern)."""

    mass: sparse.csr_matrix
    stiffness: sparse.csr_matrix

    @classmethod
    def from_mesh(cls, mesh: SurfaceMesh) -> "FemOperators":
        asm = P1Assembler(mesh)
        return cls(mass=asm.mass(), stiffness=asm.stiffness())

    @property
    def n(self) -> int:
        return self.mass.shape[0]


def assemble_mass(mesh: SurfaceMesh) -> sparse.csr_matrix:
    """Mass matrix M with element blocks area/12 * [[2,1,1],[1,2,1],[1,1,2]]."""
    return P1Assembler(mesh).mass()


def assemble_stiffness(mesh: SurfaceMesh) -> sparse.csr_matrix:
    """Stiffness matrix A from tangential P1 gradients; A @ 1 = 0."""
    return P1Assembler(mesh).stiffness()


def assemble_weighted_mass(mesh: SurfaceMesh, w) -> sparse.csr_matrix:
    """Matrix of (w psi_i, psi_j) with w interpolated linearly per triangle."""
    return P1Assembler(mesh).weighted_mass(np.asarray(w, dtype=np.float64))


def integrate(M: sparse.spmatrix, field) -> float:
    """Integral of a nodal field over the surface: 1^T M field."""
    field = np.asarray(field, dtype=np.float64)
    if field.shape != (M.shape[1],):
        raise ValueError(
            f"field has shape {field.shape}, expected ({M.shape[1]},)"
        )
    return float((M @ field).sum())


def jacobi_preconditioner(system) -> LinearOperator:
    """Diagonal (Jacobi) preconditioner; zero diagonal entries pass through."""
    n = system.shape[0]
    diag = system.diagonal().astype(np.float64, copy=True)
    diag[np.abs(diag) < 1e-300] = 1.0
    inv_diag = 1.0 / diag
    return LinearOperator((n, n), matvec=lambda x: inv_diag * x)


def solve_nonsymmetric_with_stats(system, rhs, tol: float = 1e-10,
                                  max_iter: int | None = None, x0=None,
                                  precond=None):
    """Like :func:`solve_nonsymmetric` but also returns the iteration count."""
    if system.shape[0] != system.shape[1]:
        raise ValueError(f"system must be square, got {system.shape}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (system.shape[0],):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({system.shape[0]},)")

    n = system.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros(n), 0
    if precond is None:
        precond = jacobi_preconditioner(system)

    iterations = [0]

    def count(_xk):
        iterations[0] += 1

    x = x0
    residual = np.inf
    for rtol in (tol, 0.1 * tol):
        x, info = bicgstab(system, rhs, x0=x, rtol=rtol, atol=0.0,
                           maxiter=max_iter, M=precond, callback=count)
        residual = float(np.linalg.norm(rhs - system @ x))
        if residual <= tol * bnorm:
            return x, iterations[0]
        if info < 0:
            break
    raise LinearSolveError(
        f"BiCGStab did not reach tol={tol:g} within {max_iter} iterations "
        f"(relative residual {residual / bnorm:.3e})",
        residual=residual,
    )


def solve_nonsymmetric(system, rhs, tol: float = 1e-10, max_iter: int | None = None,
                       x0=None, precond=None) -> np.ndarray:
    """Solve a sparse nonsymmetric system with preconditioned BiCGStab.

    Jacobi preconditioning by default; the contract is on the unpreconditioned
    system: on return, ``||rhs - system @ x|| <= tol * ||rhs||``. Raises
    :class:`LinearSolveError` (carrying the final residual) on breakdown or
    when max_iter is exhausted.
    """
    x, _ = solve_nonsymmetric_with_stats(system, rhs, tol=tol, max_iter=max_iter,
                                         x0=x0, precond=precond)
    return x


def laplace_beltrami_eigs(M, A, k: int):
    """k smallest eigenpairs of the generalized problem A w = lambda M w.

    Returns eigenvalues sorted ascending (lambda_0 ~ 0 on a closed surface)
    and M-orthonormal eigenvectors as columns.
    """
    n = M.shape[0]
    if k < 1 or k >= n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    if n <= DENSE_EIG_LIMIT:
        vals, vecs = eigh(
            np.asarray(A.todense()), np.asarray(M.todense()),
            subset_by_index=(0, k - 1),
        )
    else:
        try:
            vals, vecs = eigsh(A.tocsc(), k=k, M=M.tocsc(), sigma=-0.1, which="LM")
        except ArpackNoConvergence as exc:
            raise EigenSolveError(f"eigenvalue iteration did not converge: {exc}") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    # Defensive renormalization; distinct eigenvalues are M-orthogonal already.
    norms = np.sqrt(np.einsum("ij,ij->j", vecs, M @ vecs))
    vecs = vecs / norms
    return vals, vecs


def write_matrix_market(path, matrix) -> None:
    """Dump a sparse matrix in MatrixMarket coordinate format (debug aid)."""
    mmwrite(path, sparse.coo_matrix(matrix))
