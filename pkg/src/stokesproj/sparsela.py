"""Sparse linear algebra for the schemes.

Matrices are scipy CSR arrays in canonical form (sorted, duplicate-free
column indices).  Three solver entry points cover everything the
schemes need:

- ``cg_solve``: conjugate gradients for SPD systems, optionally with the
  constant vector deflated out (the pressure stiffness is singular with
  exactly that nullspace);
- ``saddle_solve``: a direct solve of the symmetric indefinite steady
  Stokes block system on the zero-mean pressure subspace;
- ``FactorizedSpd`` / ``PinnedSingularSolver``: cached LU factorizations
  reused across the many identical solves of a time loop.

All solvers are deterministic: identical inputs give bit-identical
outputs.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla


class LinearSolverError(RuntimeError):
    """Raised when a solver cannot meet its tolerance contract."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool


def is_canonical_csr(a):
    """True when column indices are sorted and unique within each row."""
    a = a.tocsr()
    for r in range(a.shape[0]):
        cols = a.indices[a.indptr[r] : a.indptr[r + 1]]
        if cols.size > 1 and np.any(np.diff(cols) <= 0):
            return False
    return True


def spmv(a, x):
    """Sparse matrix-vector product with shape checking."""
    x = np.asarray(x)
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {a.shape} with vector {x.shape}")
    return a @ x


def _deflate(v):
    v -= v.mean()
    return v


def cg_solve(a, b, tol=1e-10, project_out_constants=False, max_iterations=None,
             diag_precondition=False):
    """Conjugate gradients for a symmetric (semi)definite system.

    With ``project_out_constants`` the constant vector is removed from
    right-hand side, iterates and solution, which makes the singular
    pressure stiffness solvable; ``b`` must then be orthogonal to
    constants to within 1e-10 * ||b||.  Convergence is declared at
    relative residual ``tol``; non-convergence raises LinearSolverError
    carrying the report.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix {a.shape} with vector {b.shape}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    if project_out_constants and abs(b.sum()) / np.sqrt(n) > 1e-10 * bnorm:
        raise LinearSolverError(
            "right-hand side is not orthogonal to the constant nullspace"
        )
    if max_iterations is None:
        max_iterations = max(200, 20 * n)
    inv_diag = None
    if diag_precondition:
        d = a.diagonal()
        if np.any(d <= 0):
            raise LinearSolverError("diagonal preconditioner needs positive diagonal")
        inv_diag = 1.0 / d

    x = np.zeros(n)
    r = b.copy()
    if project_out_constants:
        _deflate(r)
    z = inv_diag * r if inv_diag is not None else r.copy()
    if project_out_constants and inv_diag is not None:
        _deflate(z)
    p = z.copy()
    rz = float(r @ z)
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        ap = a @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            raise LinearSolverError(
                f"CG breakdown at iteration {iterations}: non-positive curvature",
                SolveReport(iterations, np.linalg.norm(r) / bnorm, False),
            )
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        if project_out_constants:
            _deflate(r)
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            break
        z = inv_diag * r if inv_diag is not None else r
        if project_out_constants and inv_diag is not None:
            z = _deflate(z.copy())
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if project_out_constants:
        _deflate(x)
    true_res = b - a @ x
    if project_out_constants:
        _deflate(true_res)
    rel = float(np.linalg.norm(true_res) / bnorm)
    report = SolveReport(iterations, rel, rel <= tol)
    if not report.converged:
        raise LinearSolverError(
            f"CG failed to reach tol={tol} in {iterations} iterations "
            f"(residual {rel:.3e})",
            report,
        )
    return x, report


def _factorize_spd(a_csc):
    """LU of an SPD matrix, preferring the symmetric SuperLU mode (much
    sparser factors); falls back to default pivoting if a verification
    solve is off."""
    try:
        lu = spla.splu(
            a_csc,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
        probe = np.ones(a_csc.shape[0])
        x = lu.solve(probe)
        if np.linalg.norm(a_csc @ x - probe) <= 1e-8 * np.linalg.norm(probe):
            return lu
    except RuntimeError:
        pass
    return spla.splu(a_csc)


class FactorizedSpd:
    """Cached sparse LU of a fixed SPD matrix; ``solve`` accepts one or
    several right-hand sides (columns)."""

    def __init__(self, a):
        self.shape = a.shape
        self._lu = _factorize_spd(sparse.csc_matrix(a))

    def solve(self, b):
        return self._lu.solve(np.asarray(b, dtype=float))


class PinnedSingularSolver:
    """Direct solver for S x = b where S is symmetric PSD with the
    constant vector spanning its nullspace.

    DOF 0 is pinned to zero (its row and column dropped, which loses no
    information because the equations sum to zero), the reduced SPD
    system is factorized once, and solutions are returned with the
    pinned entry reinserted.  Callers fix the additive constant
    afterwards (discrete zero mean).
    """

    def __init__(self, s):
        n = s.shape[0]
        keep = np.arange(1, n)
        self.n = n
        self._lu = _factorize_spd(sparse.csc_matrix(s.tocsr()[keep][:, keep]))

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        x = np.zeros(self.n)
        x[1:] = self._lu.solve(b[1:])
        return x


def project_mean(x, weights=None):
    """Remove the weighted mean: x - (w.x)/(w.1).  Uniform weights by default."""
    if weights is None:
        return x - x.mean()
    return x - (weights @ x) / weights.sum()


def saddle_solve(a_block, g, s, delta, rhs_v, tol=1e-10, mean_weights=None):
    """Solve the symmetric indefinite block system

        [ a_block   g     ] [x]   [rhs_v]
        [ g^T    -delta*s ] [z] = [  0  ]

    on the zero-mean pressure subspace.  ``a_block`` is the (already
    viscosity-scaled) velocity block on free DOFs.  The pressure is pinned
    at one DOF for the factorization and afterwards projected to zero
    weighted mean (``mean_weights``; uniform if omitted).  The contract is
    the block residual: both residual norms must not exceed
    tol * ||rhs_v||, else LinearSolverError is raised.  One step of
    iterative refinement is applied if needed.
    """
    if delta <= 0.0:
        raise ValueError("saddle solve requires delta > 0 for equal-order pairs")
    nv = a_block.shape[0]
    npres = s.shape[0]
    rhs_v = np.asarray(rhs_v, dtype=float)
    if rhs_v.shape != (nv,):
        raise ValueError(f"rhs has shape {rhs_v.shape}, expected ({nv},)")
    if np.linalg.norm(rhs_v) == 0.0:
        return np.zeros(nv), np.zeros(npres), SolveReport(0, 0.0, True)

    k = sparse.bmat([[a_block, g], [g.T, -delta * s]], format="csr")
    keep = np.concatenate([np.arange(nv), nv + np.arange(1, npres)])
    lu = spla.splu(sparse.csc_matrix(k[keep][:, keep]))
    rhs = np.concatenate([rhs_v, np.zeros(npres)])

    sol = np.zeros(nv + npres)
    sol[keep] = lu.solve(rhs[keep])

    scale = np.linalg.norm(rhs_v)

    def residuals(vec):
        x, z = vec[:nv], vec[nv:]
        r1 = a_block @ x + g @ z - rhs_v
        r2 = g.T @ x - delta * (s @ z)
        return max(np.linalg.norm(r1), np.linalg.norm(r2)) / scale

    rel = residuals(sol)
    refinements = 0
    while rel > tol and refinements < 2:
        r_full = rhs - k @ sol
        corr = np.zeros(nv + npres)
        corr[keep] = lu.solve(r_full[keep])
        sol += corr
        rel = residuals(sol)
        refinements += 1

    x = sol[:nv]
    z = project_mean(sol[nv:], mean_weights)
    report = SolveReport(refinements, float(rel), rel <= tol)
    if not report.converged:
        raise LinearSolverError(
            f"saddle solve residual {rel:.3e} exceeds tol={tol}", report
        )
    return x, z, report
