"""Stabilized steady Stokes solver.

Find (s_h, z_h) in V_h x Q_h with

    nu (grad s_h, grad chi) + (grad z_h, chi) = (ghat, chi)   for all chi,
    (div s_h, psi) = -delta (grad z_h, grad psi)              for all psi,

which is well posed for equal-order pairs whenever delta > 0.  The
discrete system is the symmetric indefinite block form solved by
``sparsela.saddle_solve``; the returned pressure has zero discrete mean.

Besides being an experiment target in its own right, this solve is the
recommended initializer of the transient schemes (with data g - v_t).
"""

from dataclasses import dataclass

import numpy as np

from . import assembly, femspace, sparsela


def choose_delta(h, nu, rho):
    """Stabilization parameter from the dimensionless ratio rho = h/sqrt(nu delta):
    delta = h^2 / (nu rho^2)."""
    if h <= 0.0 or nu <= 0.0 or rho <= 0.0:
        raise ValueError("h, nu and rho must all be positive")
    return h * h / (nu * rho * rho)


@dataclass
class StokesSolution:
    """Velocity/pressure coefficients of one stabilized steady solve.

    ``velocity`` lives on the full velocity space (zeros at Dirichlet
    DOFs); ``pressure`` has zero discrete mean.
    """

    velocity: np.ndarray
    pressure: np.ndarray
    v_space: femspace.FeSpace
    p_space: femspace.FeSpace
    nu: float
    delta: float
    report: sparsela.SolveReport


class SteadyOperators:
    """Reusable assembled operators of the steady system on one space
    pair; lets parameter sweeps share the assembly across delta values."""

    def __init__(self, v_space, p_space):
        self.v_space = v_space
        self.p_space = p_space
        self.a_free = assembly.restrict_matrix(
            v_space, assembly.assemble_stiffness(v_space)
        )
        self.g_mat = assembly.assemble_pressure_gradient(v_space, p_space)
        self.s_mat = assembly.assemble_pressure_stiffness(p_space)
        self.mean_weights = assembly.basis_integrals(p_space)

    def load(self, ghat):
        return assembly.assemble_load(self.v_space, ghat, restrict=True)

    def solve(self, nu, delta, rhs_v, tol=1e-10):
        if nu <= 0.0:
            raise ValueError("viscosity must be positive")
        if delta <= 0.0:
            raise ValueError("stabilization parameter delta must be positive")
        s_free, z, report = sparsela.saddle_solve(
            (nu * self.a_free).tocsr(),
            self.g_mat,
            self.s_mat,
            delta,
            rhs_v,
            tol=tol,
            mean_weights=self.mean_weights,
        )
        return StokesSolution(
            velocity=self.v_space.extend(s_free),
            pressure=z,
            v_space=self.v_space,
            p_space=self.p_space,
            nu=nu,
            delta=delta,
            report=report,
        )


def solve_stabilized_stokes(mesh, degree, nu, delta, ghat, tol=1e-10,
                            v_space=None, p_space=None):
    """Solve the stabilized steady Stokes system for analytic data ``ghat``.

    Parameters
    ----------
    mesh, degree : discretization (equal-order velocity/pressure)
    nu, delta : viscosity and stabilization parameter (both positive)
    ghat : vector field callable, the steady momentum data
    tol : relative block-residual tolerance of the solve
    v_space, p_space : optional prebuilt spaces (must match mesh/degree)
    """
    if v_space is None:
        v_space = femspace.build_space(mesh, degree, components=2)
    if p_space is None:
        p_space = femspace.build_space(mesh, degree, components=1)
    ops = SteadyOperators(v_space, p_space)
    return ops.solve(nu, delta, ops.load(ghat), tol=tol)
