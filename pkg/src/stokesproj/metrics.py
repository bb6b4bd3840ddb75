"""Error norms and convergence diagnostics.

Two complementary evaluation routes exist.  ``fe_norm_diff`` measures
coefficient differences through the assembled (pre-elimination) mass or
stiffness matrix, which is the natural norm for discrete-vs-interpolant
errors.  ``error_vs_exact`` integrates |u_h - u|^2 (or the gradient
analogue) elementwise with the degree-6 rule against an analytic field.

``TransientErrorTracker`` is a per-step observer for time loops; because
the manufactured solution separates as (spatial field) * cos(t), every
vs-exact norm reduces to a quadratic form in the coefficients plus two
precomputed moments, so recording a full ErrorRecord costs a few sparse
products per step.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import assembly, femspace


@dataclass
class ErrorRecord:
    """Diagnostics of one time step (all entries finite and >= 0)."""

    step: int
    t: float
    vel_l2_interp: float
    vel_l2_exact: float
    vel_h1_exact: float
    pres_l2_interp: float
    pres_l2_exact: float
    pres_h1_exact: float
    velocity_energy: float
    divergence_norm: float


def _norm_key(norm):
    key = norm.lower()
    if key in ("l2", "0"):
        return "l2"
    if key in ("h1semi", "h1", "1"):
        return "h1semi"
    raise ValueError(f"unknown norm {norm!r}; use 'l2' or 'h1semi'")


def fe_norm_diff(space, a, b, norm="l2", matrix=None):
    """Norm of the difference of two coefficient vectors on one space:
    sqrt((a-b)^T M (a-b)) for 'l2', with the stiffness matrix for 'h1semi'."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (space.num_dofs,) or b.shape != (space.num_dofs,):
        raise ValueError("coefficient vectors do not match the space")
    if matrix is None:
        key = _norm_key(norm)
        matrix = assembly.assemble_mass(space) if key == "l2" else assembly.assemble_stiffness(space)
    d = a - b
    return float(np.sqrt(max(d @ (matrix @ d), 0.0)))


class SpaceNorms:
    """Cached mass/stiffness matrices of a space for repeated norm queries."""

    def __init__(self, space):
        self.space = space
        self.mass = assembly.assemble_mass(space)
        self.stiffness = assembly.assemble_stiffness(space)

    def l2_diff(self, a, b):
        return fe_norm_diff(self.space, a, b, "l2", self.mass)

    def h1semi_diff(self, a, b):
        return fe_norm_diff(self.space, a, b, "h1semi", self.stiffness)

    def l2(self, a):
        return self.l2_diff(a, np.zeros(self.space.num_dofs))


def error_vs_exact(space, coeffs, exact, norm="l2", quad_degree=6):
    """Quadrature norm of u_h - u against an analytic field.

    For norm 'h1semi', ``exact`` must be the gradient field: shape
    (2, ...) for scalar spaces, (2, 2, ...) with [c][a] = d u_c / d x_a
    for vector spaces.  Time-dependent fields should be bound to a fixed
    t by the caller.
    """
    key = _norm_key(norm)
    coeffs = np.asarray(coeffs, dtype=float)
    rule = femspace.quadrature(quad_degree)
    xq = assembly.quadrature_points_physical(space.mesh, rule)
    vals, grads, det = assembly._physical_gradients(space, rule)
    ns = space.num_scalar_dofs
    acc = 0.0
    for c in range(space.components):
        ce = coeffs[c * ns + space.element_dofs]  # (nt, nb)
        if key == "l2":
            uh = np.einsum("qi,ti->tq", vals, ce)
            ue = np.asarray(exact(xq[..., 0], xq[..., 1]), dtype=float)
            if space.components == 2:
                ue = ue[c]
            diff2 = (uh - ue) ** 2
            acc += np.einsum("q,tq,t->", rule.weights, diff2, det)
        else:
            guh = np.einsum("tqia,ti->tqa", grads, ce)
            ge = np.asarray(exact(xq[..., 0], xq[..., 1]), dtype=float)
            if space.components == 2:
                ge = ge[c]
            diff2 = (guh - np.moveaxis(ge, 0, -1)) ** 2
            acc += np.einsum("q,tqa,t->", rule.weights, diff2, det)
    return float(np.sqrt(max(acc, 0.0)))


def discrete_time_norm(values, dt, selector=None):
    """Discrete time-integrated norm sqrt(sum_j dt * value_j^2).

    ``values`` is a numeric sequence, or a sequence of records combined
    with an attribute name ``selector``.
    """
    if selector is not None:
        values = [getattr(r, selector) for r in values]
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("discrete time norm needs at least one value")
    return float(np.sqrt(dt * np.sum(arr**2)))


def observed_rate(errors, hs):
    """Least-squares slope of log(error) against log(h)."""
    errors = np.asarray(list(errors), dtype=float)
    hs = np.asarray(list(hs), dtype=float)
    if errors.size < 2 or errors.size != hs.size:
        raise ValueError("need at least two matching (error, h) pairs")
    if np.any(errors <= 0.0) or np.any(hs <= 0.0):
        raise ValueError("errors and mesh sizes must be positive")
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def pairwise_rates(errors, hs):
    """Convergence rates between consecutive mesh levels."""
    errors = np.asarray(list(errors), dtype=float)
    hs = np.asarray(list(hs), dtype=float)
    return np.log(errors[1:] / errors[:-1]) / np.log(hs[1:] / hs[:-1])


class TransientErrorTracker:
    """Per-step ErrorRecord observer for runs on a separable manufactured
    case (spatial fields modulated by cos(t)).

    Every norm is evaluated from precomputed moments: for any coefficient
    vector u and bilinear form B,

        |u_h - c w|_B^2 = u^T B u - 2 c u^T (B-load of w) + c^2 |w|_B^2

    with c = cos(t), so one sparse product per form suffices per step.
    The moment route is validated against the direct quadrature route in
    the test suite.
    """

    def __init__(self, v_space, p_space, case):
        self.v_space = v_space
        self.p_space = p_space
        self.case = case
        self.records = []

        self.Mv = assembly.assemble_mass(v_space)
        self.Av = assembly.assemble_stiffness(v_space)
        self.Mp = assembly.assemble_mass(p_space)
        self.Sp = assembly.assemble_stiffness(p_space)

        self.interp_v = femspace.interpolate(v_space, case.steady_velocity)
        self.interp_p = femspace.interpolate(p_space, case.steady_pressure)
        self.m_interp_v = self.Mv @ self.interp_v
        self.interp_v_sq = float(self.interp_v @ self.m_interp_v)
        self.m_interp_p = self.Mp @ self.interp_p
        self.interp_p_sq = float(self.interp_p @ self.m_interp_p)

        zeros_v = np.zeros(v_space.num_dofs)
        zeros_p = np.zeros(p_space.num_dofs)
        self.load_v = assembly.assemble_load(v_space, case.steady_velocity, restrict=False)
        self.norm_v_sq = error_vs_exact(v_space, zeros_v, case.steady_velocity) ** 2
        self.gload_v = assembly.assemble_gradient_load(
            v_space, case.steady_velocity_gradient, restrict=False
        )
        self.norm_gv_sq = (
            error_vs_exact(v_space, zeros_v, case.steady_velocity_gradient, "h1semi") ** 2
        )
        self.load_p = assembly.assemble_load(p_space, case.steady_pressure, restrict=False)
        self.norm_p_sq = error_vs_exact(p_space, zeros_p, case.steady_pressure) ** 2
        self.gload_p = assembly.assemble_gradient_load(
            p_space, case.steady_pressure_gradient, restrict=False
        )
        self.norm_gp_sq = (
            error_vs_exact(p_space, zeros_p, case.steady_pressure_gradient, "h1semi") ** 2
        )

    @staticmethod
    def _moment_norm(quad, cross, const, c):
        return float(np.sqrt(max(quad - 2.0 * c * cross + c * c * const, 0.0)))

    def __call__(self, state, ops):
        v, q = state.velocity, state.pressure
        c = float(np.cos(state.t))
        vmv = float(v @ (self.Mv @ v))
        vel_l2_interp = self._moment_norm(vmv, float(v @ self.m_interp_v), self.interp_v_sq, c)
        vel_l2_exact = self._moment_norm(vmv, float(v @ self.load_v), self.norm_v_sq, c)
        vel_h1_exact = self._moment_norm(
            float(v @ (self.Av @ v)), float(v @ self.gload_v), self.norm_gv_sq, c
        )
        qmq = float(q @ (self.Mp @ q))
        pres_l2_interp = self._moment_norm(qmq, float(q @ self.m_interp_p), self.interp_p_sq, c)
        pres_l2_exact = self._moment_norm(qmq, float(q @ self.load_p), self.norm_p_sq, c)
        pres_h1_exact = self._moment_norm(
            float(q @ (self.Sp @ q)), float(q @ self.gload_p), self.norm_gp_sq, c
        )
        div_norm = float(np.linalg.norm(ops.G.T @ self.v_space.restrict(v)))
        self.records.append(
            ErrorRecord(
                step=state.step,
                t=state.t,
                vel_l2_interp=vel_l2_interp,
                vel_l2_exact=vel_l2_exact,
                vel_h1_exact=vel_h1_exact,
                pres_l2_interp=pres_l2_interp,
                pres_l2_exact=pres_l2_exact,
                pres_h1_exact=pres_h1_exact,
                velocity_energy=vmv,
                divergence_norm=div_norm,
            )
        )


def record_fields():
    return [f.name for f in fields(ErrorRecord)]
