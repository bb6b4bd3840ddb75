"""Manufactured analytic solutions and consistent forcing terms.

The standard test case pairs a polynomial-trigonometric solenoidal
velocity with a zero-mean trigonometric pressure on the unit square:

    s1(x, y) = x^2 (1-x)^2 sin(2 pi y)
    s2(x, y) = -(2/pi) x (1-x) (1-2x) sin^2(pi y)
    z(x, y)  = sin(x) cos(y) + (cos(1) - 1) sin(1)

s2 is the unique companion of s1 with s2(x, 0) = 0 satisfying
d_y s2 = -d_x s1, so div s = 0 identically and s vanishes on the whole
boundary.  A historical variant of the second component,
-2 x (1 + 3x + 2x^2) sin^2(pi y), is not solenoidal; it is kept behind
``divergence_free=False`` purely for comparison runs and must not be
used for convergence measurements.

The transient case modulates both fields by cos(t):

    v(x, y, t) = s(x, y) cos(t),   q(x, y, t) = z(x, y) cos(t)

so the momentum forcing g = v_t - nu lap(v) + grad(q) splits into two
separable terms, cos(t) * (-nu lap(s) + grad z) - sin(t) * s, which the
time steppers exploit to precompute load vectors.

All evaluators broadcast over numpy point arrays; vector fields return
arrays with a leading component axis.
"""

from dataclasses import dataclass

import numpy as np

_PI = np.pi
_Z_CONST = (np.cos(1.0) - 1.0) * np.sin(1.0)


def _poly(x):
    # p(x) = x (1-x)(1-2x) = x - 3x^2 + 2x^3 and derivatives
    return x * (1.0 - x) * (1.0 - 2.0 * x)


def _poly_d(x):
    return 1.0 - 6.0 * x + 6.0 * x * x


def _poly_dd(x):
    return 12.0 * x - 6.0


def _poly_legacy(x):
    # the non-solenoidal variant's polynomial factor x (1 + 3x + 2x^2)
    return x * (1.0 + 3.0 * x + 2.0 * x * x)


def _poly_legacy_d(x):
    return 1.0 + 6.0 * x + 6.0 * x * x


def _poly_legacy_dd(x):
    return 12.0 * x + 6.0


@dataclass(frozen=True)
class ManufacturedCase:
    """Analytic Stokes solution with every derivative the schemes need.

    ``nu`` is bound into the forcing terms.  ``divergence_free`` selects
    the solenoidal second velocity component (default) or the legacy
    non-solenoidal variant.
    """

    nu: float
    divergence_free: bool = True

    # spatial velocity s ---------------------------------------------------
    def steady_velocity(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s1 = x * x * (1.0 - x) ** 2 * np.sin(2.0 * _PI * y)
        if self.divergence_free:
            s2 = -(2.0 / _PI) * _poly(x) * np.sin(_PI * y) ** 2
        else:
            s2 = -2.0 * _poly_legacy(x) * np.sin(_PI * y) ** 2
        return np.stack([s1, s2])

    def steady_velocity_gradient(self, x, y):
        """d s_c / d x_a as an array of shape (2, 2, ...)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s2py, c2py = np.sin(2.0 * _PI * y), np.cos(2.0 * _PI * y)
        s1x = 2.0 * _poly(x) * s2py
        s1y = 2.0 * _PI * x * x * (1.0 - x) ** 2 * c2py
        spy2 = np.sin(_PI * y) ** 2
        if self.divergence_free:
            s2x = -(2.0 / _PI) * _poly_d(x) * spy2
            s2y = -2.0 * _poly(x) * s2py
        else:
            s2x = -2.0 * _poly_legacy_d(x) * spy2
            s2y = -2.0 * _PI * _poly_legacy(x) * s2py
        return np.stack([np.stack([s1x, s1y]), np.stack([s2x, s2y])])

    def steady_velocity_laplacian(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s2py = np.sin(2.0 * _PI * y)
        px2 = x * x * (1.0 - x) ** 2
        lap1 = (2.0 * _poly_d(x) - 4.0 * _PI * _PI * px2) * s2py
        spy2 = np.sin(_PI * y) ** 2
        c2py = np.cos(2.0 * _PI * y)
        if self.divergence_free:
            lap2 = -(2.0 / _PI) * _poly_dd(x) * spy2 - 4.0 * _PI * _poly(x) * c2py
        else:
            lap2 = (
                -2.0 * _poly_legacy_dd(x) * spy2
                - 4.0 * _PI * _PI * _poly_legacy(x) * c2py
            )
        return np.stack([lap1, lap2])

    def steady_divergence(self, x, y):
        g = self.steady_velocity_gradient(x, y)
        return g[0, 0] + g[1, 1]

    # spatial pressure z ---------------------------------------------------
    def steady_pressure(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.sin(x) * np.cos(y) + _Z_CONST

    def steady_pressure_gradient(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.stack([np.cos(x) * np.cos(y), -np.sin(x) * np.sin(y)])

    def steady_forcing(self, x, y):
        """Data of the steady problem: -nu lap(s) + grad(z)."""
        return (
            -self.nu * self.steady_velocity_laplacian(x, y)
            + self.steady_pressure_gradient(x, y)
        )

    # transient fields v = s cos(t), q = z cos(t) --------------------------
    def velocity(self, x, y, t):
        return np.cos(t) * self.steady_velocity(x, y)

    def velocity_t(self, x, y, t):
        return -np.sin(t) * self.steady_velocity(x, y)

    def velocity_gradient(self, x, y, t):
        return np.cos(t) * self.steady_velocity_gradient(x, y)

    def pressure(self, x, y, t):
        return np.cos(t) * self.steady_pressure(x, y)

    def pressure_gradient(self, x, y, t):
        return np.cos(t) * self.steady_pressure_gradient(x, y)

    def forcing(self, x, y, t):
        """Momentum forcing g = v_t - nu lap(v) + grad(q)."""
        return np.cos(t) * self.steady_forcing(x, y) - np.sin(t) * self.steady_velocity(x, y)

    def forcing_terms(self):
        """The forcing as separable (time coefficient, spatial field) pairs."""
        return [
            (np.cos, self.steady_forcing),
            (lambda t: -np.sin(t), self.steady_velocity),
        ]

    def steady_data(self, t):
        """The steady-problem data at time t: g(t) - v_t(t), bound as a
        spatial field (used by the stabilized-Stokes initialization)."""

        def field(x, y, _c=np.cos(t)):
            return _c * self.steady_forcing(x, y)

        return field


def berrone_case(nu, divergence_free=True):
    """The manufactured case used by all experiments."""
    if nu <= 0.0:
        raise ValueError("viscosity must be positive")
    return ManufacturedCase(nu=float(nu), divergence_free=divergence_free)


def eval_forcing_transient(case, x, y, t):
    """Momentum forcing of the transient problem at (x, y, t)."""
    return case.forcing(x, y, t)


def eval_vt(case, x, y, t):
    """Time derivative of the exact velocity at (x, y, t)."""
    return case.velocity_t(x, y, t)
