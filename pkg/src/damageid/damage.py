"""Damage evolution ``d' = (1 - d)^(-alpha) y`` and damage-field bounds.

The integral form ``d(t) = d0 + int_0^t (1 - d)^(-alpha) y ds`` is collocated
with the trapezoidal rule on a uniform grid; each step is a scalar implicit
equation per node, solved by Newton's method in :mod:`damageid.kernels`.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, DomainError, NumericalError

BOUND_TOL = 1e-12
NEWTON_TOL = 1e-13
NEWTON_MAX = 50


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_m = m * T / M`` for ``m = 0..M``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigurationError("horizon must be positive", "time.horizon")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError("need at least one time step", "time.steps")

    @property
    def dt(self):
        return self.horizon / self.steps

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.dt

    @property
    def trapezoid_weights(self):
        w = np.full(self.steps + 1, self.dt)
        w[[0, -1]] *= 0.5
        return w


@dataclass
class DamageField:
    """Nodal damage on the space-time grid, ``values[m, j] = d(t_m, x_j)``."""

    grid: TimeGrid
    values: np.ndarray
    omega0: float = 0.0
    omega1: float = 0.5

    @property
    def initial(self):
        return self.values[0]


def damage_rhs(d, y, alpha):
    """Right-hand side ``(1 - d)^(-alpha) y``; raises :class:`DomainError` for ``d >= 1``."""
    d = np.asarray(d, dtype=float)
    if np.any(d >= 1):
        raise DomainError("damage must stay below 1")
    out = (1.0 - d) ** (-alpha) * np.asarray(y, dtype=float)
    return out if out.ndim else float(out)


def integrate_damage(grid: TimeGrid, d0, y, alpha, omega0=0.0, omega1=0.5, g_max=None,
                     backend=None) -> DamageField:
    """March the damage ODE for source samples ``y[m, j]``.

    Parameters
    ----------
    grid : TimeGrid
    d0 : array_like, shape (n,)
        Initial damage, within ``[0, omega0]``.
    y : array_like, shape (M+1, n)
        Source samples, within ``[0, g_max]``. When ``g_max`` is omitted it
        is computed from ``omega0``, ``omega1`` and ``alpha``.
    alpha : float
        Damage exponent.

    Raises
    ------
    DomainError
        Inputs outside their admissible sets.
    NumericalError
        Newton failed at some node and step.
    """
    d0 = np.asarray(d0, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape != (grid.steps + 1,) + d0.shape:
        raise DomainError(f"source shape {y.shape} does not match grid and d0 {d0.shape}")
    if g_max is None:
        g_max = (omega1 - omega0) * (1.0 - omega1) ** alpha / grid.horizon
    if np.any(d0 < -BOUND_TOL) or np.any(d0 > omega0 + BOUND_TOL):
        raise DomainError(f"initial damage outside [0, omega0={omega0}]")
    if not np.all(np.isfinite(y)) or np.any(y < -BOUND_TOL) or np.any(y > g_max * (1 + 1e-12) + BOUND_TOL):
        raise DomainError(f"source outside [0, g_max={g_max:.6g}] (range {y.min():.3g}..{y.max():.3g})")
    out, step, node = kernels.integrate_damage(d0, y, grid.dt, alpha, NEWTON_TOL, NEWTON_MAX, backend)
    if step >= 0:
        raise NumericalError(f"damage Newton iteration failed at step {step}, node {node}")
    return DamageField(grid, out, omega0, omega1)


def check_bounds(field: DamageField, tol=BOUND_TOL):
    """List violations of ``0 <= d <= omega1``, ``d0 <= omega0`` and monotonicity in time.

    Returns a list of ``(kind, step, node, value)`` tuples; empty means pass.
    """
    d = np.asarray(field.values)
    report = []
    for m, j in zip(*np.nonzero(d < -tol)):
        report.append(("below_zero", int(m), int(j), float(d[m, j])))
    for m, j in zip(*np.nonzero(d > field.omega1 + tol)):
        report.append(("above_omega1", int(m), int(j), float(d[m, j])))
    for j in np.flatnonzero(d[0] > field.omega0 + tol):
        report.append(("initial_above_omega0", 0, int(j), float(d[0, j])))
    dec = np.diff(d, axis=0) < -tol
    for m, j in zip(*np.nonzero(dec)):
        report.append(("decreasing", int(m) + 1, int(j), float(d[m + 1, j] - d[m, j])))
    return report
