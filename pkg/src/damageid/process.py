"""Finite-dimensional damage processes ``g(t, x, y)`` and their Nemytskii operators.

The basis is a tensor product of piecewise-constant cells in time and space
with clamped cubic B-splines in the strain argument ``y`` on ``[-ybar, ybar]``.
Arguments outside that interval are clamped, so ``g`` is extended by a
constant and its ``y``-derivative vanishes there.
"""
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConfigurationError


@dataclass(frozen=True)
class ProcessBasis:
    """Tensor basis: ``n_t`` time cells, ``n_x`` cells per space axis, ``n_y`` splines."""

    horizon: float
    extent: tuple
    n_t: int
    n_x: tuple
    n_y: int
    ybar: float
    degree: int = 3
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "extent", tuple(float(v) for v in np.atleast_1d(self.extent)))
        n_x = tuple(int(v) for v in np.atleast_1d(self.n_x))
        if len(n_x) == 1 and len(self.extent) > 1:
            n_x = n_x * len(self.extent)
        object.__setattr__(self, "n_x", n_x)
        if self.n_t < 1:
            raise ConfigurationError("need at least one time cell", "process.n_t")
        if len(n_x) != len(self.extent) or min(n_x) < 1:
            raise ConfigurationError("need at least one space cell per axis", "process.n_x")
        if self.n_y < self.degree + 1:
            raise ConfigurationError(f"need at least {self.degree + 1} splines", "process.n_y")
        if not self.ybar > 0:
            raise ConfigurationError("strain-argument radius must be positive", "material.ybar")
        p = self.degree
        inner = np.linspace(-self.ybar, self.ybar, self.n_y - p + 1)
        knots = np.concatenate([np.full(p, -self.ybar), inner, np.full(p, self.ybar)])
        object.__setattr__(self, "knots", knots)

    @property
    def shape(self):
        return (self.n_t,) + self.n_x + (self.n_y,)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def n_cells(self):
        return self.n_t * int(np.prod(self.n_x))

    def greville(self):
        """Greville abscissae of the ``y`` splines."""
        p = self.degree
        return np.array([self.knots[k + 1:k + p + 1].mean() for k in range(self.n_y)])

    def time_cell(self, t):
        t = np.asarray(t, dtype=float)
        # rounding keeps grid points that sit on a cell face in the upper cell
        idx = np.floor(np.round(t / self.horizon * self.n_t, 9)).astype(np.int64)
        return np.clip(idx, 0, self.n_t - 1)

    def space_cell(self, x):
        """Flat space-cell index for points ``x`` of shape ``(n, dim)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = np.zeros(len(x), dtype=np.int64)
        for a, (L, n) in enumerate(zip(self.extent, self.n_x)):
            ia = np.floor(np.round(x[:, a] / L * n, 9)).astype(np.int64)
            idx = idx * n + np.clip(ia, 0, n - 1)
        return idx

    def cells(self, t, x):
        """Combined (time, space) cell index, broadcasting ``t`` against the points ``x``."""
        return self.time_cell(t) * int(np.prod(self.n_x)) + self.space_cell(x)

    def clamp(self, y):
        return np.clip(np.asarray(y, dtype=float), -self.ybar, self.ybar)

    def spline_values(self, y, backend=None):
        """Nonzero spline values and ``y``-derivatives at (clamped) ``y``.

        Returns ``(first, vals, ders)``: column ``first + r`` holds ``vals[:, r]``.
        Derivatives are zero where ``|y| >= ybar``.
        """
        y = np.asarray(y, dtype=float).ravel()
        span, vals, ders = kernels.bspline_basis(self.knots, self.degree, self.clamp(y), backend)
        ders = np.where((np.abs(y) >= self.ybar)[:, None], 0.0, ders)
        return span - self.degree, vals, ders

    def design(self, cells, y):
        """Sparse design matrices ``(V, D)`` with ``V @ c = g`` and ``D @ c = dg/dy``.

        ``cells`` and ``y`` are flat arrays of equal length; rows follow their order.
        """
        cells = np.asarray(cells, dtype=np.int64).ravel()
        first, vals, ders = self.spline_values(y)
        n = len(cells)
        cols = (cells * self.n_y + first)[:, None] + np.arange(self.degree + 1)
        rows = np.repeat(np.arange(n), self.degree + 1)
        V = sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, self.size))
        D = sp.csr_matrix((ders.ravel(), (rows, cols.ravel())), shape=(n, self.size))
        return V, D


@dataclass(frozen=True)
class DamageProcess:
    """Spline-coefficient process ``g = sum c[i_t, i_x, k] 1_cell(t, x) B_k(y)``."""

    basis: ProcessBasis
    coeffs: np.ndarray
    g_max: float

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(self.basis.shape)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def flat(self):
        return self.coeffs.ravel()

    def with_coeffs(self, c):
        return replace(self, coeffs=np.asarray(c, dtype=float).reshape(self.basis.shape))

    def is_admissible(self, tol=0.0):
        return bool(np.all(self.coeffs >= -tol) and np.all(self.coeffs <= self.g_max + tol))

    def _gather(self, t, x, y):
        y = np.asarray(y, dtype=float)
        shape = y.shape
        t, x = _broadcast_tx(t, x, y.size)
        cells = self.basis.cells(t, x)
        first, vals, ders = self.basis.spline_values(y.ravel())
        idx = (cells * self.basis.n_y + first)[:, None] + np.arange(self.basis.degree + 1)
        c = self.coeffs.ravel()[idx]
        return shape, c, vals, ders

    def values(self, t, x, y):
        shape, c, vals, _ = self._gather(t, x, y)
        return np.einsum("nr,nr->n", c, vals).reshape(shape)

    def dy(self, t, x, y):
        shape, c, _, ders = self._gather(t, x, y)
        return np.einsum("nr,nr->n", c, ders).reshape(shape)


@dataclass(frozen=True)
class FunctionProcess:
    """Process given by callables ``g(t, x, y)`` and ``dg/dy(t, x, y)``.

    Used for analytic test cases; it is not differentiable with respect to
    parameters, so only the forward map accepts it.
    """

    func: Callable
    deriv: Callable
    g_max: float

    def values(self, t, x, y):
        y = np.asarray(y, dtype=float)
        t, x = _broadcast_tx(t, x, y.size)
        return np.asarray(self.func(t, x, y.ravel()), dtype=float).reshape(y.shape)

    def dy(self, t, x, y):
        y = np.asarray(y, dtype=float)
        t, x = _broadcast_tx(t, x, y.size)
        return np.asarray(self.deriv(t, x, y.ravel()), dtype=float).reshape(y.shape)


def _broadcast_tx(t, x, n):
    t = np.broadcast_to(np.asarray(t, dtype=float).ravel(), (n,)) if np.ndim(t) == 0 else np.asarray(t, float).ravel()
    x = np.asarray(x, dtype=float)
    if x.ndim < 2:
        x = x.reshape(-1, 1)
    if len(x) == 1 and n > 1:
        x = np.broadcast_to(x, (n, x.shape[1]))
    if len(t) != n or len(x) != n:
        raise ValueError(f"t, x, y sample counts differ ({len(t)}, {len(x)}, {n})")
    return t, x


def quadratic_process(g_max, scale=1.0 / 8.0):
    """``g(y) = min(g_max, scale * y^2)``, independent of ``t`` and ``x``."""
    def func(t, x, y):
        return np.minimum(g_max, scale * y ** 2)

    def deriv(t, x, y):
        return np.where(scale * y ** 2 < g_max, 2 * scale * y, 0.0)

    return FunctionProcess(func, deriv, g_max)


def eval_process(p, t, x, y):
    """Value ``g(t, x, y)``; ``y`` is clamped to ``[-ybar, ybar]``."""
    return p.values(t, x, y)


def eval_process_dy(p, t, x, y):
    """Derivative ``dg/dy (t, x, y)``; zero outside the open interval ``(-ybar, ybar)``."""
    return p.dy(t, x, y)


def apply_nemytskii(p, samples, times, points):
    """Samples ``G(f)[m, q] = g(t_m, x_q, f[m, q])``.

    ``samples`` has shape ``(len(times), len(points))``.
    """
    samples = np.asarray(samples, dtype=float)
    if not np.all(np.isfinite(samples)):
        raise ValueError("Nemytskii argument must be finite")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 1 and samples.shape[1] != 1:
        points = points.T
    n_t, n_q = samples.shape
    t = np.repeat(np.asarray(times, dtype=float), n_q)
    x = np.tile(points, (n_t, 1))
    return p.values(t, x, samples.ravel()).reshape(n_t, n_q)


def project_admissible(p: DamageProcess) -> DamageProcess:
    """Clamp coefficients to ``[0, g_max]`` (metric projection in the max-norm)."""
    return p.with_coeffs(np.clip(p.coeffs, 0.0, p.g_max))
