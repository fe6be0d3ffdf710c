"""Pure NumPy versions of the compiled kernels (same signatures and results)."""
import numpy as np


def integrate_damage(d0, source, dt, alpha, tol, max_newton):
    n_steps = source.shape[0] - 1
    out = np.empty(source.shape)
    out[0] = d0
    half = 0.5 * dt
    for m in range(n_steps):
        dm = out[m]
        s1 = source[m + 1]
        known = dm + half * (1.0 - dm) ** (-alpha) * source[m]
        x = dm.copy()
        active = np.ones(x.shape, dtype=bool)
        for _ in range(max_newton):
            res = x - known - half * (1.0 - x) ** (-alpha) * s1
            active = np.abs(res) > tol
            if not active.any():
                break
            jac = 1.0 - half * alpha * (1.0 - x) ** (-alpha - 1.0) * s1
            step = np.where(active, res / jac, 0.0)
            x = x - step
            bad = ~(x < 1.0)
            if bad.any():
                return out, m + 1, int(np.flatnonzero(bad)[0])
        else:
            res = x - known - half * (1.0 - x) ** (-alpha) * s1
            active = np.abs(res) > tol
        if active.any():
            return out, m + 1, int(np.flatnonzero(active)[0])
        out[m + 1] = x
    return out, -1, -1


def _find_span(knots, degree, x):
    n_basis = len(knots) - degree - 1
    span = np.searchsorted(knots, x, side="right") - 1
    return np.clip(span, degree, n_basis - 1)


def bspline_basis(knots, degree, x):
    x = np.asarray(x, dtype=float)
    n_pts = x.shape[0]
    span = _find_span(knots, degree, x).astype(np.int64)
    nb = np.zeros((n_pts, degree + 1))
    nb[:, 0] = 1.0
    left = np.zeros((n_pts, degree + 1))
    right = np.zeros((n_pts, degree + 1))
    low = np.zeros((n_pts, max(degree, 1)))
    for j in range(1, degree + 1):
        if j == degree:
            low[:, :degree] = nb[:, :degree]
        left[:, j] = x - knots[span + 1 - j]
        right[:, j] = knots[span + j] - x
        saved = np.zeros(n_pts)
        for r in range(j):
            temp = nb[:, r] / (right[:, r + 1] + left[:, j - r])
            nb[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        nb[:, j] = saved
    ders = np.zeros((n_pts, degree + 1))
    if degree > 0:
        for r in range(degree + 1):
            a = np.zeros(n_pts)
            b = np.zeros(n_pts)
            if r >= 1:
                den = knots[span + r] - knots[span - degree + r]
                ok = den > 0.0
                a[ok] = low[ok, r - 1] / den[ok]
            if r <= degree - 1:
                den = knots[span + r + 1] - knots[span - degree + r + 1]
                ok = den > 0.0
                b[ok] = low[ok, r] / den[ok]
            ders[:, r] = degree * (a - b)
    return span, nb, ders
