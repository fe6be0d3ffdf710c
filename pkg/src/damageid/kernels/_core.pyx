# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: damage time integration and B-spline basis evaluation.

Semantics are identical to :mod:`damageid.kernels._fallback`; the test suite
checks both backends against each other.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow, fabs

cnp.import_array()


cdef inline double _inv_pow(double base, double alpha, int ialpha) nogil:
    """``base ** -alpha``; repeated division when ``alpha`` is a small integer."""
    cdef double r = 1.0
    cdef int k
    if ialpha > 0:
        for k in range(ialpha):
            r = r / base
        return r
    return pow(base, -alpha)


def integrate_damage(double[::1] d0, double[:, ::1] source, double dt,
                     double alpha, double tol, int max_newton):
    """Trapezoidal integration of ``d' = (1-d)^-alpha * source``.

    Returns ``(d, fail_step, fail_node)``; ``fail_step`` is ``-1`` on success.
    """
    cdef Py_ssize_t n_steps = source.shape[0] - 1
    cdef Py_ssize_t n_nodes = source.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n_steps + 1, n_nodes))
    cdef double[:, ::1] d = out
    cdef Py_ssize_t m, j
    cdef int it
    cdef double dm, known, x, res, jac, s1, p, half = 0.5 * dt
    cdef bint ok
    cdef int ialpha = <int>alpha if alpha == <int>alpha and 1 <= alpha <= 4 else 0
    for j in range(n_nodes):
        d[0, j] = d0[j]
    for m in range(n_steps):
        for j in range(n_nodes):
            dm = d[m, j]
            s1 = source[m + 1, j]
            known = dm + half * _inv_pow(1.0 - dm, alpha, ialpha) * source[m, j]
            x = dm
            ok = False
            for it in range(max_newton):
                p = _inv_pow(1.0 - x, alpha, ialpha)
                res = x - known - half * p * s1
                if fabs(res) <= tol:
                    ok = True
                    break
                jac = 1.0 - half * alpha * p / (1.0 - x) * s1
                x = x - res / jac
                if x >= 1.0 or x != x:
                    break
            if not ok:
                return out, m + 1, j
            d[m + 1, j] = x
    return out, -1, -1


cdef Py_ssize_t _find_span(double[::1] knots, int degree, Py_ssize_t n_basis, double x) nogil:
    cdef Py_ssize_t low, high, mid
    if x >= knots[n_basis]:
        return n_basis - 1
    if x <= knots[degree]:
        return degree
    low = degree
    high = n_basis
    mid = (low + high) // 2
    while x < knots[mid] or x >= knots[mid + 1]:
        if x < knots[mid]:
            high = mid
        else:
            low = mid
        mid = (low + high) // 2
    return mid


def bspline_basis(double[::1] knots, int degree, double[::1] x):
    """Nonzero basis values and first derivatives at each point.

    Returns ``(span, values, derivs)`` where row ``k`` of ``values`` holds
    ``B_{span-degree..span}(x_k)``.
    """
    cdef Py_ssize_t n_pts = x.shape[0]
    cdef Py_ssize_t n_basis = knots.shape[0] - degree - 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] span_arr = np.empty(n_pts, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] val_arr = np.zeros((n_pts, degree + 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] der_arr = np.zeros((n_pts, degree + 1))
    cdef long[::1] span_v = span_arr
    cdef double[:, ::1] vals = val_arr
    cdef double[:, ::1] ders = der_arr
    cdef double[::1] left = np.empty(degree + 1)
    cdef double[::1] right = np.empty(degree + 1)
    cdef double[::1] nb = np.empty(degree + 1)
    cdef double[::1] low = np.empty(degree + 1)
    cdef Py_ssize_t k, s, j, r
    cdef double saved, temp, xk, den, a, b
    for k in range(n_pts):
        xk = x[k]
        s = _find_span(knots, degree, n_basis, xk)
        span_v[k] = s
        nb[0] = 1.0
        for j in range(1, degree + 1):
            if j == degree:
                for r in range(degree):
                    low[r] = nb[r]
            left[j] = xk - knots[s + 1 - j]
            right[j] = knots[s + j] - xk
            saved = 0.0
            for r in range(j):
                temp = nb[r] / (right[r + 1] + left[j - r])
                nb[r] = saved + right[r + 1] * temp
                saved = left[j - r] * temp
            nb[j] = saved
        for r in range(degree + 1):
            vals[k, r] = nb[r]
        if degree == 0:
            continue
        for r in range(degree + 1):
            a = 0.0
            b = 0.0
            if r >= 1:
                den = knots[s + r] - knots[s - degree + r]
                if den > 0.0:
                    a = low[r - 1] / den
            if r <= degree - 1:
                den = knots[s + r + 1] - knots[s - degree + r + 1]
                if den > 0.0:
                    b = low[r] / den
            ders[k, r] = degree * (a - b)
    return span_arr, val_arr, der_arr
