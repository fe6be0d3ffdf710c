"""Hot kernels with a compiled (Cython) core and a pure-Python fallback.

The compiled extension is used when it was built and ``DAMAGEID_PURE_PYTHON``
is unset. Both backends expose the same functions:

integrate_damage(d0, source, dt, alpha, tol, max_newton)
    Per-node implicit trapezoidal march of the damage ODE.
bspline_basis(knots, degree, x)
    Nonzero B-spline values and first derivatives.
"""
import os

import numpy as np

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

BACKENDS = {"python": _fallback}
if _core is not None:
    BACKENDS["compiled"] = _core

if _core is not None and not os.environ.get("DAMAGEID_PURE_PYTHON"):
    BACKEND = "compiled"
else:
    BACKEND = "python"


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    return BACKENDS[name or BACKEND]


def integrate_damage(d0, source, dt, alpha, tol=1e-13, max_newton=50, backend=None):
    mod = get_backend(backend)
    return mod.integrate_damage(
        np.ascontiguousarray(d0, dtype=float),
        np.ascontiguousarray(source, dtype=float),
        float(dt), float(alpha), float(tol), int(max_newton),
    )


def bspline_basis(knots, degree, x, backend=None):
    mod = get_backend(backend)
    return mod.bspline_basis(
        np.ascontiguousarray(knots, dtype=float),
        int(degree),
        np.ascontiguousarray(np.ravel(x), dtype=float),
    )
