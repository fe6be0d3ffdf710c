"""Linearized forward map, its adjoint and the parameter-space Gram matrix.

The discrete forward map is

    K(d_m) u_m = F_m,    y_m = feat(D_mu u_m),    s_m = V_m(y_m) c,
    d_{m+1} - d_m = dt/2 [a(d_m) s_m + a(d_{m+1}) s_{m+1}],   a(d) = (1-d)^-alpha.

Differentiating it in the coefficient direction ``h`` gives, with
``S_m = K_m^-1 Q_m`` (``Q_m`` the damage-to-load coupling at ``u_m``),

    A_{m+1} dd_{m+1} = B_m dd_m + dt/2 (P_m + P_{m+1}) h,   dd_0 = 0,
    du_m = S_m dd_m,

where ``A = I - dt/2 L``, ``B = I + dt/2 L`` and
``L_m = diag(a'(d_m) s_m) + diag(a(d_m) g_y) J_m D_mu S_m``. The adjoint
is the exact algebraic transpose of this recursion, so the inner-product
identity holds to rounding error.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import NumericalError
from .forward import ForwardModel, StateTrajectory, _map
from .process import DamageProcess, ProcessBasis


# -- parameter Gram -------------------------------------------------------------

def _cell_axis(n, width):
    """Mass and Neumann difference Gram of piecewise constants on ``n`` cells."""
    M = np.eye(n) * width
    K = np.zeros((n, n))
    for i in range(n - 1):
        K[i, i] += 1
        K[i + 1, i + 1] += 1
        K[i, i + 1] -= 1
        K[i + 1, i] -= 1
    return M, K / width


def _spline_axis(basis: ProcessBasis):
    """Exact mass and stiffness Grams of the ``y`` splines."""
    from . import kernels

    p = basis.degree
    breaks = np.unique(basis.knots)
    gp, gw = np.polynomial.legendre.leggauss(p + 1)
    a, b = breaks[:-1], breaks[1:]
    x = ((a + b)[:, None] + (b - a)[:, None] * gp) / 2
    w = ((b - a)[:, None] / 2 * gw).ravel()
    span, vals, ders = kernels.bspline_basis(basis.knots, p, x.ravel())
    n = basis.n_y
    Bv = np.zeros((len(w), n))
    Bd = np.zeros((len(w), n))
    rows = np.arange(len(w))[:, None]
    cols = (span - p)[:, None] + np.arange(p + 1)
    Bv[rows, cols] = vals
    Bd[rows, cols] = ders
    return Bv.T @ (w[:, None] * Bv), Bd.T @ (w[:, None] * Bd)


def _kron_all(mats):
    out = np.ones((1, 1))
    for m in mats:
        out = np.kron(out, m)
    return out


class ParameterGram:
    """Discrete ``H^s`` Gram ``M_s`` on process coefficients.

    Each axis contributes a mass ``M_a`` and a stiffness ``K_a`` with
    generalized eigenvectors ``K_a V_a = M_a V_a diag(lam_a)``,
    ``V_a^T M_a V_a = I``. With ``Lam = 1 + sum_a lam_a`` (Kronecker sum),

        M_s = (⊗ M_a V_a) Lam^s (⊗ V_a^T M_a).

    ``s = 0`` gives the tensor mass matrix and constant vectors are
    eigenvectors with ``Lam = 1``.
    """

    def __init__(self, basis: ProcessBasis, s: float):
        if s < 0:
            raise ValueError("Gram exponent must be >= 0")
        self.basis = basis
        self.s = float(s)
        axes = [_cell_axis(basis.n_t, basis.horizon / basis.n_t)]
        axes += [_cell_axis(n, L / n) for n, L in zip(basis.n_x, basis.extent)]
        axes.append(_spline_axis(basis))
        self.axes = axes
        Vs, lams = [], []
        for M, K in axes:
            lam, V = sla.eigh(K, M)
            lams.append(np.clip(lam, 0.0, None))
            Vs.append(V)
        lam = np.zeros(1)
        for la in lams:
            lam = np.add.outer(lam, la).ravel()
        self.eigenvalues = 1.0 + lam
        V = _kron_all(Vs)
        MV = _kron_all([M @ Va for (M, _), Va in zip(axes, Vs)])
        self.V = V
        self.matrix = _sym((MV * self.eigenvalues ** self.s) @ MV.T)
        self.inverse = _sym((V * self.eigenvalues ** (-self.s)) @ V.T)
        # columns form an M_s-orthonormal basis
        self.isometry = V * self.eigenvalues ** (-self.s / 2)
        if np.min(np.linalg.eigvalsh(self.matrix)) <= 0:
            raise NumericalError("parameter Gram is not positive definite")

    @property
    def mass(self):
        return _kron_all([M for M, _ in self.axes])

    @property
    def laplace(self):
        """Kronecker-sum stiffness ``sum_a (M ⊗ .. ⊗ K_a ⊗ .. ⊗ M)``."""
        n = len(self.axes)
        out = 0
        for a in range(n):
            out = out + _kron_all([K if b == a else M for b, (M, K) in enumerate(self.axes)])
        return out

    def apply(self, c):
        return self.matrix @ np.ravel(c)

    def solve(self, v):
        return self.inverse @ np.ravel(v)

    def inner(self, a, b):
        return float(np.ravel(a) @ self.matrix @ np.ravel(b))

    def norm(self, c):
        return float(np.sqrt(max(self.inner(c, c), 0.0)))


def _sym(A):
    return 0.5 * (A + A.T)


def build_parameter_gram(basis: ProcessBasis, s: float) -> ParameterGram:
    return ParameterGram(basis, s)


def default_gram_exponent(dim):
    """Smallest integer above ``(N^2 + N + 3) / 2``."""
    return int(np.floor((dim * dim + dim + 3) / 2)) + 1


# -- linearization and adjoint --------------------------------------------------

@dataclass
class LinearizedState:
    dd: np.ndarray  # (M+1, n_nodes)
    du: np.ndarray  # (M+1, n_dofs)


@dataclass
class AdjointState:
    u_f: np.ndarray  # (M+1, n_free)
    e: np.ndarray  # (M+1, n_nodes)
    w_e: np.ndarray  # (M+1, n_nodes); w_e[M] = 0


class SensitivityWorkspace:
    """Per-time linear operators of the linearization around a converged state."""

    def __init__(self, model: ForwardModel, process: DamageProcess, state: StateTrajectory,
                 gram: ParameterGram = None):
        self.model = model
        self.process = process
        self.state = state
        self.gram = gram
        mat = model.material
        grid = model.grid
        mesh = model.mesh
        n = mesh.n_nodes
        M1 = grid.steps + 1
        self.dt = grid.dt
        self.n_nodes = n
        factors = state.factors
        if factors is None or any(f is None for f in factors):
            factors = [model.factorize(d) for d in state.d]
        self.factors = factors
        d = state.d
        basis = process.basis
        cells = basis.cells(model.t_flat, model.x_flat)
        V, D = basis.design(cells, state.y.ravel())
        c = process.flat
        source = (V @ c).reshape(M1, n)
        g_y = (D @ c).reshape(M1, n)
        a = (1.0 - d) ** (-mat.alpha)
        da = mat.alpha * (1.0 - d) ** (-mat.alpha - 1.0)
        self.a = a
        # P_m h = a_m * (V_m h); all time levels share one design matrix
        self.V = V
        free = model.free
        grad_op = model.gradient.matrix[:, free]
        dim = mesh.dim

        def per_step(m):
            Q = model.assembler.coupling(state.u[m], dense=True)
            S = factors[m].solve(Q)
            if dim == 1:
                Jg = grad_op
            else:
                J = model.feature.jacobian(state.grad[m].reshape(n, dim, dim))
                Jg = J @ grad_op
            L = np.diag(da[m] * source[m]) + (a[m] * g_y[m])[:, None] * (Jg @ S)
            return Q, S, L

        out = _map(per_step, range(M1))
        self.Q = [o[0] for o in out]
        self.S = [o[1] for o in out]
        self.L = [o[2] for o in out]
        I = np.eye(n)
        self.A_lu = [None] + [sla.lu_factor(I - 0.5 * self.dt * self.L[m]) for m in range(1, M1)]
        self.B = [I + 0.5 * self.dt * L for L in self.L]

    # forward-linearized path
    def apply_OE_derivative(self, m, dh):
        """Displacement perturbation at time ``m`` for the damage perturbation ``dh``."""
        u = np.zeros(self.model.mesh.n_dofs)
        u[self.model.free] = self.S[m] @ np.asarray(dh, dtype=float)
        return u

    def linearized_damage(self, h):
        h = np.ravel(h)
        M1 = len(self.L)
        Ph = self.a * (self.V @ h).reshape(M1, self.n_nodes)
        dd = np.zeros((M1, self.n_nodes))
        for m in range(M1 - 1):
            rhs = self.B[m] @ dd[m] + 0.5 * self.dt * (Ph[m] + Ph[m + 1])
            dd[m + 1] = sla.lu_solve(self.A_lu[m + 1], rhs)
        return dd

    def linearized_state(self, h) -> LinearizedState:
        dd = self.linearized_damage(h)
        du = np.array([self.apply_OE_derivative(m, dd[m]) for m in range(len(dd))])
        return LinearizedState(dd, du)

    def linearized_apply(self, h):
        """Data-space perturbation ``dPhi(g) h`` (flat)."""
        return self.linearized_state(h).du.ravel()

    # adjoint path
    def adjoint_elasticity_solve(self, m, rhs_full):
        """``u_f`` with ``K(d_m) u_f = rhs`` on the free dofs (``rhs`` on all dofs)."""
        return self.factors[m].solve(np.asarray(rhs_full, dtype=float)[self.model.free])

    def adjoint_damage_solve(self, e):
        """Backward march for ``w_e``; ``e[m]`` pairs with ``dd[m]`` (``e[0]`` is unused)."""
        e = np.asarray(e, dtype=float)
        M1 = len(self.L)
        lam = np.zeros((M1, self.n_nodes))
        for m in range(M1 - 2, -1, -1):
            rhs = e[m + 1] + (self.B[m + 1].T @ lam[m + 1] if m + 1 < M1 - 1 else 0.0)
            lam[m] = sla.lu_solve(self.A_lu[m + 1], rhs, trans=1)
        return -lam

    def adjoint_state(self, r) -> AdjointState:
        ds = self.model.data_space
        Wr = ds.riesz(r).reshape(-1, ds.n_dofs)
        M1 = len(self.L)
        u_f = np.array([self.adjoint_elasticity_solve(m, Wr[m]) for m in range(M1)])
        e = np.array([self.Q[m].T @ u_f[m] for m in range(M1)])
        return AdjointState(u_f, e, self.adjoint_damage_solve(e))

    def adjoint_raw(self, r):
        """Euclidean gradient ``dPhi(g)^T W r`` in coefficient space."""
        w_e = self.adjoint_state(r).w_e
        # level k collects w_k (as left end) and w_{k-1} (as right end); w_e[M] = 0
        z = w_e.copy()
        z[1:] += w_e[:-1]
        return -0.5 * self.dt * (self.V.T @ (self.a * z).ravel())

    def adjoint_apply(self, r):
        """``dPhi(g)^* r`` with respect to the ``M_s`` inner product."""
        if self.gram is None:
            raise ValueError("workspace was built without a parameter Gram")
        return self.gram.solve(self.adjoint_raw(r))


def linearized_apply(model, process, state, h, gram=None):
    return SensitivityWorkspace(model, process, state, gram).linearized_apply(h)


def adjoint_apply(model, process, state, r, gram):
    return SensitivityWorkspace(model, process, state, gram).adjoint_apply(r)
