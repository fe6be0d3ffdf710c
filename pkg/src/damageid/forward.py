"""Parameter-to-state map by global-in-time Picard iteration.

One sweep of ``Psi`` takes a damage trajectory, solves every equilibrium,
forms the mollified strain argument, applies the process and integrates the
damage ODE. Equilibrium solves at different times are independent and may
run on a thread pool (``DAMAGEID_THREADS``, default 1).
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .damage import DamageField, TimeGrid, check_bounds, integrate_damage
from .errors import ConfigurationError, ConvergenceError
from .fem import LoadSet, MaterialModel, Mesh, StiffnessAssembler, mass_matrix
from .mollifier import MollifiedGradient, MollifierSpec, StrainFeature


def worker_count():
    try:
        return max(1, int(os.environ.get("DAMAGEID_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    n = worker_count()
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ForwardConfig:
    tol: float = 1e-10
    max_sweeps: int = 100
    lam: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("tolerance must be positive", "forward.tol")
        if self.max_sweeps < 1:
            raise ConfigurationError("need at least one sweep", "forward.max_sweeps")


@dataclass
class StateTrajectory:
    """Converged ``(u, d)`` with the data needed to linearize around it."""

    times: np.ndarray
    u: np.ndarray  # (M+1, n_dofs), zero on clamped dofs
    damage: DamageField
    grad: np.ndarray  # (M+1, n_nodes * N^2) mollified gradients
    y: np.ndarray  # (M+1, n_nodes) process argument
    sweeps: int
    history: list
    factors: list = field(default=None, repr=False)

    @property
    def d(self):
        return self.damage.values


class DataSpace:
    """Space-time displacement data with the L2 inner product.

    Time uses trapezoidal weights; space uses the consistent mass matrix.
    Vectors are flat arrays of length ``(M+1) * n_dofs``.
    """

    def __init__(self, grid: TimeGrid, mass):
        self.grid = grid
        self.mass = mass.tocsr()
        self.n_dofs = mass.shape[0]
        self.weights = grid.trapezoid_weights

    @property
    def size(self):
        return (self.grid.steps + 1) * self.n_dofs

    def riesz(self, a):
        """``W a`` so that ``<a, b> = a . (W b)``."""
        a = np.asarray(a).reshape(-1, self.n_dofs)
        return ((self.mass @ a.T).T * self.weights[:, None]).ravel()

    def inner(self, a, b):
        return float(np.dot(np.ravel(a), self.riesz(b)))

    def norm(self, a):
        return float(np.sqrt(max(self.inner(a, a), 0.0)))


class ForwardModel:
    """Bundle of mesh, material, mollifier, time grid, loads and initial damage."""

    def __init__(self, mesh: Mesh, material: MaterialModel, mollifier: MollifierSpec,
                 grid: TimeGrid, loads: LoadSet, d0, fwd: ForwardConfig = None):
        material.validate()
        if abs(grid.horizon - material.horizon) > 1e-12 * material.horizon:
            raise ConfigurationError("time grid and material horizons differ", "time.horizon")
        self.mesh = mesh
        self.material = material
        self.grid = grid
        self.loads = loads
        self.fwd = fwd or ForwardConfig()
        self.assembler = StiffnessAssembler(mesh, material)
        self.gradient = MollifiedGradient(mollifier, mesh)
        self.feature = StrainFeature(mesh.dim)
        d0 = np.broadcast_to(np.asarray(d0, dtype=float), (mesh.n_nodes,)).copy()
        self.d0 = d0
        self.free = mesh.free_dofs
        self.load_vectors = np.array([loads.vector(mesh, t) for t in grid.times])
        self.data_space = DataSpace(grid, mass_matrix(mesh))
        n = mesh.n_nodes
        self.t_flat = np.repeat(grid.times, n)
        self.x_flat = np.tile(mesh.coords, (grid.steps + 1, 1))

    @property
    def g_max(self):
        return self.material.g_max

    # -- single components of Psi -------------------------------------------------
    def factorize(self, d_slice):
        return self.assembler.factorize(d_slice)

    def solve_displacements(self, d_traj, keep_factors=False, loads=None):
        """Equilibrium at every time for a damage trajectory; returns ``(u, factors)``."""
        F = self.load_vectors if loads is None else loads
        M1, n_dofs = F.shape

        def one(m):
            lu = self.factorize(d_traj[m])
            u = np.zeros(n_dofs)
            u[self.free] = lu.solve(F[m, self.free])
            return u, (lu if keep_factors else None)

        out = _map(one, range(M1))
        return np.array([o[0] for o in out]), [o[1] for o in out]

    def strain_argument(self, u):
        """Mollified gradients and scalar process argument for each time slice."""
        grad = (self.gradient.matrix @ u.T).T
        dim = self.mesh.dim
        if dim == 1:
            return grad, grad.copy()
        g3 = grad.reshape(len(u), -1, dim, dim)
        return grad, self.feature(g3)

    def process_source(self, process, y):
        vals = process.values(self.t_flat, self.x_flat, y.ravel())
        return vals.reshape(y.shape)

    def integrate(self, source):
        mat = self.material
        return integrate_damage(self.grid, self.d0, source, mat.alpha, mat.omega0, mat.omega1,
                                g_max=mat.g_max)

    def psi(self, process, d_traj):
        """One Picard map ``Psi(d)``; returns the new damage values."""
        u, _ = self.solve_displacements(d_traj)
        _, y = self.strain_argument(u)
        return self.integrate(self.process_source(process, y)).values

    # -- full solve ---------------------------------------------------------------
    def solve(self, process, cfg: ForwardConfig = None, keep_factors=True) -> StateTrajectory:
        """Fixed point of ``Psi`` starting from the constant trajectory ``d0``.

        Raises :class:`ConvergenceError` with the update-norm history when
        ``max_sweeps`` is exhausted.
        """
        cfg = cfg or self.fwd
        d = np.tile(self.d0, (self.grid.steps + 1, 1))
        history = []
        for sweep in range(1, cfg.max_sweeps + 1):
            d_new = self.psi(process, d)
            change = float(np.max(np.abs(d_new - d)))
            history.append(change)
            d = d_new
            if change <= cfg.tol:
                break
        else:
            raise ConvergenceError(
                f"Picard iteration did not reach {cfg.tol:g} in {cfg.max_sweeps} sweeps "
                f"(last update {history[-1]:.3e})", history)
        u, factors = self.solve_displacements(d, keep_factors=keep_factors)
        grad, y = self.strain_argument(u)
        mat = self.material
        field_ = DamageField(self.grid, d, mat.omega0, mat.omega1)
        return StateTrajectory(self.grid.times, u, field_, grad, y, sweep, history,
                               factors if keep_factors else None)


def picard_forward_solve(model: ForwardModel, process, cfg: ForwardConfig = None) -> StateTrajectory:
    return model.solve(process, cfg)


def forward_operator(model: ForwardModel, process, cfg: ForwardConfig = None):
    """Flat space-time displacement data ``Phi(g)`` and the converged state."""
    state = model.solve(process, cfg)
    return state.u.ravel(), state


def weighted_norm(values, times, lam):
    """``max_m exp(-lam t_m) ||values[m]||_inf``."""
    values = np.asarray(values)
    return float(np.max(np.exp(-lam * times) * np.max(np.abs(values.reshape(len(times), -1)), axis=1)))


def random_damage_trajectory(rng, model: ForwardModel):
    """Random time-monotone trajectory in ``[0, omega1]`` starting at ``d0``."""
    M1, n = model.grid.steps + 1, model.mesh.n_nodes
    inc = rng.uniform(0.0, 1.0, (M1 - 1, n)) ** 2
    inc *= rng.uniform(0.2, 1.0) * (model.material.omega1 - model.d0.max()) / max(inc.sum(0).max(), 1e-300)
    return np.vstack([model.d0, model.d0 + np.cumsum(inc, axis=0)])


def contraction_estimate(model: ForwardModel, process, lams=None, trials=10, seed=0):
    """Empirical contraction factor of ``Psi^2`` in the weighted norm for each ``lam``.

    The same random pairs are used for every ``lam``; returns an array ``q``
    aligned with ``lams`` (default: the model's ``ForwardConfig.lam``).
    """
    rng = np.random.default_rng(seed)
    if lams is None:
        lams = model.fwd.lam
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    times = model.grid.times
    q = np.zeros(len(lams))
    for _ in range(trials):
        d1 = random_damage_trajectory(rng, model)
        d2 = random_damage_trajectory(rng, model)
        p1 = model.psi(process, model.psi(process, d1))
        p2 = model.psi(process, model.psi(process, d2))
        for i, lam in enumerate(lams):
            den = weighted_norm(d1 - d2, times, lam)
            if den > 0:
                q[i] = max(q[i], weighted_norm(p1 - p2, times, lam) / den)
    return q


def coupled_march(model: ForwardModel, process, substeps=100, tol=1e-14, max_inner=200):
    """Tightly coupled reference integrator (verification oracle).

    Marches on a grid refined by ``substeps``; each step solves the implicit
    trapezoidal update for ``d`` jointly with equilibrium by fixed-point
    iteration. Returns damage at the coarse grid times.
    """
    mat = model.material
    fine = TimeGrid(model.grid.horizon, model.grid.steps * substeps)
    half = 0.5 * fine.dt
    n = model.mesh.n_nodes

    def source(t, d):
        lu = model.factorize(d)
        u = np.zeros(model.mesh.n_dofs)
        u[model.free] = lu.solve(model.loads.vector(model.mesh, t)[model.free])
        _, y = model.strain_argument(u[None, :])
        return process.values(np.full(n, t), model.mesh.coords, y[0])

    d = model.d0.copy()
    s = source(0.0, d)
    out = [d.copy()]
    for k in range(fine.steps):
        t1 = (k + 1) * fine.dt
        known = d + half * (1 - d) ** (-mat.alpha) * s
        x = d.copy()
        for _ in range(max_inner):
            s1 = source(t1, x)
            # scalar Newton per node for the frozen source
            for _ in range(50):
                res = x - known - half * (1 - x) ** (-mat.alpha) * s1
                if np.max(np.abs(res)) <= 1e-15:
                    break
                x = x - res / (1 - half * mat.alpha * (1 - x) ** (-mat.alpha - 1) * s1)
            s_new = source(t1, x)
            if np.max(np.abs(s_new - s1)) <= tol:
                break
        else:
            raise ConvergenceError("coupled march inner iteration stalled")
        d, s = x, s_new
        if (k + 1) % substeps == 0:
            out.append(d.copy())
    return np.array(out)


def state_bounds_report(state: StateTrajectory):
    return check_bounds(state.damage)
