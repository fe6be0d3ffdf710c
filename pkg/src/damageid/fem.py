"""Finite elements for the damage-degraded linear elasticity equilibrium.

Structured meshes of linear segments (N=1) or bilinear quadrilaterals (N=2).
The bilinear form is

    a_d(u, v) = int (1 - d) E eps(u) : eps(v) dx,

with the nodal damage ``d`` interpolated to quadrature points by the same
shape functions as the displacement. Clamped degrees of freedom are removed
by row/column elimination, so the reduced stiffness is symmetric and its
transpose is exact.
"""
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DomainError, NumericalError

FACES = {1: ("left", "right"), 2: ("left", "right", "bottom", "top")}

BOUND_TOL = 1e-12

Field = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class DomainSpec:
    """Interval ``(0, L)`` or rectangle ``(0, Lx) x (0, Ly)`` with a boundary partition.

    ``gamma0`` lists the clamped faces; every other face belongs to the
    traction boundary. ``traction_faces`` restricts where the prescribed
    traction acts (default: all traction faces).
    """

    dim: int
    extent: tuple
    elements: tuple
    gamma0: tuple = ("left",)
    traction_faces: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "extent", tuple(float(v) for v in np.atleast_1d(self.extent)))
        object.__setattr__(self, "elements", tuple(int(v) for v in np.atleast_1d(self.elements)))
        object.__setattr__(self, "gamma0", tuple(self.gamma0))
        if self.traction_faces is not None:
            object.__setattr__(self, "traction_faces", tuple(self.traction_faces))

    @property
    def faces(self):
        return FACES[self.dim]

    @property
    def gamma1(self):
        return tuple(f for f in self.faces if f not in self.gamma0)

    def validate(self):
        if self.dim not in FACES:
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.dim}", "domain.dim")
        if len(self.extent) != self.dim or min(self.extent) <= 0:
            raise ConfigurationError(f"need {self.dim} positive extents", "domain.extent")
        if len(self.elements) != self.dim:
            raise ConfigurationError(f"need {self.dim} element counts", "domain.elements")
        if min(self.elements) < 1:
            raise ConfigurationError("element count must be >= 1 per axis", "domain.elements")
        unknown = set(self.gamma0) - set(self.faces)
        if unknown:
            raise ConfigurationError(f"unknown faces {sorted(unknown)}", "domain.gamma0")
        if not self.gamma0:
            raise ConfigurationError("clamped boundary must be nonempty", "domain.gamma0")
        if not self.gamma1:
            raise ConfigurationError("traction boundary must be nonempty", "domain.gamma0")
        if self.traction_faces is not None and not set(self.traction_faces) <= set(self.gamma1):
            raise ConfigurationError("traction faces must lie on the traction boundary",
                                     "domain.traction_faces")


@dataclass(frozen=True)
class MaterialModel:
    """Elastic coefficients and damage-law constants.

    For N=1 ``youngs`` is the scalar modulus E(x); for N=2 the isotropic
    Lamé pair (plane strain) is used. Coefficients are constants or callables
    of node/quadrature coordinates of shape ``(n, dim)``.
    """

    youngs: Field = 1.0
    lame_lambda: Field = 1.0
    lame_mu: Field = 1.0
    alpha: float = 1.0
    omega0: float = 0.0
    omega1: float = 0.5
    ybar: float = 1.0
    horizon: float = 1.0

    @property
    def g_max(self):
        """Upper bound on admissible damage processes, ``(omega1 - omega0)(1 - omega1)^alpha / T``."""
        return (self.omega1 - self.omega0) * (1.0 - self.omega1) ** self.alpha / self.horizon

    def validate(self):
        if self.alpha < 1:
            raise ConfigurationError("damage exponent must be >= 1", "material.alpha")
        if not 0 <= self.omega0 <= self.omega1:
            raise ConfigurationError("need 0 <= omega0 <= omega1", "material.omega0")
        if not self.omega1 < 1:
            raise ConfigurationError("omega1 must be < 1 (partial damage)", "material.omega1")
        if self.ybar <= 0:
            raise ConfigurationError("strain-argument radius must be positive", "material.ybar")
        if self.horizon <= 0:
            raise ConfigurationError("horizon must be positive", "material.horizon")

    def elasticity(self, x):
        """Elasticity matrix (Voigt form for N=2) at points ``x`` of shape ``(n, dim)``."""
        x = np.atleast_2d(x)
        n, dim = x.shape
        if dim == 1:
            E = _field(self.youngs, x)
            if np.any(E <= 0):
                raise DomainError("elastic modulus must be positive")
            return E.reshape(n, 1, 1)
        lam = _field(self.lame_lambda, x)
        mu = _field(self.lame_mu, x)
        if np.any(mu <= 0) or np.any(lam + mu <= 0):
            raise DomainError("Lamé coefficients violate ellipticity")
        D = np.zeros((n, 3, 3))
        D[:, 0, 0] = D[:, 1, 1] = lam + 2 * mu
        D[:, 0, 1] = D[:, 1, 0] = lam
        D[:, 2, 2] = mu
        return D


def _field(value, x):
    if callable(value):
        return np.asarray(value(x), dtype=float).reshape(len(x))
    return np.full(len(x), float(value))


@dataclass
class Mesh:
    """Structured mesh with lexicographic node ordering (first coordinate slowest)."""

    spec: DomainSpec
    coords: np.ndarray
    elements: np.ndarray
    face_nodes: dict
    shape: tuple
    spacing: tuple
    qp_ref: np.ndarray
    qp_weights: np.ndarray
    shape_values: np.ndarray
    shape_grads_ref: np.ndarray
    constrained: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.spec.dim

    @property
    def n_nodes(self):
        return len(self.coords)

    @property
    def n_dofs(self):
        return self.n_nodes * self.dim

    @property
    def free_dofs(self):
        return np.flatnonzero(~self.constrained)

    @property
    def element_dofs(self):
        d = self.dim
        return (self.elements[:, :, None] * d + np.arange(d)).reshape(len(self.elements), -1)

    @property
    def jacobian_det(self):
        return float(np.prod(self.spacing) / 2 ** self.dim)

    def qp_coords(self):
        """Physical quadrature-point coordinates, shape ``(n_el, n_qp, dim)``."""
        return np.einsum("qa,ead->eqd", self.shape_values, self.coords[self.elements])

    def shape_grads(self):
        """Physical shape-function gradients, shape ``(n_qp, n_en, dim)`` (uniform elements)."""
        return self.shape_grads_ref * (2.0 / np.asarray(self.spacing))


def _gauss(order):
    pts, wts = np.polynomial.legendre.leggauss(order)
    return pts, wts


def build_mesh(spec: DomainSpec, quad_order: int = 2) -> Mesh:
    """Structured mesh for ``spec`` with Gauss quadrature of ``quad_order`` points per axis."""
    spec.validate()
    pts, wts = _gauss(quad_order)
    if spec.dim == 1:
        (L,), (n,) = spec.extent, spec.elements
        coords = np.linspace(0.0, L, n + 1)[:, None]
        elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        face_nodes = {"left": np.array([0]), "right": np.array([n])}
        qp_ref = pts[:, None]
        qp_w = wts
        N = np.column_stack([(1 - pts) / 2, (1 + pts) / 2])
        dN = np.stack([np.full_like(pts, -0.5), np.full_like(pts, 0.5)], axis=1)[:, :, None]
        shape = (n + 1,)
        spacing = (L / n,)
    else:
        (Lx, Ly), (nx, ny) = spec.extent, spec.elements
        xs = np.linspace(0.0, Lx, nx + 1)
        ys = np.linspace(0.0, Ly, ny + 1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        coords = np.column_stack([X.ravel(), Y.ravel()])

        def node(i, j):
            return i * (ny + 1) + j

        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        elements = np.column_stack([node(ii, jj), node(ii + 1, jj), node(ii + 1, jj + 1), node(ii, jj + 1)])
        allj = np.arange(ny + 1)
        alli = np.arange(nx + 1)
        face_nodes = {
            "left": node(0, allj),
            "right": node(nx, allj),
            "bottom": node(alli, 0),
            "top": node(alli, ny),
        }
        xi, eta = np.meshgrid(pts, pts, indexing="ij")
        xi, eta = xi.ravel(), eta.ravel()
        qp_ref = np.column_stack([xi, eta])
        qp_w = np.outer(wts, wts).ravel()
        sx = np.array([-1.0, 1.0, 1.0, -1.0])
        sy = np.array([-1.0, -1.0, 1.0, 1.0])
        N = (1 + np.outer(xi, sx)) * (1 + np.outer(eta, sy)) / 4
        dN = np.stack([np.outer(np.ones_like(xi), sx) * (1 + np.outer(eta, sy)) / 4,
                       (1 + np.outer(xi, sx)) * np.outer(np.ones_like(eta), sy) / 4], axis=2)
        shape = (nx + 1, ny + 1)
        spacing = (Lx / nx, Ly / ny)
    constrained = np.zeros(len(coords) * spec.dim, dtype=bool)
    for face in spec.gamma0:
        for c in range(spec.dim):
            constrained[face_nodes[face] * spec.dim + c] = True
    return Mesh(spec, coords, elements, face_nodes, shape, spacing, qp_ref, qp_w, N, dN, constrained)


def _strain_operator(mesh):
    """Per-qp strain-displacement matrices ``(n_qp, n_voigt, n_en*dim)``."""
    grads = mesh.shape_grads()
    n_qp, n_en, dim = grads.shape
    if dim == 1:
        return grads.reshape(n_qp, 1, n_en)
    B = np.zeros((n_qp, 3, n_en * 2))
    B[:, 0, 0::2] = grads[:, :, 0]
    B[:, 1, 1::2] = grads[:, :, 1]
    B[:, 2, 0::2] = grads[:, :, 1]
    B[:, 2, 1::2] = grads[:, :, 0]
    return B


def _voigt_to_tensor(v, dim):
    if dim == 1:
        return v[..., None]
    out = np.empty(v.shape[:-1] + (2, 2))
    out[..., 0, 0] = v[..., 0]
    out[..., 1, 1] = v[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = 0.5 * v[..., 2]
    return out


class StiffnessAssembler:
    """Precomputed element data for fast reassembly of ``K(d)`` on a fixed mesh.

    The sparsity pattern and the scatter map into CSR storage are built once;
    each call to :meth:`matrix` is a weighted sum over element-quadrature
    kernels followed by one ``bincount``.
    """

    def __init__(self, mesh: Mesh, material: MaterialModel):
        material.validate()
        self.mesh = mesh
        self.material = material
        self.B = _strain_operator(mesh)
        xq = mesh.qp_coords()
        n_el, n_qp, dim = xq.shape
        D = material.elasticity(xq.reshape(-1, dim)).reshape(n_el, n_qp, *self.B.shape[1:2] * 2)
        self.D = D
        w = mesh.qp_weights * mesh.jacobian_det
        # k[e, q] = w_q det(J) B_q^T D_eq B_q
        k = np.einsum("q,qvi,eqvw,qwj->eqij", w, self.B, D, self.B)
        # exact symmetry makes assembled (i, j) and (j, i) sums bitwise equal
        self.kernels = 0.5 * (k + np.swapaxes(k, -1, -2))
        self.edofs = mesh.element_dofs
        free = mesh.free_dofs
        self.free = free
        full_to_free = -np.ones(mesh.n_dofs, dtype=np.int64)
        full_to_free[free] = np.arange(len(free))
        self.full_to_free = full_to_free
        self._full_pattern = self._pattern(np.arange(mesh.n_dofs), mesh.n_dofs)
        self._free_pattern = self._pattern(full_to_free, len(free))

    def _pattern(self, dof_map, n):
        rows = dof_map[self.edofs][:, :, None]
        cols = dof_map[self.edofs][:, None, :]
        rows, cols = np.broadcast_arrays(rows, cols)
        keep = (rows >= 0) & (cols >= 0)
        keys = (rows * n + cols)[keep]
        uniq, inverse = np.unique(keys, return_inverse=True)
        r, c = np.divmod(uniq, n)
        indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=n))])
        return keep, inverse, c, indptr, n, uniq

    def damage_at_qp(self, d):
        return self.mesh.shape_values @ np.asarray(d)[self.mesh.elements].T

    def check_damage(self, d):
        d = np.asarray(d, dtype=float)
        if d.shape != (self.mesh.n_nodes,):
            raise DomainError(f"damage field must have shape ({self.mesh.n_nodes},), got {d.shape}")
        if np.any(d < -BOUND_TOL) or np.any(d > self.material.omega1 + BOUND_TOL) or not np.all(np.isfinite(d)):
            raise DomainError(
                f"damage outside [0, omega1={self.material.omega1}] (min {d.min():.3g}, max {d.max():.3g})")
        return d

    def element_matrices(self, weights_qp):
        """Sum over quadrature of ``weights[e, q] * k[e, q]``."""
        return np.einsum("eq,eqij->eij", weights_qp, self.kernels)

    def _to_csr(self, ke, pattern):
        keep, inverse, cols, indptr, n, _ = pattern
        data = np.bincount(inverse, weights=ke[keep], minlength=len(cols))
        return sp.csr_matrix((data, cols, indptr), shape=(n, n))

    def dense_matrix(self, d):
        """Reduced ``K(d)`` as a dense array (no bounds check)."""
        keep, inverse, cols, _, n, keys = self._free_pattern
        dq = (self.mesh.shape_values @ np.asarray(d)[self.mesh.elements].T).T
        data = np.bincount(inverse, weights=self.element_matrices(1.0 - dq)[keep], minlength=len(cols))
        K = np.zeros(n * n)
        K[keys] = data
        return K.reshape(n, n)

    def factorize(self, d, check=True):
        """Factorization of the reduced ``K(d)`` with a ``solve`` method."""
        if check:
            d = self.check_damage(d)
        return Factorization(self, d)

    def matrix(self, d, eliminate=True, check=True):
        """Stiffness ``K(d)``; reduced to free dofs when ``eliminate``."""
        if check:
            d = self.check_damage(d)
        dq = (self.mesh.shape_values @ np.asarray(d)[self.mesh.elements].T).T
        ke = self.element_matrices(1.0 - dq)
        return self._to_csr(ke, self._free_pattern if eliminate else self._full_pattern)

    def weighted_matrix(self, w_nodal, eliminate=True):
        """``int w eps(u):E eps(v)`` for a nodal weight field ``w`` (no bounds check)."""
        wq = (self.mesh.shape_values @ np.asarray(w_nodal)[self.mesh.elements].T).T
        return self._to_csr(self.element_matrices(wq), self._free_pattern if eliminate else self._full_pattern)

    def coupling(self, u_full, dense=False):
        """Matrix ``Q`` with ``Q @ h = int h E eps(u) : eps(v)`` for nodal ``h`` (free rows).

        This is the right-hand side of the derivative of the equilibrium
        solution with respect to the damage field.
        """
        mesh = self.mesh
        ue = np.asarray(u_full).reshape(-1)[self.edofs]
        # ku[e, q, i] = (k_eq u_e)_i
        ku = np.einsum("eqij,ej->eqi", self.kernels, ue)
        vals = np.einsum("eqi,qa->eia", ku, mesh.shape_values)
        rows = np.broadcast_to(self.full_to_free[self.edofs][:, :, None], vals.shape)
        cols = np.broadcast_to(mesh.elements[:, None, :], vals.shape)
        keep = rows >= 0
        shape = (len(self.free), mesh.n_nodes)
        if dense:
            flat = rows[keep] * mesh.n_nodes + cols[keep]
            return np.bincount(flat, weights=vals[keep], minlength=shape[0] * shape[1]).reshape(shape)
        return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=shape)

    def strain(self, u_full):
        """Strain tensors at quadrature points, shape ``(n_el, n_qp, dim, dim)``."""
        ue = np.asarray(u_full).reshape(-1)[self.edofs]
        v = np.einsum("qvi,ei->eqv", self.B, ue)
        return _voigt_to_tensor(v, self.mesh.dim)

    def stress(self, u_full, d):
        ue = np.asarray(u_full).reshape(-1)[self.edofs]
        v = np.einsum("qvi,ei->eqv", self.B, ue)
        s = np.einsum("eqvw,eqw->eqv", self.D, v)
        dq = (self.mesh.shape_values @ np.asarray(d)[self.mesh.elements].T).T
        s = (1.0 - dq)[:, :, None] * s
        if self.mesh.dim == 2:
            s = np.concatenate([s[..., :2], 2 * s[..., 2:]], axis=-1)
        return _voigt_to_tensor(s, self.mesh.dim)


DENSE_LIMIT = 500


class Factorization:
    """Cholesky (dense, small systems) or sparse LU of the reduced stiffness."""

    def __init__(self, asm: StiffnessAssembler, d):
        n = len(asm.free)
        try:
            if n <= DENSE_LIMIT:
                self._chol = sla.cho_factor(asm.dense_matrix(d), lower=False, check_finite=False)
                self._lu = None
            else:
                self._chol = None
                self._lu = spla.splu(asm.matrix(d, check=False).tocsc())
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            raise NumericalError(f"stiffness factorization failed: {exc}") from exc

    def solve(self, b):
        if self._chol is not None:
            return sla.cho_solve(self._chol, b, check_finite=False)
        return self._lu.solve(np.asarray(b, dtype=float))


def assemble_stiffness(mesh: Mesh, mat: MaterialModel, d, eliminate=True):
    """Damage-degraded stiffness matrix (CSR).

    Raises :class:`DomainError` if ``d`` leaves ``[0, omega1]``.
    """
    return StiffnessAssembler(mesh, mat).matrix(d, eliminate=eliminate)


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Consistent vector mass matrix on all dofs (node-major, component-minor)."""
    w = mesh.qp_weights * mesh.jacobian_det
    me = np.einsum("q,qa,qb->ab", w, mesh.shape_values, mesh.shape_values)
    dim = mesh.dim
    ke = np.kron(me, np.eye(dim))
    edofs = mesh.element_dofs
    rows = np.repeat(edofs, edofs.shape[1], axis=1).ravel()
    cols = np.tile(edofs, (1, edofs.shape[1])).ravel()
    data = np.tile(ke.ravel(), len(edofs))
    return sp.csr_matrix((data, (rows, cols)), shape=(mesh.n_dofs, mesh.n_dofs))


@dataclass
class LoadSet:
    """Body force ``f(t, x)`` and traction ``tau(t, x)``.

    Each entry is a constant vector or a callable ``(t, x) -> (n, dim)``;
    the traction acts on the domain's traction faces only.
    """

    body_force: object = 0.0
    traction: object = 0.0

    @staticmethod
    def _eval(value, t, x):
        n, dim = x.shape
        if callable(value):
            out = np.asarray(value(t, x), dtype=float)
        else:
            out = np.asarray(value, dtype=float)
        return np.broadcast_to(out.reshape((-1, dim)) if out.ndim else out, (n, dim))

    def vector(self, mesh: Mesh, t: float) -> np.ndarray:
        """Consistent load vector on all dofs at time ``t``."""
        dim = mesh.dim
        F = np.zeros(mesh.n_dofs)
        xq = mesh.qp_coords()
        n_el, n_qp, _ = xq.shape
        f = self._eval(self.body_force, t, xq.reshape(-1, dim)).reshape(n_el, n_qp, dim)
        w = mesh.qp_weights * mesh.jacobian_det
        fe = np.einsum("q,qa,eqc->eac", w, mesh.shape_values, f).reshape(n_el, -1)
        np.add.at(F, mesh.element_dofs, fe)
        faces = mesh.spec.traction_faces
        if faces is None:
            faces = mesh.spec.gamma1
        for face in faces:
            F += self._traction_vector(mesh, face, t)
        return F

    def _traction_vector(self, mesh, face, t):
        dim = mesh.dim
        F = np.zeros(mesh.n_dofs)
        nodes = mesh.face_nodes[face]
        if dim == 1:
            tau = self._eval(self.traction, t, mesh.coords[nodes])
            F[nodes[0]] += tau[0, 0]
            return F
        pts, wts = _gauss(2)
        a, b = nodes[:-1], nodes[1:]
        xa, xb = mesh.coords[a], mesh.coords[b]
        length = np.linalg.norm(xb - xa, axis=1)
        for p, w in zip(pts, wts):
            na, nb = (1 - p) / 2, (1 + p) / 2
            x = na * xa + nb * xb
            tau = self._eval(self.traction, t, x)
            for c in range(dim):
                np.add.at(F, a * dim + c, w * length / 2 * na * tau[:, c])
                np.add.at(F, b * dim + c, w * length / 2 * nb * tau[:, c])
        return F


@dataclass
class DisplacementField:
    """Nodal displacement at one time, shape ``(n_nodes, dim)``; zero on clamped nodes."""

    mesh: Mesh
    u: np.ndarray

    @property
    def flat(self):
        return self.u.reshape(-1)


def solve_equilibrium(mesh: Mesh, mat: MaterialModel, d, load, assembler=None) -> DisplacementField:
    """Solve ``K(d) u = F`` on the free dofs.

    ``load`` is a full-dof load vector or a ``(LoadSet, t)`` pair.
    """
    asm = assembler or StiffnessAssembler(mesh, mat)
    if isinstance(load, tuple):
        loads, t = load
        F = loads.vector(mesh, t)
    else:
        F = np.asarray(load, dtype=float)
    K = asm.matrix(d)
    rhs = F[asm.free]
    uf = asm.factorize(d).solve(rhs)
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    res = np.linalg.norm(K @ uf - rhs) / scale
    if not res <= 1e-10:
        raise NumericalError(f"equilibrium residual {res:.3e} too large")
    u = np.zeros(mesh.n_dofs)
    u[asm.free] = uf
    return DisplacementField(mesh, u.reshape(-1, mesh.dim))


def strain_stress(mesh: Mesh, mat: MaterialModel, d, u, assembler=None):
    """Strain and stress tensors at quadrature points: ``sigma = (1 - d) E eps(u)``."""
    asm = assembler or StiffnessAssembler(mesh, mat)
    u = u.flat if isinstance(u, DisplacementField) else np.asarray(u).reshape(-1)
    if u.shape != (mesh.n_dofs,):
        raise ValueError(f"displacement must have {mesh.n_dofs} entries, got {u.shape}")
    return asm.strain(u), asm.stress(u, d)
