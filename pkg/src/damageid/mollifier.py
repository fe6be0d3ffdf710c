"""Mollified gradient: difference quotients with step ``mu`` of the FE displacement.

Two variants share one construction:

``difference``
    ``(u(x + mu e_i) - u(x)) / mu`` with exact FE interpolation.
``average``
    the same quotient applied to the box-window average
    ``u_bar(x) = |W(x)|^-1 int_W(x) u``, ``W(x) = (x + [-mu, mu]^N) ∩ Ω``.

Where ``x + mu e_i`` leaves the domain, the backward quotient
``(u(x) - u(x - mu e_i)) / mu`` is used. Both variants are tensor products
of one-dimensional sampling matrices, so the full operator is an explicit
sparse matrix and its transpose is exact.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .fem import Mesh

VARIANTS = ("difference", "average")


@dataclass(frozen=True)
class MollifierSpec:
    radius: float
    variant: str = "difference"

    def validate(self, mesh: Mesh = None):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}", "mollifier.variant")
        if not self.radius > 0:
            raise ConfigurationError("radius must be positive", "mollifier.radius")
        if mesh is None:
            return
        for h, L in zip(mesh.spacing, mesh.spec.extent):
            if self.radius < h * (1 - 1e-12):
                raise ConfigurationError(f"radius {self.radius:g} below mesh spacing {h:g}",
                                         "mollifier.radius")
            if 2 * self.radius > L * (1 + 1e-12):
                raise ConfigurationError(f"radius {self.radius:g} exceeds half the extent {L:g}",
                                         "mollifier.radius")


def _point_weights(nodes, pts):
    """Rows of linear-interpolation weights on a uniform 1D grid."""
    h = nodes[1] - nodes[0]
    n = len(nodes)
    k = np.clip(np.floor(np.round(pts / h, 12)).astype(np.int64), 0, n - 2)
    s = (pts - nodes[k]) / h
    rows = np.repeat(np.arange(len(pts)), 2)
    cols = np.column_stack([k, k + 1]).ravel()
    vals = np.column_stack([1 - s, s]).ravel()
    W = sp.csr_matrix((vals, (rows, cols)), shape=(len(pts), n))
    W.eliminate_zeros()
    return W


def _window_weights(nodes, pts, mu):
    """Rows of window-average weights ``|W|^-1 int_W phi_k`` on a uniform 1D grid."""
    n = len(nodes)
    L = nodes[-1]
    gp, gw = np.polynomial.legendre.leggauss(2)
    W = np.zeros((len(pts), n))
    for r, p in enumerate(pts):
        a, b = max(p - mu, 0.0), min(p + mu, L)
        for e in range(n - 1):
            lo, hi = max(a, nodes[e]), min(b, nodes[e + 1])
            if hi <= lo:
                continue
            x = (lo + hi) / 2 + (hi - lo) / 2 * gp
            s = (x - nodes[e]) / (nodes[e + 1] - nodes[e])
            W[r, e] += np.sum(gw * (1 - s)) * (hi - lo) / 2
            W[r, e + 1] += np.sum(gw * s) * (hi - lo) / 2
        W[r] /= b - a
    return sp.csr_matrix(W)


def _axis_operators(nodes, mu, variant):
    """Sampling matrix at the nodes and the one-sided difference matrix on one axis."""
    L = nodes[-1]
    forward = nodes + mu <= L * (1 + 1e-12)
    shifted = np.where(forward, nodes + mu, nodes - mu)
    sign = np.where(forward, 1.0, -1.0)
    if variant == "difference":
        S0 = sp.identity(len(nodes), format="csr")
        S1 = _point_weights(nodes, np.clip(shifted, 0.0, L))
    else:
        S0 = _window_weights(nodes, nodes, mu)
        S1 = _window_weights(nodes, np.clip(shifted, 0.0, L), mu)
    Delta = sp.diags(sign / mu) @ (S1 - S0)
    return S0, sp.csr_matrix(Delta)


class MollifiedGradient:
    """Sparse operator from nodal displacements to per-node mollified gradients.

    Output row ``node * N^2 + comp * N + dir`` holds ``D_dir^mu u_comp`` at the node.
    """

    def __init__(self, spec: MollifierSpec, mesh: Mesh):
        spec.validate(mesh)
        self.spec = spec
        self.mesh = mesh
        dim = mesh.dim
        axes = [np.linspace(0.0, L, n) for L, n in zip(mesh.spec.extent, mesh.shape)]
        ops = [_axis_operators(nodes, spec.radius, spec.variant) for nodes in axes]
        blocks = []
        for i in range(dim):
            D = None
            for a in range(dim):
                f = ops[a][1] if a == i else ops[a][0]
                D = f if D is None else sp.kron(D, f, format="csr")
            blocks.append(D)
        n = mesh.n_nodes
        if dim == 1:
            self.matrix = sp.csr_matrix(blocks[0])
        else:
            parts = []
            for comp in range(dim):
                for i in range(dim):
                    sel = np.zeros((dim * dim, dim))
                    sel[comp * dim + i, comp] = 1.0
                    parts.append(sp.kron(blocks[i], sel, format="csr"))
            self.matrix = sp.csr_matrix(sum(parts))
        self.matrix.sort_indices()
        self.n_out = n * dim * dim

    def apply(self, u):
        """Gradient samples: shape ``(n_nodes,)`` for N=1, ``(n_nodes, N, N)`` otherwise."""
        g = self.matrix @ np.asarray(u, dtype=float).reshape(-1)
        if self.mesh.dim == 1:
            return g
        return g.reshape(-1, self.mesh.dim, self.mesh.dim)

    def transpose(self, w):
        return self.matrix.T @ np.asarray(w, dtype=float).reshape(-1)


class StrainFeature:
    """Scalar process argument from gradient samples.

    For N=1 this is the gradient itself. For N=2 it is the strain norm
    ``sqrt(eps : eps)`` with ``eps = sym(grad)``, whose Jacobian with respect
    to the gradient entries is ``eps / |eps|`` (taken as 0 at ``eps = 0``).
    """

    def __init__(self, dim):
        self.dim = dim

    def __call__(self, grad):
        if self.dim == 1:
            return np.asarray(grad)
        eps = 0.5 * (grad + np.swapaxes(grad, -1, -2))
        return np.sqrt(np.einsum("...ij,...ij->...", eps, eps))

    def jacobian(self, grad):
        """Sparse ``(n_nodes, n_nodes * N^2)`` Jacobian for one time slice."""
        grad = np.asarray(grad)
        n = grad.shape[0]
        if self.dim == 1:
            return sp.identity(n, format="csr")
        eps = 0.5 * (grad + np.swapaxes(grad, -1, -2))
        y = np.sqrt(np.einsum("nij,nij->n", eps, eps))
        inv = np.divide(1.0, y, out=np.zeros_like(y), where=y > 0)
        vals = (eps * inv[:, None, None]).reshape(n, -1)
        k = self.dim * self.dim
        rows = np.repeat(np.arange(n), k)
        cols = np.arange(n * k)
        return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(n, n * k))


def mollified_gradient(spec, mesh, u, feature=True):
    """Per-node mollified gradient of the nodal field ``u``.

    With ``feature`` (default) N=2 output is reduced to the scalar strain
    feature; pass ``feature=False`` for the raw ``(n_nodes, 2, 2)`` samples.
    """
    g = MollifiedGradient(spec, mesh).apply(u)
    return StrainFeature(mesh.dim)(g) if feature else g


def mollified_transpose(spec, mesh, w):
    """Exact transpose of the linear gradient map: nodal field (flat, all dofs)."""
    return MollifiedGradient(spec, mesh).transpose(w)
