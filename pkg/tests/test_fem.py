import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from damageid.errors import ConfigurationError, DomainError
from damageid.fem import (DomainSpec, LoadSet, MaterialModel, StiffnessAssembler, assemble_stiffness,
                          build_mesh, mass_matrix, solve_equilibrium, strain_stress)

MAT = MaterialModel(youngs=1.0)


def bar(n, L=1.0):
    return build_mesh(DomainSpec(1, (L,), (n,)))


def test_bar_mesh_nodes_and_boundary():
    mesh = bar(2)
    assert np.allclose(mesh.coords[:, 0], [0.0, 0.5, 1.0])
    assert mesh.face_nodes["left"].tolist() == [0]
    assert mesh.face_nodes["right"].tolist() == [2]
    assert mesh.constrained.tolist() == [True, False, False]


def test_rectangle_counts_and_ordering():
    mesh = build_mesh(DomainSpec(2, (1.0, 1.0), (2, 2)))
    assert mesh.n_nodes == 9 and len(mesh.elements) == 4
    # lexicographic: x slowest
    order = np.lexsort((mesh.coords[:, 1], mesh.coords[:, 0]))
    assert order.tolist() == list(range(9))
    assert mesh.constrained.reshape(9, 2)[mesh.face_nodes["left"]].all()


@pytest.mark.parametrize("spec", [
    DomainSpec(1, (1.0,), (0,)),
    DomainSpec(1, (1.0,), (4,), gamma0=("left", "right")),
    DomainSpec(1, (1.0,), (4,), gamma0=()),
    DomainSpec(2, (1.0, 1.0), (2, 2), gamma0=("west",)),
    DomainSpec(3, (1.0, 1.0, 1.0), (1, 1, 1)),
])
def test_invalid_domains(spec):
    with pytest.raises(ConfigurationError):
        build_mesh(spec)


def test_full_stiffness_matches_hand_assembly():
    K = assemble_stiffness(bar(2), MAT, np.zeros(3), eliminate=False).toarray()
    assert np.array_equal(K, [[2, -2, 0], [-2, 4, -2], [0, -2, 2]])
    K5 = assemble_stiffness(bar(2), MAT, np.full(3, 0.5), eliminate=False).toarray()
    assert np.allclose(K5, K / 2, rtol=0, atol=1e-15)


def test_damage_out_of_bounds_rejected():
    with pytest.raises(DomainError):
        assemble_stiffness(bar(2), MAT, np.full(3, MAT.omega1 + 0.1))
    with pytest.raises(DomainError):
        assemble_stiffness(bar(2), MAT, np.full(3, -0.01))


def test_constant_stress_bar():
    mesh = bar(8)
    x = mesh.coords[:, 0]
    F = LoadSet(0.0, 1.0).vector(mesh, 0.0)
    u = solve_equilibrium(mesh, MAT, np.zeros(9), F).u[:, 0]
    assert np.allclose(u, x, atol=1e-14)
    u = solve_equilibrium(mesh, MAT, np.full(9, 0.5), F).u[:, 0]
    assert np.allclose(u, 2 * x, atol=1e-14)


def test_body_force_bar_exact_at_nodes():
    mesh = bar(10)
    x = mesh.coords[:, 0]
    u = solve_equilibrium(mesh, MAT, np.zeros(11), (LoadSet(1.0, 0.0), 0.0)).u[:, 0]
    assert np.allclose(u, x - x ** 2 / 2, atol=1e-14)
    # dense oracle
    asm = StiffnessAssembler(mesh, MAT)
    K = asm.matrix(np.zeros(11)).toarray()
    F = LoadSet(1.0, 0.0).vector(mesh, 0.0)[asm.free]
    assert np.allclose(u[1:], np.linalg.solve(K, F), atol=1e-14)


def test_strain_stress_values():
    mesh = bar(4)
    x = mesh.coords[:, 0]
    eps, sig = strain_stress(mesh, MAT, np.zeros(5), x)
    assert np.allclose(eps, 1) and np.allclose(sig, 1)
    eps, sig = strain_stress(mesh, MAT, np.full(5, 0.5), x)
    assert np.allclose(sig, 0.5)
    eps, sig = strain_stress(mesh, MAT, np.zeros(5), np.zeros(5))
    assert not eps.any() and not sig.any()
    with pytest.raises(ValueError):
        strain_stress(mesh, MAT, np.zeros(5), np.zeros(3))


def test_plane_strain_rigid_motions_and_symmetric_strain():
    mesh = build_mesh(DomainSpec(2, (1.0, 2.0), (3, 4)))
    K = assemble_stiffness(mesh, MAT, np.zeros(mesh.n_nodes), eliminate=False)
    x, y = mesh.coords.T
    for ux, uy in [(np.ones_like(x), 0 * x), (0 * x, np.ones_like(x)), (-y, x)]:
        u = np.column_stack([ux, uy]).ravel()
        assert np.abs(K @ u).max() < 1e-13
    u = np.column_stack([0.3 * x + 0.1 * y, 0.2 * y]).ravel()
    eps, sig = strain_stress(mesh, MAT, np.zeros(mesh.n_nodes), u)
    assert np.allclose(eps, [[0.3, 0.05], [0.05, 0.2]])
    assert np.allclose(sig, np.swapaxes(sig, -1, -2))
    lam, mu = MAT.lame_lambda, MAT.lame_mu
    tr = 0.5
    assert np.allclose(sig[..., 0, 0], lam * tr + 2 * mu * 0.3)
    assert np.allclose(sig[..., 0, 1], 2 * mu * 0.05)


def test_plate_uniaxial_traction():
    """Applied force balance and equilibrium residual for a clamped plate."""
    spec = DomainSpec(2, (2.0, 1.0), (6, 3), gamma0=("left",), traction_faces=("right",))
    mesh = build_mesh(spec)
    F = LoadSet(0.0, (1.0, 0.0)).vector(mesh, 0.0)
    # total applied force equals traction times edge length
    assert np.isclose(F[0::2].sum(), 1.0) and np.isclose(F[1::2].sum(), 0.0)
    d = np.full(mesh.n_nodes, 0.2)
    u = solve_equilibrium(mesh, MAT, d, F)
    K = assemble_stiffness(mesh, MAT, d)
    free = mesh.free_dofs
    assert np.linalg.norm(K @ u.flat[free] - F[free]) <= 1e-12 * np.linalg.norm(F)
    assert not u.flat[mesh.constrained].any()


def test_mass_matrix_integrates_constants():
    mesh = build_mesh(DomainSpec(2, (1.5, 2.0), (3, 5)))
    M = mass_matrix(mesh)
    one = np.zeros(mesh.n_dofs)
    one[0::2] = 1.0
    assert np.isclose(one @ M @ one, 3.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.floats(0.0, 0.5), st.floats(0.0, 0.5), st.integers(0, 2 ** 31))
def test_symmetry_and_monotone_degradation(n, lo, hi, seed):
    mesh = bar(n)
    rng = np.random.default_rng(seed)
    d1 = rng.uniform(0, min(lo, hi), n + 1)
    d2 = d1 + rng.uniform(0, abs(hi - lo), n + 1)
    d2 = np.minimum(d2, MAT.omega1)
    K1 = assemble_stiffness(mesh, MAT, d1)
    K2 = assemble_stiffness(mesh, MAT, d2)
    assert abs(K1 - K1.T).max() <= 1e-14 * abs(K1).max()
    v = rng.standard_normal(K1.shape[0])
    assert v @ K1 @ v >= v @ K2 @ v - 1e-12
    # coercivity bound relative to the undamaged operator
    K0 = assemble_stiffness(mesh, MAT, np.zeros(n + 1)).toarray()
    lmin = np.linalg.eigvalsh(K2.toarray()).min()
    assert lmin >= (1 - MAT.omega1) * np.linalg.eigvalsh(K0).min() * (1 - 1e-12)


def test_lipschitz_in_damage_and_linear_in_loads(rng):
    mesh = bar(16)
    F = LoadSet(1.0, 0.5).vector(mesh, 0.0)
    ratios = []
    for _ in range(20):
        d1, d2 = rng.uniform(0, 0.5, (2, 17))
        u1 = solve_equilibrium(mesh, MAT, d1, F).u
        u2 = solve_equilibrium(mesh, MAT, d2, F).u
        ratios.append(np.abs(u1 - u2).max() / np.abs(d1 - d2).max())
    assert max(ratios) < 10.0
    d = rng.uniform(0, 0.5, 17)
    ua = solve_equilibrium(mesh, MAT, d, F).u
    ub = solve_equilibrium(mesh, MAT, d, -3.0 * F).u
    assert np.allclose(ub, -3.0 * ua, rtol=1e-13, atol=1e-15)


def test_material_validation():
    for bad in [MaterialModel(alpha=0.5), MaterialModel(omega1=1.0), MaterialModel(omega0=0.6),
                MaterialModel(ybar=0.0), MaterialModel(horizon=-1.0)]:
        with pytest.raises(ConfigurationError):
            bad.validate()
    with pytest.raises(DomainError):
        MaterialModel(youngs=-1.0).elasticity(np.zeros((2, 1)))
    assert np.isclose(MaterialModel().g_max, 0.25)
