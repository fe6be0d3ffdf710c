import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from damageid import kernels
from damageid.damage import DamageField, TimeGrid, check_bounds, damage_rhs, integrate_damage
from damageid.errors import ConfigurationError, DomainError, NumericalError

G_MAX = 0.25  # alpha=1, omega0=0, omega1=0.5, T=1


def exact(t):
    return 1.0 - np.sqrt(1.0 - 0.5 * t)


def test_rhs_values():
    assert damage_rhs(0.0, 0.25, 1.0) == 0.25
    assert damage_rhs(0.5, 0.25, 1.0) == 0.5
    assert np.all(damage_rhs(np.linspace(0, 0.5, 7), 0.0, 2.0) == 0)
    with pytest.raises(DomainError):
        damage_rhs(1.0, 0.1, 1.0)


def test_time_grid_validation():
    assert np.allclose(TimeGrid(2.0, 4).times, [0, 0.5, 1, 1.5, 2])
    assert np.isclose(TimeGrid(2.0, 4).trapezoid_weights.sum(), 2.0)
    with pytest.raises(ConfigurationError):
        TimeGrid(0.0, 4)
    with pytest.raises(ConfigurationError):
        TimeGrid(1.0, 0)


def test_zero_source_is_stationary():
    grid = TimeGrid(1.0, 10)
    d0 = np.array([0.0, 0.1, 0.2])
    f = integrate_damage(grid, d0, np.zeros((11, 3)), 1.0, omega0=0.2)
    assert np.array_equal(f.values, np.tile(d0, (11, 1)))


@pytest.mark.parametrize("backend", sorted(kernels.BACKENDS))
def test_closed_form_and_second_order(backend):
    errs = []
    for M in (250, 500, 1000, 2000):
        grid = TimeGrid(1.0, M)
        d = integrate_damage(grid, [0.0], np.full((M + 1, 1), 0.25), 1.0, backend=backend).values[:, 0]
        errs.append(np.abs(d - exact(grid.times)).max())
        assert d[-1] <= 0.5
    assert errs[2] <= 1e-6
    slopes = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(slopes - 2.0) < 0.1)


def test_backends_agree(rng):
    if "compiled" not in kernels.BACKENDS:
        pytest.skip("compiled extension not built")
    y = rng.uniform(0, G_MAX, (41, 30))
    d0 = rng.uniform(0, 0.1, 30)
    a = kernels.integrate_damage(d0, y, 0.025, 2.0, backend="python")
    b = kernels.integrate_damage(d0, y, 0.025, 2.0, backend="compiled")
    assert a[1:] == b[1:] == (-1, -1)
    assert np.allclose(a[0], b[0], rtol=0, atol=1e-15)


def test_input_validation():
    grid = TimeGrid(1.0, 4)
    with pytest.raises(DomainError):
        integrate_damage(grid, [0.0], np.full((5, 1), 0.3), 1.0)
    with pytest.raises(DomainError):
        integrate_damage(grid, [0.0], np.full((5, 1), -0.1), 1.0)
    with pytest.raises(DomainError):
        integrate_damage(grid, [0.1], np.zeros((5, 1)), 1.0, omega0=0.0)
    with pytest.raises(DomainError):
        integrate_damage(grid, [0.0], np.zeros((4, 1)), 1.0)


def test_newton_failure_reports_location():
    # out-of-range source forced past validation: the step cannot stay below 1
    grid = TimeGrid(1.0, 2)
    with pytest.raises(NumericalError, match="step 1, node 1"):
        integrate_damage(grid, [0.0, 0.0], np.array([[0, 0], [0, 5.0], [0, 5.0]]), 1.0, g_max=10.0,
                         omega1=0.99)


def test_check_bounds():
    grid = TimeGrid(1.0, 3)
    assert check_bounds(DamageField(grid, np.zeros((4, 2)))) == []
    vals = np.full((4, 2), 0.1)
    assert check_bounds(DamageField(grid, vals, omega0=0.1)) == []
    vals[2, 1] = 0.5 + 1e-3
    rep = check_bounds(DamageField(grid, vals, omega0=0.1))
    assert [r[:3] for r in rep if r[0] == "above_omega1"] == [("above_omega1", 2, 1)]
    vals = np.array([[0.0], [0.2], [0.1], [0.3]])
    rep = check_bounds(DamageField(grid, vals))
    assert rep == [("decreasing", 2, 0, pytest.approx(-0.1))]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.floats(1.0, 3.0), st.integers(0, 2 ** 31))
def test_random_sources_respect_bounds_and_order(M, alpha, seed):
    rng = np.random.default_rng(seed)
    omega0, omega1 = 0.1, 0.6
    grid = TimeGrid(1.0, M)
    g_max = (omega1 - omega0) * (1 - omega1) ** alpha
    y1 = rng.uniform(0, g_max, (M + 1, 5))
    y2 = np.minimum(y1 + rng.uniform(0, g_max, (M + 1, 5)), g_max)
    d0 = rng.uniform(0, omega0, 5)
    f1 = integrate_damage(grid, d0, y1, alpha, omega0, omega1)
    f2 = integrate_damage(grid, d0, y2, alpha, omega0, omega1)
    assert check_bounds(f1, tol=1e-12) == []
    assert np.all(f1.values <= f2.values + 1e-14)


def test_lipschitz_stable_under_refinement(rng):
    g_max = 0.4 * 0.5  # omega0=0.1, omega1=0.5
    consts = []
    for M in (16, 64, 256):
        grid = TimeGrid(1.0, M)
        worst = 0.0
        for _ in range(10):
            d0a, d0b = rng.uniform(0, 0.1, (2, 4))
            ya, yb = rng.uniform(0, g_max, (2, M + 1, 4))
            da = integrate_damage(grid, d0a, ya, 1.0, omega0=0.1).values
            db = integrate_damage(grid, d0b, yb, 1.0, omega0=0.1).values
            gap = np.abs(d0a - d0b).max() + np.abs(ya - yb).max()
            worst = max(worst, np.abs(da - db).max() / gap)
        consts.append(worst)
    assert max(consts) < 4.0
    assert max(consts) / min(consts) < 1.5
