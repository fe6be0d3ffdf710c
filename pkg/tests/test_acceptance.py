"""Acceptance criteria, one test each.

Every test records a ``criterion N: PASS|FAIL`` line (printed in the run
summary) before asserting. Run directly with ``python3 tests/test_acceptance.py``.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from damageid import experiment
from damageid.cli import main
from damageid.damage import TimeGrid, check_bounds, integrate_damage
from damageid.fem import DomainSpec, LoadSet, MaterialModel, build_mesh
from damageid.forward import ForwardModel, coupled_march
from damageid.mollifier import MollifierSpec
from damageid.process import DamageProcess, ProcessBasis

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_c01_damage_ode_oracle(acceptance):
    def exact(t):
        return 1.0 - np.sqrt(1.0 - 0.5 * t)

    errs = []
    for M in (1000, 2000, 4000):
        grid = TimeGrid(1.0, M)
        d = integrate_damage(grid, [0.0], np.full((M + 1, 1), 0.25), 1.0, 0.0, 0.5).values[:, 0]
        errs.append(np.abs(d - exact(grid.times)).max())
    slopes = np.log2(np.array(errs[:-1]) / errs[1:])
    ok = errs[0] <= 1e-6 and np.all(np.abs(slopes - 2.0) <= 0.1)
    acceptance(1, ok, f"error at dt=1e-3 {errs[0]:.2e}, halving slopes {np.round(slopes, 3).tolist()}")
    assert ok


def test_c02_bound_preservation(acceptance):
    rng = np.random.default_rng(2024)
    violations, configs = 0, 0
    meshes = {1: build_mesh(DomainSpec(1, (1.0,), (16,))),
              2: build_mesh(DomainSpec(2, (1.0, 1.0), (4, 4), traction_faces=("right",)))}
    for k in range(100):
        dim = 1 if k % 4 else 2
        mesh = meshes[dim]
        alpha = rng.uniform(1.0, 3.0)
        omega0 = rng.uniform(0.0, 0.2)
        omega1 = rng.uniform(omega0 + 0.1, 0.8)
        ybar = rng.uniform(1.0, 5.0)
        mat = MaterialModel(alpha=alpha, omega0=omega0, omega1=omega1, ybar=ybar, horizon=1.0)
        basis = ProcessBasis(1.0, mesh.spec.extent, 2, (2,) * dim, 6, ybar)
        g = DamageProcess(basis, rng.uniform(0, mat.g_max, basis.shape), mat.g_max)
        f, tau = rng.uniform(-2, 2, (2, dim))
        loads = LoadSet(lambda t, x, f=f: t * f, lambda t, x, tau=tau: t * tau)
        d0 = rng.uniform(0.0, omega0, mesh.n_nodes)
        model = ForwardModel(mesh, mat, MollifierSpec(0.25), TimeGrid(1.0, 8), loads, d0)
        violations += len(check_bounds(model.solve(g).damage))
        configs += 1
    ok = violations == 0 and configs == 100
    acceptance(2, ok, f"{configs} random configurations, {violations} bound violations")
    assert ok


def test_c03_picard_matches_coupled_oracle(twin_cfg, picard_cfg, acceptance):
    model = twin_cfg.forward_model()
    g = twin_cfg.truth()
    st = model.solve(g)
    same_grid = np.abs(st.d - coupled_march(model, g, substeps=1)).max()
    # against a 100x refined oracle on the smaller case
    pm = picard_cfg.forward_model()
    pg = picard_cfg.truth()
    ps = pm.solve(pg)
    refined = np.abs(ps.d - coupled_march(pm, pg, substeps=100)).max()
    ok = same_grid <= 1e-6 and refined <= 1e-6 and st.sweeps <= 30 and ps.sweeps <= 30
    acceptance(3, ok, f"twin: {st.sweeps} sweeps, gap {same_grid:.1e}; "
                      f"refined oracle: {ps.sweeps} sweeps, gap {refined:.1e}")
    assert ok


def test_c04_contraction(twin_cfg, acceptance):
    lams = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
    q = experiment.contraction_study(twin_cfg, lams=lams, trials=10, seed=0)["q"]
    ok = bool(np.any(q < 1) and np.all(np.diff(q) <= 0))
    acceptance(4, ok, "q(lambda) " + ", ".join(f"{lam:g}: {v:.2e}" for lam, v in zip(lams, q)))
    assert ok


def test_c05_taylor_slopes(twin_cfg, acceptance):
    slopes = experiment.taylor_study(twin_cfg, trials=10, seed=0)["slopes"]
    ok = bool(np.all(np.abs(slopes - 2.0) <= 0.2))
    acceptance(5, ok, f"10 directions, slopes in [{slopes.min():.3f}, {slopes.max():.3f}]")
    assert ok


def test_c06_adjoint_identity(twin_cfg, acceptance):
    worst = experiment.adjoint_study(twin_cfg, trials=20, seed=0)["max"]
    ok = worst <= 1e-8
    acceptance(6, ok, f"20 pairs, max relative mismatch {worst:.2e}")
    assert ok


def test_c07_tangential_cone(twin_cfg, acceptance):
    res = experiment.cone_study(twin_cfg, scales=(1e-1, 1e-2, 1e-3), trials=50, seed=0)
    m = res["max_ratio"]
    ok = m[1e-3] <= 2 * m[1e-1]
    acceptance(7, ok, "max ratio " + ", ".join(f"{s:g}: {v:.3e}" for s, v in m.items()))
    assert ok


def test_c08_ill_posedness(twin_cfg, acceptance):
    sigma = experiment.spectrum_study(twin_cfg)["sigma"]
    n = twin_cfg.basis().size
    small = np.flatnonzero(sigma / sigma[0] <= 1e-3)
    k = int(small[0]) + 1 if len(small) else None
    spectrum_ok = k is not None and k <= n // 2
    semi = experiment.semiconvergence_study(twin_cfg, noise=0.05, max_iter=1500)
    e = semi["errors"]
    i = semi["argmin"]
    semi_ok = 0 < i < len(e) - 1 and e[-1] > e[i]
    ok = spectrum_ok and semi_ok
    acceptance(8, ok, f"sigma_k/sigma_1 <= 1e-3 first at k={k} of {n}; delta=5% error minimum "
                      f"{e[i]:.4f} at iteration {i} of {len(e) - 1} (final {e[-1]:.4f})")
    assert ok


def test_c09_twin_landweber(twin_cfg, acceptance):
    t0 = time.perf_counter()
    res = experiment.invert(twin_cfg, noise=0.01)
    elapsed = time.perf_counter() - t0
    model, _, meas, _, _ = experiment.inversion_setup(twin_cfg, 0.01)
    r = res.residuals
    tau = twin_cfg["landweber"]["tau"]
    ok = (res.stopped and res.stop_index <= 500 and r[-1] <= tau * meas.delta
          and bool(np.all(np.diff(r) <= 0)) and elapsed <= 900)
    acceptance(9, ok, f"stopped at iteration {res.stop_index}, residual {r[-1]:.3e} <= "
                      f"{tau * meas.delta:.3e}, monotone {bool(np.all(np.diff(r) <= 0))}, {elapsed:.0f} s")
    assert ok


def test_c10_determinism(tmp_path, monkeypatch, acceptance):
    monkeypatch.setenv("DAMAGEID_THREADS", "1")
    config = str(CONFIGS / "twin_1d.ini")
    runs = []
    for name in ("first", "second"):
        out = tmp_path / name
        common = ["--config", config, "--out", str(out), "--seed", "3", "--no-timing"]
        assert main(["forward", *common]) == 0
        assert main(["synthesize", *common]) == 0
        assert main(["invert", *common, "--max-iter", "20"]) == 0
        assert main(["diagnose", "adjoint", *common, "--trials", "3"]) == 0
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = runs[0].keys() == runs[1].keys() and all(runs[0][k] == runs[1][k] for k in runs[0])
    acceptance(10, same, f"{len(runs[0])} output files compared byte for byte")
    assert same


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
