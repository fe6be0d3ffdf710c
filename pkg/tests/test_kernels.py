import importlib.util
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from damageid import kernels

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


def load_bench():
    spec = importlib.util.spec_from_file_location("bench_kernels", BENCH)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_backend_selection_env():
    env = dict(os.environ, DAMAGEID_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from damageid import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in kernels.BACKENDS


def test_benchmark_backends_agree():
    rows = load_bench().run(repeat=1, quick=True)
    assert {r[1] for r in rows} == set(kernels.BACKENDS)
    assert all(r[4] <= 1e-14 for r in rows)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 2.5])
def test_integer_and_fractional_alpha_agree(alpha, rng):
    if "compiled" not in kernels.BACKENDS:
        pytest.skip("compiled extension not built")
    g_max = 0.5 * 0.5 ** alpha
    src = rng.uniform(0, g_max, (17, 9))
    a = kernels.integrate_damage(np.zeros(9), src, 1 / 16, alpha, backend="python")[0]
    b = kernels.integrate_damage(np.zeros(9), src, 1 / 16, alpha, backend="compiled")[0]
    assert np.allclose(a, b, rtol=0, atol=1e-15)
