import subprocess
import sys

import numpy as np
import pytest

from damageid import tables
from damageid.cli import main
from damageid.config import dump_config, load_config, parse_config, truth_process
from damageid.errors import ConfigurationError

SMALL = """
[domain]
elements = 16
[time]
steps = 8
[material]
ybar = 3.0
[mollifier]
radius = 0.125
[process]
n_t = 2
n_x = 2
n_y = 6
[landweber]
max_iter = 20
[experiment]
trials = 2
"""


@pytest.fixture
def small_ini(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL, encoding="utf-8")
    return path


def test_defaults_and_round_trip():
    cfg = parse_config(SMALL)
    assert cfg["domain"]["elements"] == (16,)
    assert cfg["material"]["omega1"] == 0.5
    assert cfg["mollifier"]["radius"] == 0.125
    again = parse_config(dump_config(cfg))
    assert again.values == cfg.values
    assert again.hash() == cfg.hash()


def test_auto_radius_is_two_cells():
    cfg = parse_config("[domain]\nelements = 32\n")
    assert cfg.mollifier_spec().radius == pytest.approx(1 / 16)


@pytest.mark.parametrize("text, key", [
    ("[domian]\n", "domian"),
    ("[material]\nomega2 = 0.3\n", "material.omega2"),
    ("[material]\nomega1 = 1.2\n", "material.omega1"),
    ("[material]\nalpha = 0.5\n", "material.alpha"),
    ("[time]\nsteps = many\n", "time.steps"),
    ("[loads]\nprofile = rmap\n", "loads.profile"),
])
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(ConfigurationError) as info:
        parse_config(text)
    assert info.value.key == key


def test_suggestions():
    with pytest.raises(ConfigurationError, match="did you mean 'omega1'"):
        parse_config("[material]\nomega_1 = 0.3\n")


def test_process_table_round_trip(tmp_path):
    cfg = parse_config(SMALL)
    basis = cfg.basis()
    g = truth_process("smooth-step", basis, cfg.material().g_max)
    path = tables.write_process(tmp_path / "g.csv", g, cfg.hash())
    back = tables.read_process(path, basis, g.g_max)
    assert np.array_equal(back.coeffs, g.coeffs)
    same = truth_process(f"file:{path}", basis, g.g_max)
    assert np.array_equal(same.coeffs, g.coeffs)
    _, _, footer = tables.read_table(path)
    assert footer["config-hash"] == cfg.hash()


def test_cli_forward_synthesize_invert(small_ini, tmp_path, capsys):
    out = tmp_path / "run"
    common = ["--config", str(small_ini), "--out", str(out), "--no-timing"]
    assert main(["forward", *common]) == 0
    assert main(["synthesize", *common]) == 0
    assert main(["invert", *common, "--data", str(out / "measurement.csv")]) == 0
    for name in ("state.csv", "measurement.csv", "iterations.csv", "process.csv", "effective.ini"):
        assert (out / name).exists()
    eff = load_config(out / "effective.ini")
    assert eff["experiment"]["timing"] is False
    cols, data, footer = tables.read_table(out / "iterations.csv")
    assert cols[0] == "iter" and np.all(data[:, 5] == 0)
    assert footer["config-hash"] == eff.hash()
    assert "invert:" in capsys.readouterr().out


def test_cli_outputs_are_bitwise_reproducible(small_ini, tmp_path):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["invert", "--config", str(small_ini), "--out", str(out), "--no-timing",
                     "--seed", "7", "--max-iter", "5"]) == 0
        runs.append((out / "iterations.csv").read_bytes() + (out / "process.csv").read_bytes())
    assert runs[0] == runs[1]


@pytest.mark.parametrize("which", ["adjoint", "spectrum", "contraction"])
def test_cli_diagnose(small_ini, tmp_path, which):
    out = tmp_path / which
    assert main(["diagnose", which, "--config", str(small_ini), "--out", str(out)]) == 0
    cols, data, _ = tables.read_table(out / f"diagnose_{which}.csv")
    assert len(data) > 0


def test_cli_exit_codes(small_ini, tmp_path, capsys):
    assert main([]) == 1
    assert main(["bogus"]) == 1
    assert main(["forward", "--config", str(tmp_path / "missing.ini")]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[material]\nomega1 = 2\n", encoding="utf-8")
    assert main(["forward", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert "material.omega1" in capsys.readouterr().err
    # a Picard budget of one sweep cannot converge: numerical failure
    tight = tmp_path / "tight.ini"
    tight.write_text(SMALL + "[forward]\nmax_sweeps = 1\n", encoding="utf-8")
    assert main(["forward", "--config", str(tight), "--out", str(tmp_path / "y")]) == 2


def test_console_module_entry(small_ini, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "damageid.cli", "forward", "--config", str(small_ini),
                           "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("forward:")
