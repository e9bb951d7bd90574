import subprocess
import sys
from pathlib import Path

import pytest

from acoustic_lab import config as config_mod
from acoustic_lab.cli import CHECKS, main
from acoustic_lab.errors import ConfigError
from acoustic_lab.io_formats import read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMALL = (CONFIGS / "small.cfg").read_text()


@pytest.fixture(autouse=True)
def _cache(tmp_path_factory, monkeypatch):
    monkeypatch.setenv("ACOUSTIC_LAB_CACHE", str(tmp_path_factory.getbasetemp() / "opcache"))


def _write(tmp_path, extra="", base=SMALL, name="run.cfg"):
    p = tmp_path / name
    p.write_text(base + "\n" + extra + "\n")
    return str(p)


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# -- config ------------------------------------------------------------------------

def test_roundtrip_and_defaults():
    cfg = config_mod.parse(SMALL)
    again = config_mod.parse(config_mod.serialize(cfg))
    assert again == cfg and again.digest() == cfg.digest()
    assert config_mod.parse("").solver.epsilons == (0.02, 0.01, 0.005, 0.0025)


def test_hash_ignores_io_paths():
    a = config_mod.parse(SMALL)
    assert a.updated(io__out="elsewhere", io__jobs=3).digest() == a.digest()
    assert a.updated(solver__dt=0.01).digest() != a.digest()


@pytest.mark.parametrize(
    "text",
    ["nonsense", "solver.bogus = 1", "weird.key = 1", "solver.dt = abc", "solver.epsilons = 0.01, 0.02",
     "solver.epsilon = 0.5", "io.jobs = 0", "diagnostics.tol_sym = -1"],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        config_mod.parse(text)


def test_missing_file(capsys, tmp_path):
    code, _, err = _run(capsys, "check", "--config", str(tmp_path / "nope.cfg"))
    assert code == 2 and "ConfigError" in err


# -- commands ----------------------------------------------------------------------

def test_check_list(capsys, tmp_path):
    code, out, _ = _run(capsys, "check", "--list", "--config", _write(tmp_path))
    assert code == 0 and out.split() == list(CHECKS)
    code, _, _ = _run(capsys, "simulate", "--list", "--config", _write(tmp_path))
    assert code == 2


def test_check_suite_passes(capsys, tmp_path):
    code, out, _ = _run(capsys, "check", "--config", _write(tmp_path), "--out", str(tmp_path / "o"))
    assert code == 0, out
    for name in CHECKS:
        assert f"PASS {name}" in out


def test_small_box_fails_mass_check(capsys, tmp_path):
    base = "grid.V_max = 2.0\ngrid.counts = 8, 8, 8\n"
    code, out, _ = _run(capsys, "check", "--config", _write(tmp_path, base=base))
    assert code == 1
    assert "FAIL grid-moments (moment mass" in out
    assert "FAIL L-symmetry (skipped" in out


def test_gamma_out_of_range(capsys, tmp_path):
    code, _, err = _run(capsys, "assemble", "--config", _write(tmp_path, "kernel.gamma = 2.0"),
                        "--out", str(tmp_path / "o"))
    assert code == 1
    assert err.strip() == "GammaOutOfRange: gamma=2.0 must lie in (-3, 1]"


def test_assemble_uses_cache(capsys, tmp_path, caplog):
    cfg = _write(tmp_path)
    code, out1, _ = _run(capsys, "assemble", "--config", cfg, "--out", str(tmp_path / "a"))
    assert code == 0 and "PASS coercivity" in out1
    with caplog.at_level("INFO", logger="acoustic_lab"):
        code, out2, _ = _run(capsys, "assemble", "--config", cfg, "--out", str(tmp_path / "b"), "-v")
    assert code == 0 and "cache hit" in caplog.text
    # same metrics either way
    assert out1.splitlines()[:8] == out2.splitlines()[:8]
    assert (tmp_path / "a" / "assemble_report.txt").exists()


def test_simulate_outputs_and_determinism(capsys, tmp_path):
    cfg = _write(tmp_path)
    outs = []
    for d in ("r1", "r2"):
        code, out, _ = _run(capsys, "simulate", "--config", cfg, "--out", str(tmp_path / d))
        assert code == 0, out
        assert "PASS invariant-drift" in out and "PASS l2-monotone" in out
        outs.append(tmp_path / d)
    # the manifest also records wall time, so only the data files are compared
    for name in ("energy.csv", "hydro_00000.csv", "hydro_00005.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    header, rows, comments = read_csv(outs[0] / "energy.csv")
    assert header[:3] == ["t", "E", "D"] and len(rows) == 6
    assert comments[0].startswith("config_hash = ")
    manifest = (outs[0] / "manifest.txt").read_text()
    assert "config_hash" in manifest and "grid_hash" in manifest


def test_simulate_t_end_zero(capsys, tmp_path):
    code, out, _ = _run(capsys, "simulate", "--config", _write(tmp_path, "solver.t_end = 0"),
                        "--out", str(tmp_path / "o"))
    assert code == 0 and "snapshots = 1" in out
    _, rows, _ = read_csv(tmp_path / "o" / "energy.csv")
    assert len(rows) == 1


def test_simulate_rejects_bump(capsys, tmp_path):
    code, _, err = _run(capsys, "simulate", "--config", _write(tmp_path, "solver.initial = bump"),
                        "--out", str(tmp_path / "o"))
    assert code == 1 and "InadmissibleInitialData" in err


def test_sweep_small(capsys, tmp_path):
    extra = "solver.epsilons = 0.02, 0.01\nsolver.dt = 0.001\nsolver.initial = sound\ndiagnostics.t_probe = 0.1"
    code, out, _ = _run(capsys, "sweep", "--config", _write(tmp_path, extra + "\nsolver.amplitude = 1.0\ngrid.N_x = 8"),
                        "--out", str(tmp_path / "o"), "--jobs", "2")
    assert "PASS error-monotone" in out and "PASS micro-monotone" in out
    assert "fitted_order = " in out
    header, rows, comments = read_csv(tmp_path / "o" / "sweep.csv")
    assert len(rows) == 2 and any(c.startswith("fitted_order") for c in comments)


def test_sweep_single_eps_and_zero_amplitude(capsys, tmp_path, caplog):
    base = "solver.dt = 0.01\ndiagnostics.t_probe = 0.1\ngrid.N_x = 8\n"
    with caplog.at_level("WARNING", logger="acoustic_lab"), pytest.warns(UserWarning, match="single epsilon"):
        code, out, _ = _run(capsys, "sweep", "--config", _write(tmp_path, base + "solver.epsilons = 0.02"),
                            "--out", str(tmp_path / "a"))
    assert code == 0 and "fitted_order = none" in out and "single epsilon" in caplog.text
    code, out, _ = _run(capsys, "sweep", "--config",
                        _write(tmp_path, base + "solver.epsilons = 0.02, 0.01\nsolver.amplitude = 0"),
                        "--out", str(tmp_path / "b"))
    assert code == 0 and "PASS zero-error" in out


def test_acoustic_command(capsys, tmp_path):
    code, out, _ = _run(capsys, "acoustic", "--config", _write(tmp_path), "--out", str(tmp_path / "o"))
    assert code == 0 and "PASS acoustic-energy" in out
    assert (tmp_path / "o" / "acoustic_fourier_000.csv").exists()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "acoustic_lab.cli", "check", "--list", "--config", _write(tmp_path)],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and "L-symmetry" in r.stdout
