from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np
import pytest

from delayconv.cli import main
from delayconv.config import ConfigError, RunConfig

SMALL = """
modes = 8
grid.m = 64
grid.N = 2
noise.modes = 8
run.paths = 20
run.ns = [0, 1]
run.holder_levels = 5
"""


def write_cfg(tmp_path: Path, text: str = SMALL, name: str = "cfg.toml") -> Path:
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path: Path) -> list[dict[str, str]]:
    with path.open() as fh:
        return list(csv.DictReader(fh))


def digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_config_round_trip_lossless():
    cfg = RunConfig(kernel_form="sampled", kernel_params=(1.0, 0.5, 0.25), kernel_rho=0.5,
                    noise_modes=32, seed=2**40 + 3, gammas=(0.3,))
    assert RunConfig.loads(cfg.dumps()) == cfg
    assert RunConfig.loads(RunConfig().dumps()) == RunConfig()
    custom = RunConfig(modes=3, eigen_kind="custom-list", eigen_values=(1.0, 2.5, 7.0))
    assert RunConfig.loads(custom.dumps()) == custom
    assert custom.model().eigen_kind == "custom-list"


def test_config_dotted_keys():
    cfg = RunConfig.loads('a1.c = 0.7\nkernel.form = "linear"\nkernel.params = [1.0, 0.5]\ndelay.r = 2.0\n')
    m = cfg.model()
    assert m.c1 == 0.7 and m.kernel.form == "linear" and m.r == 2.0
    assert cfg.grid().r == 2.0


@pytest.mark.parametrize("text", [
    "delay.r = -1.0", "a1.mu = 1.5", "grid.m = 0", "bogus = 1", "a1.gain = 2.0",
    "noise.decay = 1.0", 'kernel.form = "cubic"', "run.seed = -4", "modes = 3\nnoise.modes = 4",
    'eigenvalues.kind = "custom-list"\nmodes = 2\neigenvalues.values = [2.0, 1.0]', "grid.m = [",
])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        RunConfig.loads(text)


def test_help_lists_flags(capsys):
    assert main(["fundamental", "--help"]) == 0
    out = capsys.readouterr().out
    for flag in ("--config", "--out", "--seed", "--workers", "--dump-modes"):
        assert flag in out
    assert main(["mild", "--help"]) == 0
    assert "--datum" in capsys.readouterr().out


def test_usage_errors(tmp_path):
    assert main(["fundamental", "--bogus"]) == 2
    assert main(["nope"]) == 2
    assert main([]) == 2
    assert main(["fundamental", "--config", str(tmp_path / "missing.toml")]) == 2
    bad = write_cfg(tmp_path, "delay.r = -1.0\n")
    assert main(["fundamental", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_fundamental_writes_csvs(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "out"
    assert main(["fundamental", "--config", str(cfg), "--out", str(out), "--workers", "2"]) == 0
    rows = read_csv(out / "fundamental.csv")
    assert list(rows[0]) == ["mode_index", "lambda", "t", "g"]
    assert len(rows) == 8 * 129
    assert float(rows[0]["g"]) == 1.0
    fits = read_csv(out / "fits.csv")
    assert list(fits[0]) == ["estimate_name", "n", "gamma", "beta", "constant", "argmax_s", "argmax_t",
                             "refine_ratio", "diverged"]
    assert {r["estimate_name"] for r in fits} == {"thm21a", "thm21a_int", "thm21b", "lem31", "prop43"}
    assert all(r["diverged"] == "false" for r in fits)


def test_fundamental_numerical_failure(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "a2.c = 1e9\n")
    assert main(["fundamental", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_mild_zero_and_fundamental_columns(tmp_path):
    cfg = write_cfg(tmp_path)
    zero = tmp_path / "zero.toml"
    zero.write_text('phi0.scale = 0.0\nphi1.form = "zero"\n')
    out = tmp_path / "z"
    assert main(["mild", "--config", str(cfg), "--out", str(out), "--datum", str(zero), "--dump-modes"]) == 0
    rows = read_csv(out / "trajectory.csv")
    assert all(float(v) == 0.0 for r in rows for k, v in r.items() if k != "t")

    one = tmp_path / "one.toml"
    one.write_text('phi0.values = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]\nphi1.form = "zero"\n')
    out = tmp_path / "g"
    assert main(["mild", "--config", str(cfg), "--out", str(out), "--datum", str(one), "--dump-modes"]) == 0
    assert main(["fundamental", "--config", str(cfg), "--out", str(out)]) == 0
    g1 = [float(r["g"]) for r in read_csv(out / "fundamental.csv") if r["mode_index"] == "1"]
    y1 = [float(r["y_1"]) for r in read_csv(out / "trajectory.csv")]
    assert g1 == y1


def test_mild_residual_refinement(tmp_path, capsys):
    res = []
    for m in (128, 256):
        cfg = write_cfg(tmp_path, SMALL.replace("grid.m = 64", f"grid.m = {m}"), f"c{m}.toml")
        assert main(["mild", "--config", str(cfg), "--out", str(tmp_path / f"m{m}")]) == 0
        res.append(float(capsys.readouterr().out.split()[-1]))
    assert 3.5 < res[0] / res[1] < 4.5


def test_mild_bad_datum(tmp_path):
    cfg = write_cfg(tmp_path)
    bad = tmp_path / "bad.toml"
    bad.write_text('phi1.form = "spiky"\n')
    assert main(["mild", "--config", str(cfg), "--out", str(tmp_path / "o"), "--datum", str(bad)]) == 2


def test_simulate_deterministic_across_runs_and_workers(tmp_path):
    cfg = write_cfg(tmp_path)
    hashes = []
    for w in (1, 4, 1):
        out = tmp_path / f"s{len(hashes)}"
        assert main(["simulate", "--config", str(cfg), "--out", str(out), "--workers", str(w), "--seed", "99"]) == 0
        hashes.append(digest(out / "paths.csv"))
    assert len(set(hashes)) == 1
    rows = read_csv(tmp_path / "s0" / "paths.csv")
    assert list(rows[0]) == ["t", "path_id", "h_norm", "gamma_norm"]
    assert len(rows) == 20 * 129


def test_simulate_zero_noise(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "noise.b = 0.0\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "paths.csv")
    assert all(float(r["h_norm"]) == 0.0 for r in rows)


def test_moments_rows(tmp_path):
    cfg = write_cfg(tmp_path, SMALL.replace("run.paths = 20", "run.paths = 400"))
    assert main(["moments", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "moments.csv")
    assert list(rows[0]) == ["s", "t", "gamma", "quadrature_value", "mc_mean", "mc_stderr", "paths"]
    diag = [r for r in rows if r["s"] == r["t"]]
    assert diag and all(float(r["quadrature_value"]) == 0.0 and float(r["mc_mean"]) == 0.0 for r in diag)
    z = [abs(float(r["mc_mean"]) - float(r["quadrature_value"])) / float(r["mc_stderr"])
         for r in rows if r["s"] != r["t"]]
    assert np.mean(np.array(z) < 3) >= 0.9


def test_moments_single_mode_closed_form(tmp_path):
    cfg = write_cfg(tmp_path, "modes = 1\na1.c = 0.0\na2.c = 0.0\ngrid.m = 64\ngrid.N = 2\nrun.paths = 10\n"
                              "run.noise_gammas = [0.0]\n")
    assert main(["moments", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "moments.csv")
    for r in rows:
        s, t = float(r["s"]), float(r["t"])
        d = t - s
        q = 6 / np.pi**2
        expected = q * (-np.expm1(-2 * d) / 2 + np.expm1(-d) ** 2 * -np.expm1(-2 * s) / 2)
        assert float(r["quadrature_value"]) == pytest.approx(expected, rel=1e-10, abs=1e-300)


def test_verify_semigroup_only_passes(tmp_path):
    cfg = write_cfg(tmp_path, "a1.c = 0.0\na2.c = 0.0\ngrid.m = 512\ngrid.N = 2\nrun.paths = 100\nrun.ns = [0, 1]\n")
    out = tmp_path / "v"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    text = (out / "summary.txt").read_text()
    assert "overall: PASS" in text and "noise truncation" in text
    rows = read_csv(out / "report.csv")
    assert rows and all(r["passed"] == "true" for r in rows)


@pytest.mark.slow
def test_verify_default_passes_and_negative_control_fails(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--out", str(out), "--workers", "2"]) == 0
    assert main(["verify", "--out", str(tmp_path / "bad"), "--workers", "2"], bound_scale=0.5) == 1
    assert "overall: FAIL" in (tmp_path / "bad" / "summary.txt").read_text()
