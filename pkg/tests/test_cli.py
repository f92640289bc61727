import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from combmem.cli import run
from combmem.config import RunReport
from combmem.matching import analytic_matching_coupling
from combmem.spectral import SpectrumScan

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _report(out):
    return json.loads((Path(out) / "report.json").read_text())


def _cmd(*args):
    return run([str(a) for a in args])


def test_spectrum_dips_and_determinism(tmp_path):
    cfg = CONFIGS / "chip_spectrum.toml"
    assert _cmd("spectrum", "--config", cfg, "--output", tmp_path / "a") == 0
    assert _cmd("spectrum", "--config", cfg, "--output", tmp_path / "b") == 0
    a = (tmp_path / "a" / "spectrum.csv").read_bytes()
    assert a == (tmp_path / "b" / "spectrum.csv").read_bytes()
    scan = SpectrumScan.from_csv(tmp_path / "a" / "spectrum.csv")
    assert len(scan.local_minima()) == 8
    rep = _report(tmp_path / "a")
    assert rep["results"]["minima_count"] == 8
    assert rep["seed"] == 0 and rep["command"] == "spectrum"
    assert rep["config"]["spectrum"]["points"] == 40001
    RunReport.from_dict(rep)


def test_band_flags_override(tmp_path):
    assert _cmd("spectrum", "--config", CONFIGS / "chip_spectrum.toml", "--output", tmp_path,
                "--start", 5.93e9, "--stop", 5.96e9, "--points", 301) == 0
    rep = _report(tmp_path)
    assert rep["config"]["spectrum"]["start"] == 5.93e9
    assert len((tmp_path / "spectrum.csv").read_text().splitlines()) == 302


def test_negative_kappa_exit_2(tmp_path, capsys):
    text = (CONFIGS / "chip_spectrum.toml").read_text().replace("281e6", "-281e6")
    cfg = tmp_path / "bad.toml"
    cfg.write_text(text)
    assert _cmd("spectrum", "--config", cfg, "--output", tmp_path / "o") == 2
    assert "external_coupling" in capsys.readouterr().err


def test_syntax_error_names_line(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("seed = 1\n\n[pulse]\nfwhm = = 2\n")
    assert _cmd("spectrum", "--config", cfg, "--output", tmp_path / "o") == 2
    assert "line 4" in capsys.readouterr().err


def test_numerical_failure_exit_3(tmp_path):
    text = (CONFIGS / "chip_echo_group0.toml").read_text() + "\n[grid]\nstep = 1e-9\n"
    cfg = tmp_path / "coarse.toml"
    cfg.write_text(text)
    assert _cmd("echo", "--config", cfg, "--output", tmp_path / "o") == 3


def test_bad_flag_exit_2(tmp_path):
    with pytest.raises(SystemExit) as e:
        run(["spectrum", "--config", "x", "--output", str(tmp_path), "--points", "many"])
    assert e.value.code == 2


def test_echo_group1(tmp_path):
    assert _cmd("echo", "--config", CONFIGS / "chip_echo_group0.toml", "--output", tmp_path,
                "--horizon", 1.5e-6) == 0
    res = _report(tmp_path)["results"]
    first = res["echoes"][0]
    assert 270e-9 <= first["peak_time_s"] <= 295e-9
    assert 0.9 <= res["recovered_energy"] <= 1.0
    header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert header == "time_s,re_in,im_in,re_out,im_out,abs2_out"


def test_echo_zero_amplitude(tmp_path):
    text = (CONFIGS / "chip_echo_group0.toml").read_text().replace(
        "mean_photon_number = 1.0", "mean_photon_number = 0.0")
    cfg = tmp_path / "zero.toml"
    cfg.write_text(text)
    assert _cmd("echo", "--config", cfg, "--output", tmp_path / "o") == 0
    res = _report(tmp_path / "o")["results"]
    assert res["echoes"][0]["energy_efficiency"] == 0.0
    data = np.genfromtxt(tmp_path / "o" / "trajectory.csv", delimiter=",", names=True)
    assert not np.any(data["re_out"]) and not np.any(data["abs2_out"])


def test_match_free_g(tmp_path):
    assert _cmd("match", "--config", CONFIGS / "design_matching.toml", "--output", tmp_path,
                "--free", "g") == 0
    res = _report(tmp_path)["results"]
    g_an = analytic_matching_coupling(3e6, 281e6)
    assert abs(res["parameters"]["g"] - g_an) / g_an < 0.15
    assert json.loads((tmp_path / "fit.json").read_text())["parameters"] == res["parameters"]


def test_fit_self_generated(tmp_path):
    assert _cmd("echo", "--config", CONFIGS / "chip_echo_group0.toml", "--output", tmp_path / "e") == 0
    text = (CONFIGS / "chip_echo_group0.toml").read_text().replace("coupling = 12e6",
                                                               "coupling = 11.4e6")
    text = text[:text.index("[matching]")] + '[matching]\nfree = ["g"]\n' \
        'bounds = { g = [10e6, 14e6] }\n'
    cfg = tmp_path / "fit.toml"
    cfg.write_text(text)
    assert _cmd("fit", "--config", cfg, "--output", tmp_path / "f",
                "--data", tmp_path / "e" / "trajectory.csv") == 0
    res = _report(tmp_path / "f")["results"]
    assert abs(res["parameters"]["g"] - 12e6) / 12e6 < 1e-3
    assert res["start_parameters"]["g"] == 11.4e6


def test_fit_missing_data_exit_2(tmp_path):
    assert _cmd("fit", "--config", CONFIGS / "chip_echo_group0.toml", "--output", tmp_path,
                "--data", tmp_path / "nope.csv") == 2


def _small_tomo(tmp_path):
    text = (CONFIGS / "loss_channel.toml").read_text()
    text = text.replace("amplitude_step = 0.02", "amplitude_step = 0.1").replace(
        "samples_per_amplitude = 200000", "samples_per_amplitude = 20000")
    cfg = tmp_path / "tomo.toml"
    cfg.write_text(text)
    return cfg


def test_tomo_simulate_then_reconstruct(tmp_path):
    cfg = _small_tomo(tmp_path)
    out = tmp_path / "t"
    assert _cmd("tomo", "--mode", "simulate", "--config", cfg, "--output", out) == 0
    manifest = json.loads((out / "runs.json").read_text())["runs"]
    assert len(manifest) == 13
    assert (out / manifest[3]["file"]).read_text().startswith("theta_rad,x\n")
    tensors = []
    for _ in range(2):
        assert _cmd("tomo", "--mode", "reconstruct", "--config", cfg, "--output", out,
                    "--bootstrap", 0) == 0
        tensors.append((out / "process.json").read_bytes())
    assert tensors[0] == tensors[1]
    doc = json.loads(tensors[0])
    assert doc["dim"] == 4 and doc["diagonal"] is True


def test_tomo_reconstruct_without_runs_exit_2(tmp_path):
    cfg = _small_tomo(tmp_path)
    assert _cmd("tomo", "--mode", "reconstruct", "--config", cfg, "--output", tmp_path / "x") == 2


@pytest.mark.slow
def test_tomo_end_to_end_standard_scan(tmp_path):
    out = tmp_path / "e2e"
    assert _cmd("tomo", "--config", CONFIGS / "loss_channel.toml", "--output", out,
                "--bootstrap", 0) == 0
    rep = _report(out)
    prot = rep["results"]["protocol"]
    assert len(prot["amplitudes"]) == 61 and prot["amplitudes"][-1] == pytest.approx(1.2)
    assert prot["samples_per_amplitude"] == 200_000 and prot["dim"] == 4
    P = np.array(rep["results"]["population_matrix"])
    oracle = np.array(rep["results"]["oracle_population_matrix"])
    assert np.max(np.abs(np.diag(P) - np.diag(oracle))) < 0.05


def test_noise_sweep_and_comparison(tmp_path):
    assert _cmd("noise", "--config", CONFIGS / "chip_single_photon.toml",
                "--output", tmp_path / "hi", "--t-start", 0.01, "--t-stop", 1.0) == 0
    assert _cmd("noise", "--config", CONFIGS / "chip_echo_group0.toml",
                "--output", tmp_path / "lo") == 0
    hi = _report(tmp_path / "hi")["results"]["budget"]
    lo = _report(tmp_path / "lo")["results"]["budget"]
    assert hi["suppression_factor"] > lo["suppression_factor"]
    assert 10 <= hi["snr"] <= 1000
    rows = np.genfromtxt(tmp_path / "hi" / "noise_sweep.csv", delimiter=",", names=True)
    assert rows["temperature_K"][0] == pytest.approx(0.01)
    assert np.all(np.diff(rows["nbar"]) > 0)


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "combmem.cli", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0
    for sub in ("spectrum", "echo", "match", "fit", "tomo", "noise"):
        assert sub in out.stdout
