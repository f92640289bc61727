import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from combmem import presets
from combmem.errors import AccuracyError, ValidationError
from combmem.noise import (NoiseBudget, TlsModel, absorbed_fraction, bath_escape_fraction,
                           bath_transfer, effective_decay, mode_spectrum, noise_suppression,
                           snr_estimate, temperature_sweep, thermal_occupation, write_sweep_csv)
from combmem.spectral import reflection_coefficient


def test_thermal_occupation_limits():
    f = 6e9
    hf_k = 6.62607015e-34 * f / 1.380649e-23
    assert thermal_occupation(f, 1e-3) == pytest.approx(0.0, abs=1e-100)
    assert thermal_occupation(f, 100.0) == pytest.approx(100.0 / hf_k - 0.5, rel=1e-4)
    assert thermal_occupation(f, 0.1) == pytest.approx(1 / math.expm1(hf_k / 0.1), rel=1e-12)
    with pytest.raises(ValidationError):
        thermal_occupation(f, 0.0)


def test_tls_model_saturates():
    tls = TlsModel(6e3, 200e3, 1.0, 0.5)
    assert effective_decay(tls, 0.0) == pytest.approx(206e3)
    n = np.logspace(-2, 8, 50)
    g = effective_decay(tls, n)
    assert np.all(np.diff(g) < 0)
    assert g[-1] == pytest.approx(6e3, rel=0.01)


def test_unitarity_of_scattering(chip_single_photon):
    f = np.linspace(5.93e9, 5.97e9, 4001)
    total = np.sum(bath_transfer(chip_single_photon, f), axis=0) \
        + np.abs(reflection_coefficient(chip_single_photon, f)) ** 2
    assert np.max(np.abs(total - 1)) < 1e-12


def test_mode_spectrum_normalised():
    p = presets.pulse()
    f = np.linspace(-50e6, 50e6, 200001)
    assert trapezoid(mode_spectrum(p, 0.0, f), f) == pytest.approx(1.0, abs=1e-10)


def test_suppression_equals_absorbed_fraction(chip_single_photon):
    frame = chip_single_photon.group_center(0)
    s = noise_suppression(chip_single_photon, frame_frequency=frame)
    a = absorbed_fraction(chip_single_photon, frame_frequency=frame)
    assert abs(s - a) < 1e-9


def test_lossless_device_has_no_noise(design):
    lossless = design.with_uniform(decay_rate=0.0, common_decay=0.0)
    assert noise_suppression(lossless) == 0.0


def test_narrow_band_rejected(design):
    with pytest.raises(AccuracyError):
        noise_suppression(design, band=(6e9 - 1e6, 6e9 + 1e6))
    with pytest.raises(AccuracyError):
        bath_escape_fraction(design, (5.9e9, 6.1e9))


def test_bath_escape_fraction_bounds(design):
    span = 10 * 281e6 + 30e6
    val = bath_escape_fraction(design, (6e9 - span, 6e9 + span))
    assert 0.0 < val <= 1.0


@given(st.floats(1e3, 1e6), st.floats(1.05, 5.0))
def test_suppression_monotone_in_decay(gamma, factor):
    dev = presets.design_device()
    lo = noise_suppression(dev.with_uniform(decay_rate=gamma, common_decay=gamma))
    hi = noise_suppression(dev.with_uniform(decay_rate=gamma * factor,
                                            common_decay=gamma * factor))
    assert 0.0 <= lo < hi <= 1.0


def test_snr_scales_with_photons_and_temperature(chip):
    tls = presets.tls_model()
    b1 = snr_estimate(chip, tls, 0.1, 1.0)
    b2 = snr_estimate(chip, tls, 0.2, 1.0)
    assert isinstance(b1, NoiseBudget)
    assert b1.snr > b2.snr
    assert b1.output_noise_photons == pytest.approx(b1.suppression_factor * b1.thermal_occupation)
    assert b1.snr == pytest.approx(b1.efficiency / b1.output_noise_photons)
    assert b1.decay_rate == pytest.approx(165e3)


def test_temperature_sweep_csv(tmp_path, chip):
    temps = np.geomspace(0.01, 1.0, 6)
    sweep = temperature_sweep(chip, TlsModel.constant(6e3), temps)
    nbar = [b.thermal_occupation for b in sweep]
    assert np.all(np.diff(nbar) > 0)
    p = tmp_path / "sweep.csv"
    write_sweep_csv(sweep, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "temperature_K,nbar,suppression,snr"
    assert len(lines) == 7
    assert sweep[0].as_dict()["snr"] in ("inf",) or math.isfinite(sweep[0].snr)
