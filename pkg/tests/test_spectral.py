import math

import numpy as np
import pytest

from combmem.model import CombSpec, CommonResonatorParams, build_comb
from combmem.spectral import (SpectrumScan, coarse_reflection, reflection_coefficient,
                              response_denominator, spectrum_scan)


def test_bare_cavity_lorentzian():
    # single internal mode decoupled: S11 of an over-coupled cavity
    dev = build_comb(CombSpec(7e9, 1e6, 1, 0.0), CommonResonatorParams(6e9, 10e6, 2e6))
    kappa, gamma = 2 * math.pi * 10e6, 2 * math.pi * 2e6
    for df in (-5e6, 0.0, 3e6):
        w = 2 * math.pi * df
        expected = 1 - kappa / (-1j * w + (kappa + gamma) / 2)
        assert np.isclose(reflection_coefficient(dev, 6e9 + df), expected, rtol=1e-12)
    assert np.isclose(reflection_coefficient(dev, 6e9), 1 - 2 * 10 / 12)


def test_lossless_device_is_all_pass(design):
    lossless = design.with_uniform(decay_rate=0.0, common_decay=0.0)
    s = reflection_coefficient(lossless, np.linspace(5.95e9, 6.05e9, 20001))
    assert np.max(np.abs(np.abs(s) - 1)) < 1e-9


def test_passive_bound(chip_single_photon):
    s = spectrum_scan(chip_single_photon, 5.9e9, 6.1e9, 20001)
    assert np.max(s.magnitude()) <= 1 + 1e-9


def test_denominator_real_part_positive(chip):
    D = response_denominator(chip, np.linspace(5.9e9, 6.1e9, 1001))
    assert np.all(D.real > 0)


def test_chip_shows_one_dip_per_resonator(chip):
    c = chip.center_frequency
    scan = spectrum_scan(chip, float(np.min(chip.frequencies)) - 20e6,
                         float(np.max(chip.frequencies)) + 20e6, 40001)
    assert len(scan.local_minima()) == chip.size
    del c


def test_scan_csv_roundtrip(tmp_path, design):
    scan = spectrum_scan(design, 5.99e9, 6.01e9, 101)
    p = tmp_path / "s.csv"
    scan.to_csv(p)
    back = SpectrumScan.from_csv(p)
    assert np.array_equal(back.frequencies, scan.frequencies)
    assert np.array_equal(back.s11, scan.s11)
    assert p.read_text().splitlines()[0] == "frequency_hz,re_s11,im_s11,abs_s11,arg_s11"


def test_coarse_reflection_small_when_matched():
    from combmem.matching import analytic_matching_coupling
    g = analytic_matching_coupling(3e6, 281e6)
    dev = build_comb(CombSpec(6e9, 3e6, 40, g), CommonResonatorParams(6e9, 281e6))
    _, s = coarse_reflection(dev, 6e9 - 30e6, 6e9 + 30e6, 3e6)
    assert np.max(np.abs(s)) < 0.1
    weak = build_comb(CombSpec(6e9, 3e6, 40, g / 10), CommonResonatorParams(6e9, 281e6))
    _, s_weak = coarse_reflection(weak, 6e9 - 30e6, 6e9 + 30e6, 3e6)
    assert np.min(np.abs(s_weak)) > 0.8


def test_scan_rejects_bad_band(design):
    from combmem.errors import ValidationError
    with pytest.raises(ValidationError):
        spectrum_scan(design, 6.1e9, 6.0e9, 11)
