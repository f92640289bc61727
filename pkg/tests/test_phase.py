import math

import numpy as np
import pytest

from combmem.errors import DataError, EstimationError
from combmem.tomography import (CoherentState, LossRotationChannel, mean_field,
                                phase_shift_estimate, sample_quadratures)


def test_mean_field_estimate():
    b = sample_quadratures(CoherentState(2 - 1j), "uniform_scan", 20_000, seed=1)
    mf = mean_field(b)
    assert abs(mf.amplitude - (2 - 1j)) < 5 * mf.standard_error
    assert mf.standard_error < 0.02


def test_phase_shift_recovered():
    ch = LossRotationChannel(0.6, 1.0)
    ins = [CoherentState(3 * np.exp(1j * p)) for p in np.linspace(0, 2 * np.pi, 5)[:-1]]
    outs = [sample_quadratures(ch(s), "uniform_scan", 10_000, seed=[2, i])
            for i, s in enumerate(ins)]
    est = phase_shift_estimate([s.alpha for s in ins], outs)
    assert est.shift == pytest.approx(1.0, abs=0.02)
    assert est.circular_std < 0.05
    assert len(est.per_input) == 4


def test_phase_wraps_to_principal_branch():
    ch = LossRotationChannel(0.8, 3.1)
    ins = [CoherentState(4 * np.exp(1j * p)) for p in (0.0, 1.5, 3.0, 4.5)]
    outs = [sample_quadratures(ch(s), "uniform_scan", 10_000, seed=[5, i])
            for i, s in enumerate(ins)]
    est = phase_shift_estimate([s.alpha for s in ins], outs)
    assert -math.pi < est.shift <= math.pi
    assert abs(math.remainder(est.shift - 3.1, 2 * math.pi)) < 0.05


def test_vacuum_output_has_no_phase():
    b = sample_quadratures(CoherentState(0.0), "uniform_scan", 5000, seed=0)
    with pytest.raises(EstimationError):
        phase_shift_estimate([1, 1j, -1, -1j], [b, b, b, b])


def test_needs_four_input_phases():
    b = sample_quadratures(CoherentState(3.0), "uniform_scan", 5000, seed=0)
    with pytest.raises(DataError):
        phase_shift_estimate([3.0, 3.0, 3.0j], [b, b, b])


def test_single_lo_phase_rejected():
    b = sample_quadratures(CoherentState(3.0), 0.0, 5000, seed=0)
    with pytest.raises(DataError):
        mean_field(b)
