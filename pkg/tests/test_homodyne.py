import math

import numpy as np
import pytest
from scipy import integrate, stats

from combmem.errors import ValidationError
from combmem.tomography import (CoherentState, DensityMatrix, LossRotationChannel, QuadratureBatch,
                                TomographyProtocol, cdf_table, coherent_state, quadrature_pdf,
                                sample_quadratures, simulate_runs)


def test_vacuum_density_is_gaussian():
    x = np.linspace(-5, 5, 101)
    p = quadrature_pdf(DensityMatrix.fock(0, 3), 1.3)(x)
    assert np.allclose(p, np.exp(-x ** 2) / math.sqrt(math.pi), atol=1e-14)


def test_single_photon_density():
    x = np.linspace(-5, 5, 101)
    p = quadrature_pdf(DensityMatrix.fock(1, 2), 0.2)(x)
    assert np.allclose(p, 2 * x ** 2 * np.exp(-x ** 2) / math.sqrt(math.pi), atol=1e-14)


@pytest.mark.parametrize("theta", [0.0, 0.7, 2.0])
def test_coherent_density_shift(theta):
    alpha = 0.9 + 0.4j
    rho = coherent_state(alpha, 25)
    dens = quadrature_pdf(rho, theta)
    mean = math.sqrt(2) * (alpha * np.exp(-1j * theta)).real
    x = np.linspace(-6, 6, 121)
    assert np.allclose(dens(x), np.exp(-(x - mean) ** 2) / math.sqrt(math.pi), atol=1e-10)
    assert dens.mean() == pytest.approx(mean, abs=1e-10)


def test_cdf_table_accuracy():
    rho = coherent_state(0.8 - 0.6j, 10).elements
    table = cdf_table(rho)
    pdf = quadrature_pdf(rho, 0.9)
    for x in (-1.5, 0.0, 0.7, 2.5):
        ref, _ = integrate.quad(pdf, -table.x[-1], x, epsabs=1e-13)
        assert abs(table.cdf(x, 0.9) - ref) < 1e-6


def test_vacuum_sample_statistics():
    b = sample_quadratures(DensityMatrix.fock(0, 2), "uniform_scan", 200_000, seed=3)
    assert abs(np.mean(b.values)) < 0.01
    assert abs(np.var(b.values) - 0.5) < 0.01
    assert np.all((b.phases >= 0) & (b.phases < 2 * math.pi))


def test_same_seed_same_samples():
    rho = coherent_state(0.5, 6)
    a = sample_quadratures(rho, "uniform_scan", 5000, seed=[1, 2])
    b = sample_quadratures(rho, "uniform_scan", 5000, seed=[1, 2])
    c = sample_quadratures(rho, "uniform_scan", 5000, seed=[1, 3])
    assert np.array_equal(a.values, b.values) and np.array_equal(a.phases, b.phases)
    assert not np.array_equal(a.values, c.values)


def test_single_photon_samples_follow_density():
    b = sample_quadratures(DensityMatrix.fock(1, 2), 0.0, 50_000, seed=5)
    cdf = lambda x: stats.norm.cdf(x, scale=math.sqrt(0.5)) \
        - x * np.exp(-x ** 2) / math.sqrt(math.pi)
    assert stats.kstest(b.values, cdf).pvalue > 1e-3


def test_gaussian_fast_path_matches_table():
    st_ = CoherentState(1.2 - 0.5j)
    a = sample_quadratures(st_, [0.3, 1.9], 40_000, seed=8, exact_gaussian=True)
    b = sample_quadratures(st_, [0.3, 1.9], 40_000, seed=9, exact_gaussian=False)
    for phase in (0.3, 1.9):
        pa, pb = a.values[a.phases == phase], b.values[b.phases == phase]
        assert stats.ks_2samp(pa, pb).pvalue > 1e-3


def test_large_amplitude_uses_exact_law():
    b = sample_quadratures(CoherentState(9.0), [0.0], 20_000, seed=1)
    assert np.mean(b.values) == pytest.approx(9 * math.sqrt(2), abs=0.02)
    assert np.var(b.values) == pytest.approx(0.5, abs=0.02)


def test_fixed_phases_cycle():
    b = sample_quadratures(DensityMatrix.fock(0, 1), [0.0, 1.0, 2.0], 7, seed=0)
    assert list(b.phases) == [0.0, 1.0, 2.0, 0.0, 1.0, 2.0, 0.0]


def test_batch_csv_roundtrip(tmp_path):
    b = sample_quadratures(DensityMatrix.fock(0, 1), "uniform_scan", 100, seed=0)
    p = tmp_path / "b.csv"
    b.to_csv(p)
    assert p.read_text().splitlines()[0] == "theta_rad,x"
    back = QuadratureBatch.from_csv(p)
    assert np.array_equal(back.phases, b.phases) and np.array_equal(back.values, b.values)


def test_protocol_validation():
    prot = TomographyProtocol.standard_scan()
    assert len(prot.amplitudes) == 61
    assert prot.amplitudes[0] == 0.0 and prot.amplitudes[-1] == pytest.approx(1.2)
    assert prot.samples_per_amplitude == 200_000 and prot.dim == 4
    with pytest.raises(ValidationError):
        TomographyProtocol((0.5, 0.1))
    with pytest.raises(ValidationError):
        TomographyProtocol((0.1,), samples_per_amplitude=10)
    with pytest.raises(ValidationError):
        TomographyProtocol((0.1,), phase_strategy="random")


def test_runs_independent_of_workers():
    prot = TomographyProtocol((0.0, 0.5, 1.0), samples_per_amplitude=2000)
    ch = LossRotationChannel(0.6)
    a = simulate_runs(ch, prot, seed=4, workers=1)
    b = simulate_runs(ch, prot, seed=4, workers=3)
    for (x, bx), (y, by) in zip(a, b):
        assert x == y and np.array_equal(bx.values, by.values)
