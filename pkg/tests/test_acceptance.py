"""Acceptance criteria 1-11, each at its stated tolerance.

Every test prints one ``CRITERION k: PASS|FAIL`` line; the lines are repeated
in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from combmem import presets
from combmem.dynamics import (default_step, echo_report, energy_balance_residual, propagate,
                              propagate_drive, recovered_energy)
from combmem.matching import (MatchingProblem, analytic_matching_coupling, optimize)
from combmem.model import TimeGrid
from combmem.noise import (TlsModel, effective_decay, noise_suppression, snr_estimate)
from combmem.spectral import reflection_coefficient, spectrum_scan
from combmem.tomography import (CoherentState, DensityMatrix, LossRotationChannel,
                                TomographyProtocol, memory_channel, mle_process,
                                phase_shift_estimate, sample_quadratures, simulate_runs)

RESULTS = []


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}"
        RESULTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return emit


def _echo(device, group, pulse=None, step=None):
    pulse = pulse or presets.pulse()
    grid = TimeGrid.around(pulse, 4 / device.min_spacing(), step or default_step(device))
    return propagate(device, pulse, grid, frame_frequency=device.group_center(group))


def test_criterion_01_echo_timing(report):
    # saturated TLS: decay at 10^6 photons
    gamma = effective_decay(presets.tls_model(), 1e6)
    chip = presets.chip_device(gamma)
    cases = [(0, 3.55e6, 10e-9, 277e-9), (1, 3.08e6, 15e-9, 310e-9)]
    ok, parts = True, []
    for group, spacing, tol, measured in cases:
        t0 = time.perf_counter()
        rep = echo_report(_echo(chip, group), spacing)
        dt = time.perf_counter() - t0
        lo, hi = rep.half_max_interval
        good = (abs(rep.peak_time - 1 / spacing) <= tol and lo <= measured <= hi and dt < 5)
        ok &= good
        parts.append(f"group {group + 1}: peak {rep.peak_time * 1e9:.1f} ns vs 1/spacing "
                     f"{1e9 / spacing:.1f} ns, FWHM [{lo * 1e9:.0f}, {hi * 1e9:.0f}] ns "
                     f"contains {measured * 1e9:.0f} ns, {dt:.2f} s")
    report(1, ok, "; ".join(parts))
    assert ok


def test_criterion_02_matched_efficiency(report):
    t0 = time.perf_counter()
    design = presets.design_device()
    problem = MatchingProblem(design, ("g",), {"g": (5e6, 20e6)},
                              objective="first_echo_efficiency", pulse=presets.pulse())
    fit = optimize(problem, tol=1e-6)
    g = fit.parameters["g"]
    dev = fit.device
    eff = {}
    for gamma in (6e3, 165e3):
        d = dev.with_uniform(decay_rate=gamma, common_decay=gamma)
        eff[gamma] = echo_report(_echo(d, 0), 3e6).energy_efficiency
    dt = time.perf_counter() - t0
    ok = eff[6e3] >= 0.90 and 0.65 <= eff[165e3] <= 0.80 and dt < 30
    report(2, ok, f"optimised g = {g / 1e6:.3f} MHz; efficiency {eff[6e3]:.3f} at 6 kHz "
                  f"(>= 0.90), {eff[165e3]:.3f} at 165 kHz "
                  f"(in [0.65, 0.80]); {dt:.1f} s")
    assert ok


def test_criterion_03_analytic_vs_numeric(report):
    design = presets.design_device()
    g_an = analytic_matching_coupling(3e6, 281e6)
    fit = optimize(MatchingProblem(design, ("g",), {"g": (5e6, 20e6)}))
    g_num = fit.parameters["g"]
    rel = abs(g_an - g_num) / g_num
    near_12 = max(abs(g_an - 12e6), abs(g_num - 12e6)) / 12e6
    ok = rel < 0.15 and near_12 < 0.15
    report(3, ok, f"analytic g = {g_an / 1e6:.3f} MHz, residual minimum {g_num / 1e6:.3f} MHz "
                  f"(rel. diff {rel:.3f} < 0.15); largest deviation from 12 MHz {near_12:.3f}")
    assert ok


def test_criterion_04_total_recovered_energy(report):
    traj = _echo(presets.chip_device(), 0, step=None)
    r = recovered_energy(traj, 1.5e-6)
    ok = 0.90 <= r <= 1.00
    report(4, ok, f"recovered fraction within 1.5 us = {r:.4f} (in [0.90, 1.00], target ~0.96)")
    assert ok


def test_criterion_05_spectral_properties(report):
    chip = presets.chip_device(presets.DECAY_SINGLE_PHOTON)
    lo, hi = chip.frequencies.min() - 300e6, chip.frequencies.max() + 300e6
    worst = float(np.max(spectrum_scan(chip, lo, hi, 100_000).magnitude()))
    lossless = chip.with_uniform(decay_rate=0.0, common_decay=0.0)
    dev_unit = float(np.max(np.abs(spectrum_scan(lossless, lo, hi, 100_000).magnitude() - 1)))
    # damped so that switch-on transients die out inside the 3 us window
    damped = chip.with_uniform(decay_rate=3e6, common_decay=3e6)
    frame = damped.center_frequency
    rng = np.random.default_rng(2024)
    freqs = rng.uniform(chip.frequencies.min() - 20e6, chip.frequencies.max() + 20e6, 20)
    grid = TimeGrid(0.0, 3e-6, default_step(damped))
    cw_err = 0.0
    for f in freqs:
        d = f - frame
        traj = propagate_drive(damped, grid, lambda t: np.exp(-2j * math.pi * d * t), frame)
        s_td = traj.output_field[-1] / traj.input_field[-1]
        cw_err = max(cw_err, abs(s_td - reflection_coefficient(damped, f)))
    ok = worst <= 1 + 1e-9 and dev_unit <= 1e-9 and cw_err < 1e-6
    report(5, ok, f"max |S11| = {worst:.12f}; lossless max ||S11|-1| = {dev_unit:.1e}; "
                  f"CW steady state vs closed form max error {cw_err:.1e} at 20 frequencies")
    assert ok


def test_criterion_06_conservation_and_linearity(report):
    chip = presets.chip_device()
    traj = _echo(chip, 0)
    bal = energy_balance_residual(traj, chip)
    c = 3.0 - 2.0j
    traj_c = _echo(chip, 0, presets.pulse().scaled(c))
    lin = float(np.max(np.abs(traj_c.output_field - c * traj.output_field))
                / np.max(np.abs(traj_c.output_field)))
    ok = bal < 1e-6 and lin < 1e-10
    report(6, ok, f"energy-balance residual {bal:.1e} (< 1e-6); scaling error {lin:.1e} (< 1e-10)")
    assert ok


@pytest.mark.slow
def test_criterion_07_tomography_oracle(report):
    t0 = time.perf_counter()
    protocol = TomographyProtocol.standard_scan()
    channel = LossRotationChannel(0.6)
    runs = simulate_runs(channel, protocol, seed=11)
    tensor = mle_process(runs, protocol.dim, bootstrap=50, seed=11)
    dt = time.perf_counter() - t0
    P = tensor.population_matrix()
    oracle = channel.population_matrix(protocol.dim)
    err = float(np.max(np.abs(P - oracle)))
    deficits = tensor.trace_deficits()
    boot = tensor.population_errors()
    ok = err < 0.05 and np.all(np.abs(deficits[:3]) < 0.02) and dt < 600
    report(7, ok, f"max |E - binomial| = {err:.4f} (< 0.05) over all 16 transfer elements; "
                  f"trace deficits {np.round(deficits, 4).tolist()} (last column exempt); "
                  f"bootstrap max std {np.max(boot):.4f}; {dt:.0f} s")
    assert ok


def test_criterion_08_memory_as_channel(report):
    chip = presets.chip_device(presets.DECAY_SINGLE_PHOTON)
    channel = memory_channel(chip, presets.pulse(), group=0)
    protocol = TomographyProtocol.standard_scan()
    runs = simulate_runs(channel, protocol, seed=8)
    tensor = mle_process(runs, protocol.dim, bootstrap=0)
    e11 = float(tensor.population_matrix()[1, 1])
    ok = 0.54 <= e11 <= 0.66
    report(8, ok, f"E11 = {e11:.4f} (in [0.54, 0.66]); mode "
                  f"transmissivity {channel.transmissivity:.4f}, phase {channel.phase:.3f} rad")
    assert ok


def test_criterion_09_phase_invariance(report):
    channel = LossRotationChannel(0.6, math.pi / 4)
    phases = np.arange(8) * 2 * math.pi / 8
    probes = [CoherentState(9 * np.exp(1j * p)) for p in phases]
    inputs = [sample_quadratures(s, "uniform_scan", 20_000, seed=[9, 0, i])
              for i, s in enumerate(probes)]
    outputs = [sample_quadratures(channel(s), "uniform_scan", 20_000, seed=[9, 1, i])
               for i, s in enumerate(probes)]
    est = phase_shift_estimate(inputs, outputs)
    ok = abs(est.shift - math.pi / 4) < 0.02 and est.circular_std < 0.05
    report(9, ok, f"shift {est.shift:.4f} rad vs pi/4 = {math.pi / 4:.4f} (+- 0.02), "
                  f"circular std {est.circular_std:.4f} (< 0.05) over {len(phases)} input phases")
    assert ok


def test_criterion_10_sampler_statistics(report):
    vac = DensityMatrix.fock(0, 1)
    a = sample_quadratures(vac, "uniform_scan", 1_000_000, seed=10)
    b = sample_quadratures(vac, "uniform_scan", 1_000_000, seed=10)
    mean, var = float(np.mean(a.values)), float(np.var(a.values))
    same = a.values.tobytes() == b.values.tobytes() and a.phases.tobytes() == b.phases.tobytes()
    ok = abs(mean) < 0.01 and abs(var - 0.5) < 0.01 and same
    report(10, ok, f"mean {mean:+.5f}, variance {var:.5f}, same-seed byte-identical: {same}")
    assert ok


def test_criterion_11_noise(report):
    chip = presets.chip_device()
    frame = chip.group_center(0)
    gammas = np.geomspace(1e3, 1e6, 12)
    supp = [noise_suppression(chip.with_uniform(decay_rate=g, common_decay=g),
                              frame_frequency=frame) for g in gammas]
    in_range = all(0.0 <= s <= 1.0 for s in supp)
    monotone = bool(np.all(np.diff(supp) > 0))
    s165 = noise_suppression(presets.chip_device(165e3), frame_frequency=frame)
    s6 = noise_suppression(presets.chip_device(6e3), frame_frequency=frame)
    design = presets.design_device()
    d165 = noise_suppression(design.with_uniform(decay_rate=165e3, common_decay=165e3))
    d6 = noise_suppression(design)
    within3 = lambda x, ref: ref / 3 <= x <= 3 * ref
    note = within3(s165, 0.14) and within3(s6, 0.006)
    snr_hot = snr_estimate(chip, presets.tls_model(), 0.1, 1.0).snr
    snr_warm = snr_estimate(chip, TlsModel.constant(6e3), 0.6, 1.0).snr
    dsnr_hot = snr_estimate(design, presets.tls_model(), 0.1, 1.0).snr
    dsnr_warm = snr_estimate(design, TlsModel.constant(6e3), 0.6, 1.0).snr
    snr_ok = within3(snr_hot, 100) and within3(snr_warm, 100)
    ok = in_range and monotone and snr_ok
    status = "pass-with-note" if note else "outside factor 3 of reference"
    report(11, ok, f"suppression in [0,1]: {in_range}, monotone in gamma: {monotone}; "
                   f"chip S(165 kHz) = {s165:.4f} vs ~0.14, S(6 kHz) = {s6:.4f} vs ~0.006 "
                   f"({status}; design {d165:.4f} / {d6:.4f}); SNR chip "
                   f"{snr_hot:.1f} (165 kHz, 100 mK), {snr_warm:.1f} (6 kHz, 600 mK) vs ~100 "
                   f"(design {dsnr_hot:.1f}, {dsnr_warm:.1f})")
    assert ok
