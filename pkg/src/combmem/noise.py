"""TLS saturation, thermal noise leakage and signal-to-noise estimates."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.constants import h as PLANCK, k as BOLTZMANN
from scipy.integrate import simpson

from .dynamics import default_step, echo_report, propagate
from .errors import AccuracyError, ValidationError
from .model import TWO_PI, MemoryDevice, Pulse, TimeGrid
from .spectral import _denominator, reflection_coefficient

MAX_QUADRATURE_POINTS = 4_000_000


@dataclass(frozen=True)
class TlsModel:
    """Power-dependent decay rate of a resonator with saturable TLS defects.

    ``gamma(n) = high_power_decay + tls_decay / (1 + n / critical_photon_number) ** exponent``
    """

    high_power_decay: float
    tls_decay: float = 0.0
    critical_photon_number: float = 1.0
    exponent: float = 0.5

    def __post_init__(self):
        if self.high_power_decay < 0 or self.tls_decay < 0:
            raise ValidationError("TLS model rates must be non-negative", key="tls_decay")
        if not self.critical_photon_number > 0:
            raise ValidationError("critical_photon_number must be positive",
                                  key="critical_photon_number")
        if not 0 < self.exponent <= 1:
            raise ValidationError("exponent must lie in (0, 1]", key="exponent")

    @classmethod
    def calibrated(cls, high_power_decay, decay_at, photon_number=1.0,
                   critical_photon_number=1.0, exponent=0.5):
        """Choose ``tls_decay`` so that ``gamma(photon_number) == decay_at``."""
        if decay_at < high_power_decay:
            raise ValidationError("low-power decay must not be below the high-power decay",
                                  key="decay_at")
        excess = (decay_at - high_power_decay) * (1 + photon_number / critical_photon_number) ** exponent
        return cls(high_power_decay, excess, critical_photon_number, exponent)

    @classmethod
    def constant(cls, decay):
        return cls(decay, 0.0)


def effective_decay(model: TlsModel, photon_number):
    """Decay rate (Hz) at mean photon number ``photon_number``; vectorised."""
    n = np.asarray(photon_number, dtype=float)
    if np.any(n < 0):
        raise ValidationError("photon_number must be non-negative", key="photon_number")
    g = model.high_power_decay + model.tls_decay / (1 + n / model.critical_photon_number) ** model.exponent
    return float(g) if np.ndim(g) == 0 else g


def thermal_occupation(frequency, temperature):
    """Bose-Einstein occupation ``1 / (exp(h f / k T) - 1)``; vectorised."""
    f = np.asarray(frequency, dtype=float)
    T = np.asarray(temperature, dtype=float)
    if np.any(T <= 0):
        raise ValidationError("temperature must be positive", key="temperature")
    with np.errstate(over="ignore"):
        n = 1.0 / np.expm1(PLANCK * f / (BOLTZMANN * T))
    return float(n) if np.ndim(n) == 0 else n


def bath_transfer(device: MemoryDevice, frequency):
    """Power transfer ``|T_j(f)|^2`` from each loss bath to the waveguide output.

    Row 0 is the common resonator's bath, rows ``1..N`` the internal ones.
    Together with ``|S11|^2`` the rows sum to one at every frequency when the
    network is passive.
    """
    f = np.asarray(frequency, dtype=float)
    w = TWO_PI * f
    kappa = TWO_PI * device.common.external_coupling
    D, pole = _denominator(device, f)
    D = np.where(pole, 1.0, D)
    out = np.empty((device.size + 1,) + f.shape)
    out[0] = kappa * TWO_PI * device.common.internal_decay / np.abs(D) ** 2
    for i, r in enumerate(device.internals, start=1):
        g = TWO_PI * r.coupling
        gam = TWO_PI * r.decay_rate
        den = 1j * (TWO_PI * r.frequency - w) + gam / 2
        # |g chi / D|^2 formed as one ratio to stay finite near sharp modes
        ratio = g / np.where(den == 0, 1.0, den * D)
        out[i] = kappa * gam * np.abs(ratio) ** 2
    # exactly on a lossless internal resonance the input is fully reflected
    out[:, pole] = 0.0
    return out


def _feature_width(device: MemoryDevice):
    c = device.common
    kap = c.external_coupling + c.internal_decay
    widths = [kap]
    for r in device.internals:
        if r.coupling == 0 or r.decay_rate == 0:
            continue
        det = r.frequency - c.frequency
        widths.append(r.decay_rate + 4 * r.coupling ** 2 * kap / (kap ** 2 + 4 * det ** 2))
    return min(widths)


def _frequency_grid(device, lo, hi, points=None):
    if points is None:
        step = _feature_width(device) / 10
        spacing = device.min_spacing()
        if spacing is not None:
            step = min(step, spacing / 200)
        points = int(math.ceil((hi - lo) / step)) + 1
    points = max(int(points), 201)
    if points > MAX_QUADRATURE_POINTS:
        raise AccuracyError(f"resolving this band needs {points} quadrature points")
    if points % 2 == 0:
        points += 1
    return np.linspace(lo, hi, points)


def mode_spectrum(pulse: Pulse, frame_frequency, frequency):
    """Normalised power spectrum of the pulse's temporal mode (density per Hz)."""
    sigma = pulse.fwhm / (2 * math.sqrt(math.log(2.0)))  # amplitude std in time
    df = np.asarray(frequency, dtype=float) - (frame_frequency + pulse.carrier_detuning)
    return 2 * math.sqrt(math.pi) * sigma * np.exp(-(TWO_PI * sigma * df) ** 2)


def noise_suppression(device: MemoryDevice, band=None, mode: Optional[Pulse] = None,
                      frame_frequency=None, points=None):
    """Thermal photons reaching the output temporal mode, per bath photon.

    The output mode defaults to a 115 ns Gaussian at the frame frequency
    (device centre). With every bath at occupation ``nbar`` the output mode
    carries ``S * nbar`` noise photons, ``S`` being this return value. The
    band must hold all but 1e-9 of the mode's spectral weight.
    """
    mode = Pulse() if mode is None else mode
    frame = device.center_frequency if frame_frequency is None else frame_frequency
    center = frame + mode.carrier_detuning
    sigma_f = 1.0 / (TWO_PI * mode.fwhm / (2 * math.sqrt(math.log(2.0))))
    if band is None:
        band = (center - 8 * sigma_f, center + 8 * sigma_f)
    lo, hi = band
    if not lo < hi:
        raise ValidationError("band must satisfy lo < hi", key="band")
    f = _frequency_grid(device, lo, hi, points)
    w = mode_spectrum(mode, frame, f)
    covered = simpson(w, x=f)
    if covered < 1 - 1e-9:
        raise AccuracyError(f"band holds only {covered:.6f} of the mode's spectral weight")
    total = np.sum(bath_transfer(device, f), axis=0)
    return float(min(max(simpson(w * total, x=f), 0.0), 1.0))


def bath_escape_fraction(device: MemoryDevice, band, points=None):
    """Share of the total bath noise flux that leaves through the waveguide.

    Flat-spectrum counterpart of :func:`noise_suppression`: integrates the
    bath-to-output transfer over ``band`` and divides by the summed bath
    rates. The band must exceed the comb span by ten external linewidths.
    """
    lo, hi = band
    f_all = np.concatenate([[device.common.frequency], device.frequencies])
    need = (f_all.max() - f_all.min()) + 10 * device.common.external_coupling
    if hi - lo < need * (1 - 1e-12) or lo > f_all.min() or hi < f_all.max():
        raise AccuracyError("band must cover the comb plus ten external linewidths")
    rates = TWO_PI * (device.common.internal_decay + np.sum(device.decay_rates))
    if rates == 0:
        return 0.0
    f = _frequency_grid(device, lo, hi, points)
    total = np.sum(bath_transfer(device, f), axis=0)
    return float(min(max(simpson(total, x=f) * TWO_PI / rates, 0.0), 1.0))


def absorbed_fraction(device: MemoryDevice, mode: Optional[Pulse] = None, frame_frequency=None,
                      band=None, points=None):
    """``1 - int w |S11|^2``: share of the mode's energy that never returns."""
    mode = Pulse() if mode is None else mode
    frame = device.center_frequency if frame_frequency is None else frame_frequency
    center = frame + mode.carrier_detuning
    sigma_f = 1.0 / (TWO_PI * mode.fwhm / (2 * math.sqrt(math.log(2.0))))
    lo, hi = band if band is not None else (center - 8 * sigma_f, center + 8 * sigma_f)
    f = _frequency_grid(device, lo, hi, points)
    w = mode_spectrum(mode, frame, f)
    return float(1.0 - simpson(w * np.abs(reflection_coefficient(device, f)) ** 2, x=f))


@dataclass(frozen=True)
class NoiseBudget:
    suppression_factor: float
    thermal_occupation: float
    output_noise_photons: float
    snr: float
    efficiency: float = float("nan")
    decay_rate: float = float("nan")
    temperature: float = float("nan")

    def as_dict(self):
        return {
            "temperature_K": self.temperature,
            "suppression_factor": self.suppression_factor,
            "thermal_occupation": self.thermal_occupation,
            "output_noise_photons": self.output_noise_photons,
            "snr": self.snr if math.isfinite(self.snr) else "inf",
            "efficiency": self.efficiency,
            "decay_rate_hz": self.decay_rate,
        }


def _at_power(device: MemoryDevice, tls: TlsModel, photons, common_tls):
    gam = effective_decay(tls, photons)
    gam0 = effective_decay(common_tls if common_tls is not None else tls, photons)
    return device.with_uniform(decay_rate=gam, common_decay=gam0), gam


def _first_echo(device, pulse, group, frame):
    spacing = device.group_spacing(group) if np.sum(device.groups == group) > 1 \
        else device.min_spacing()
    tail = 4.0 / (device.min_spacing() or spacing)
    grid = TimeGrid.around(pulse, tail, default_step(device))
    traj = propagate(device, pulse, grid, frame_frequency=frame)
    return echo_report(traj, spacing, 1).energy_efficiency


def _budget_parts(device, tls, stored_photons, pulse, group, common_tls):
    if not stored_photons > 0:
        raise ValidationError("stored_photons must be positive", key="stored_photons")
    dev, gam = _at_power(device, tls, stored_photons, common_tls)
    pulse = Pulse(mean_photon_number=stored_photons) if pulse is None \
        else replace(pulse, mean_photon_number=stored_photons)
    frame = dev.group_center(group) if group in set(dev.groups) else dev.center_frequency
    eta = _first_echo(dev, pulse, group, frame)
    supp = noise_suppression(dev, mode=pulse, frame_frequency=frame)
    return eta, supp, gam, frame


def _budget(eta, supp, gam, frame, temperature, stored_photons):
    nbar = thermal_occupation(frame, temperature)
    noise = supp * nbar
    snr = math.inf if noise == 0 else eta * stored_photons / noise
    return NoiseBudget(supp, nbar, noise, snr, eta, gam, float(temperature))


def snr_estimate(device: MemoryDevice, tls: TlsModel, temperature, stored_photons,
                 pulse: Optional[Pulse] = None, group=0, common_tls: Optional[TlsModel] = None
                 ) -> NoiseBudget:
    """Signal-to-noise ratio of a retrieved pulse of ``stored_photons`` photons.

    Every resonator takes the TLS decay rate at that photon number (the
    common resonator uses ``common_tls`` when given). The signal is the
    first-echo energy, the noise the thermal photons leaking into the same
    temporal mode; ``snr`` is ``inf`` when there is no noise.
    """
    parts = _budget_parts(device, tls, stored_photons, pulse, group, common_tls)
    return _budget(*parts, temperature, stored_photons)


def temperature_sweep(device: MemoryDevice, tls: TlsModel, temperatures: Sequence[float],
                      stored_photons=1.0, pulse=None, group=0, common_tls=None):
    parts = _budget_parts(device, tls, stored_photons, pulse, group, common_tls)
    return [_budget(*parts, T, stored_photons) for T in temperatures]


def write_sweep_csv(budgets, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["temperature_K", "nbar", "suppression", "snr"])
        for b in budgets:
            w.writerow([repr(b.temperature), repr(b.thermal_occupation),
                        repr(b.suppression_factor),
                        repr(b.snr) if math.isfinite(b.snr) else "inf"])
