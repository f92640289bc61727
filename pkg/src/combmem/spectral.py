"""Stationary reflection spectrum of the comb memory."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError
from .model import TWO_PI, MemoryDevice

CSV_COLUMNS = ("frequency_hz", "re_s11", "im_s11", "abs_s11", "arg_s11")


def _denominator(device: MemoryDevice, frequency):
    f = np.asarray(frequency, dtype=float)
    c = device.common
    w = TWO_PI * f
    D = 1j * (TWO_PI * c.frequency - w) + TWO_PI * (c.external_coupling + c.internal_decay) / 2
    pole = np.zeros(np.shape(D), dtype=bool)
    for r in device.internals:
        g = TWO_PI * r.coupling
        if g == 0.0:
            continue
        den = 1j * (TWO_PI * r.frequency - w) + TWO_PI * r.decay_rate / 2
        hit = den == 0
        pole = pole | hit
        D = D + g * g / np.where(hit, 1.0, den)
    return D, pole


def response_denominator(device: MemoryDevice, frequency):
    """``D(w)`` in angular units: common-mode inverse susceptibility dressed by the comb.

    Infinite exactly on the resonance of a lossless internal mode.
    """
    D, pole = _denominator(device, frequency)
    D = np.where(pole, complex(np.inf, 0.0), D)
    return D if np.ndim(D) else complex(D)


def reflection_coefficient(device: MemoryDevice, frequency):
    """Complex ``S11`` at absolute frequency (Hz); vectorised over ``frequency``.

    Convention ``a_out = a_in - sqrt(kappa) a_0``, so a bare over-coupled
    cavity on resonance gives ``-1``.
    """
    kappa = TWO_PI * device.common.external_coupling
    D, pole = _denominator(device, frequency)
    s = np.where(pole, 1.0 + 0j, 1.0 - kappa / D)
    return s if np.ndim(s) else complex(s)


@dataclass(frozen=True)
class SpectrumScan:
    frequencies: np.ndarray
    s11: np.ndarray

    def __post_init__(self):
        if np.shape(self.frequencies) != np.shape(self.s11):
            raise ValidationError("frequencies and s11 must have equal length", key="s11")

    def magnitude(self):
        return np.abs(self.s11)

    def local_minima(self):
        """Indices of strict interior local minima of ``|S11|``."""
        a = np.abs(self.s11)
        return np.where((a[1:-1] < a[:-2]) & (a[1:-1] < a[2:]))[0] + 1

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for f, s in zip(self.frequencies, self.s11):
                w.writerow([repr(float(f)), repr(float(s.real)), repr(float(s.imag)),
                            repr(float(abs(s))), repr(float(np.angle(s)))])

    @classmethod
    def from_csv(cls, path):
        data = np.genfromtxt(path, delimiter=",", names=True)
        missing = [c for c in CSV_COLUMNS[:3] if c not in (data.dtype.names or ())]
        if missing:
            raise FormatError(f"{path}: missing columns {missing}")
        data = np.atleast_1d(data)
        return cls(np.asarray(data["frequency_hz"]), data["re_s11"] + 1j * data["im_s11"])


def spectrum_scan(device: MemoryDevice, start, end, points) -> SpectrumScan:
    """Evaluate ``S11`` on ``points`` uniformly spaced frequencies in ``[start, end]``."""
    if not start < end:
        raise ValidationError("band start must be below band end", key="start")
    if int(points) < 2:
        raise ValidationError("a scan needs at least two points", key="points")
    f = np.linspace(start, end, int(points))
    return SpectrumScan(f, np.asarray(reflection_coefficient(device, f)))


def coarse_reflection(device: MemoryDevice, start, end, spacing, points_per_spacing=64):
    """Complex ``S11`` averaged over a sliding window of one comb period.

    The period average removes the tooth-by-tooth phase winding and leaves the
    broadband reflection a short pulse actually sees; it vanishes for an
    impedance-matched comb.
    """
    if not start < end:
        raise ValidationError("band start must be below band end", key="band")
    k = max(int(points_per_spacing), 2)
    step = spacing / k
    f = np.arange(start - spacing / 2, end + spacing / 2 + step / 2, step)
    s = np.asarray(reflection_coefficient(device, f))
    # k equally spaced samples spanning one period: rectangle rule, exact for periodic input
    csum = np.concatenate([[0.0], np.cumsum(s)])
    window = (csum[k:] - csum[:-k]) / k
    centers = f[:len(window)] + spacing / 2 - step / 2
    keep = (centers >= start - step / 2) & (centers <= end + step / 2)
    return centers[keep], window[keep]
