"""Device and signal data model.

All user-facing frequencies and rates are in Hz (cycles per second); the
dynamics convert to angular units internally. Decay rates and couplings to
the waveguide are full *energy* decay rates, so amplitude equations use half
of them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import TruncationError, ValidationError

TWO_PI = 2.0 * math.pi
DEFAULT_MAX_SAMPLES = 5_000_000

# Intensity FWHM T of a Gaussian amplitude exp(-2 ln2 t^2 / T^2) gives
# integral of |a|^2 = T * sqrt(pi / (4 ln 2)).
_GAUSS_AREA = math.sqrt(math.pi / (4.0 * math.log(2.0)))


def _require(cond, message, key):
    if not cond:
        raise ValidationError(message, key=key)


def _finite(value, key):
    _require(np.isfinite(value), f"{key} must be finite, got {value!r}", key)


@dataclass(frozen=True)
class ResonatorParams:
    """One internal (storage) resonator.

    ``group`` labels which comb the resonator belongs to; it only matters for
    per-group operations such as rescaling one comb's spacing.
    """

    frequency: float
    decay_rate: float = 0.0
    coupling: float = 0.0
    group: int = 0

    def __post_init__(self):
        for key in ("frequency", "decay_rate", "coupling"):
            _finite(getattr(self, key), key)
        _require(self.frequency > 0, "frequency must be positive", "frequency")
        _require(self.decay_rate >= 0, "decay_rate must be non-negative", "decay_rate")
        _require(self.coupling >= 0, "coupling must be non-negative", "coupling")


@dataclass(frozen=True)
class CommonResonatorParams:
    """The bus resonator coupled to the waveguide and to every internal one."""

    frequency: float
    external_coupling: float
    internal_decay: float = 0.0

    def __post_init__(self):
        for key in ("frequency", "external_coupling", "internal_decay"):
            _finite(getattr(self, key), key)
        _require(self.frequency > 0, "frequency must be positive", "frequency")
        _require(self.external_coupling > 0, "external_coupling must be positive",
                 "external_coupling")
        _require(self.internal_decay >= 0, "internal_decay must be non-negative",
                 "internal_decay")


@dataclass(frozen=True)
class MemoryDevice:
    common: CommonResonatorParams
    internals: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "internals", tuple(self.internals))
        _require(len(self.internals) > 0, "a device needs at least one internal resonator",
                 "internals")
        freqs = [r.frequency for r in self.internals]
        _require(len(set(freqs)) == len(freqs),
                 "internal resonator frequencies must be pairwise distinct", "internals")

    @property
    def size(self):
        return len(self.internals)

    @property
    def frequencies(self):
        return np.array([r.frequency for r in self.internals])

    @property
    def decay_rates(self):
        return np.array([r.decay_rate for r in self.internals])

    @property
    def couplings(self):
        return np.array([r.coupling for r in self.internals])

    @property
    def groups(self):
        return np.array([r.group for r in self.internals], dtype=int)

    @property
    def center_frequency(self):
        """Midpoint of the internal frequency range (the default frame)."""
        f = self.frequencies
        return 0.5 * (f.min() + f.max())

    def group_center(self, group=0):
        f = self.frequencies[self.groups == group]
        if f.size == 0:
            raise ValidationError(f"device has no resonators in group {group}", key="group")
        return 0.5 * (f.min() + f.max())

    def group_spacing(self, group=0):
        """Mean frequency step inside one comb group."""
        f = np.sort(self.frequencies[self.groups == group])
        if f.size < 2:
            raise ValidationError(f"group {group} has fewer than two resonators", key="group")
        return (f[-1] - f[0]) / (f.size - 1)

    def min_spacing(self):
        f = np.sort(self.frequencies)
        if f.size < 2:
            return None
        return float(np.min(np.diff(f)))

    def with_uniform(self, coupling=None, decay_rate=None, common_decay=None):
        """Copy with the given parameters applied to every resonator."""
        internals = tuple(
            replace(r,
                    coupling=r.coupling if coupling is None else coupling,
                    decay_rate=r.decay_rate if decay_rate is None else decay_rate)
            for r in self.internals)
        common = self.common
        if common_decay is not None:
            common = replace(common, internal_decay=common_decay)
        return MemoryDevice(common, internals)

    def with_common(self, **changes):
        return MemoryDevice(replace(self.common, **changes), self.internals)


@dataclass(frozen=True)
class CombSpec:
    center_frequency: float
    spacing: float
    count: int
    coupling: float
    internal_decay: float = 0.0

    def __post_init__(self):
        _finite(self.center_frequency, "center_frequency")
        _finite(self.spacing, "spacing")
        _require(isinstance(self.count, (int, np.integer)) and not isinstance(self.count, bool),
                 "count must be an integer", "count")
        _require(self.count >= 1, "count must be at least 1", "count")
        _require(self.spacing > 0, "spacing must be positive", "spacing")
        _require(self.center_frequency > 0, "center_frequency must be positive",
                 "center_frequency")
        _require(self.coupling >= 0, "coupling must be non-negative", "coupling")
        _require(self.internal_decay >= 0, "internal_decay must be non-negative",
                 "internal_decay")

    def frequencies(self):
        k = np.arange(self.count)
        return self.center_frequency + (k - (self.count - 1) / 2.0) * self.spacing


def comb_resonators(spec: CombSpec, group=0):
    return tuple(ResonatorParams(float(f), spec.internal_decay, spec.coupling, group)
                 for f in spec.frequencies())


def build_comb(spec: CombSpec, common: CommonResonatorParams) -> MemoryDevice:
    """Equidistant comb of ``spec.count`` resonators centred on ``spec.center_frequency``.

    For even counts the centre falls midway between the two middle resonators.
    """
    return MemoryDevice(common, comb_resonators(spec))


def build_multicomb(specs: Sequence[CombSpec], common: CommonResonatorParams) -> MemoryDevice:
    """Several combs sharing one common resonator; comb ``i`` gets group label ``i``."""
    internals = []
    for i, spec in enumerate(specs):
        internals.extend(comb_resonators(spec, group=i))
    internals.sort(key=lambda r: r.frequency)
    return MemoryDevice(common, tuple(internals))


@dataclass(frozen=True)
class Pulse:
    """Gaussian input pulse.

    ``fwhm`` is the full width at half maximum of the *intensity* profile and
    ``mean_photon_number`` the time-integrated photon flux ``|alpha|^2``.
    ``carrier_detuning`` is measured from the rotating-frame frequency;
    fields rotate as ``e^{-i omega t}``, so a positive detuning gives the
    envelope ``e^{-2 pi i detuning t}``.
    """

    carrier_detuning: float = 0.0
    fwhm: float = 115e-9
    mean_photon_number: float = 1.0
    phase: float = 0.0
    center_time: float = 0.0

    def __post_init__(self):
        for key in ("carrier_detuning", "fwhm", "mean_photon_number", "phase", "center_time"):
            _finite(getattr(self, key), key)
        _require(self.fwhm > 0, "fwhm must be positive", "fwhm")
        _require(self.mean_photon_number >= 0, "mean_photon_number must be non-negative",
                 "mean_photon_number")

    @property
    def amplitude(self):
        """Peak envelope amplitude (sqrt of photons per second)."""
        return math.sqrt(self.mean_photon_number / (self.fwhm * _GAUSS_AREA))

    def scaled(self, c: complex) -> "Pulse":
        """Pulse whose envelope is ``c`` times this one."""
        c = complex(c)
        return replace(self, mean_photon_number=self.mean_photon_number * abs(c) ** 2,
                       phase=self.phase + math.atan2(c.imag, c.real))

    def with_phase(self, phase):
        return replace(self, phase=phase)

    def support(self, width=3.0):
        return (self.center_time - width * self.fwhm, self.center_time + width * self.fwhm)

    def envelope(self, t):
        """Complex envelope at arbitrary times (no support check)."""
        t = np.asarray(t, dtype=float)
        dt = t - self.center_time
        mag = self.amplitude * np.exp(-2.0 * math.log(2.0) * dt * dt / self.fwhm ** 2)
        return mag * np.exp(1j * (self.phase - TWO_PI * self.carrier_detuning * t))


@dataclass(frozen=True)
class TimeGrid:
    start: float
    end: float
    step: float
    max_samples: int = DEFAULT_MAX_SAMPLES

    def __post_init__(self):
        for key in ("start", "end", "step"):
            _finite(getattr(self, key), key)
        _require(self.start < self.end, "grid start must precede end", "end")
        _require(self.step > 0, "grid step must be positive", "step")
        _require((self.end - self.start) / self.step <= self.max_samples,
                 f"grid needs more than {self.max_samples} samples", "step")

    @property
    def size(self):
        return int(math.floor((self.end - self.start) / self.step + 1e-9)) + 1

    @property
    def times(self):
        return self.start + self.step * np.arange(self.size)

    @classmethod
    def around(cls, pulse: Pulse, after: float, step: float, before_fwhm=3.0, **kw):
        """Grid from ``before_fwhm`` widths before the pulse to ``after`` seconds past its centre."""
        return cls(pulse.center_time - before_fwhm * pulse.fwhm, pulse.center_time + after,
                   step, **kw)


def gaussian_envelope(pulse: Pulse, grid: TimeGrid) -> np.ndarray:
    """Sample the pulse envelope on ``grid``.

    Raises :class:`TruncationError` when the grid does not cover
    ``center_time +/- 3 fwhm``.
    """
    lo, hi = pulse.support(3.0)
    slack = 0.5 * grid.step
    times = grid.times
    if times[0] > lo + slack or times[-1] < hi - slack:
        raise TruncationError(
            f"grid [{times[0]:.4g}, {times[-1]:.4g}] s does not cover the pulse support "
            f"[{lo:.4g}, {hi:.4g}] s")
    return pulse.envelope(times)
