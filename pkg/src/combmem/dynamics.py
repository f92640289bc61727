"""Time-domain coupled-mode propagation, echo extraction and energy bookkeeping.

In a frame rotating at ``frame_frequency`` the mode amplitudes obey

    da0/dt = -(i d0 + (kappa + gamma0)/2) a0 - i sum_n g_n b_n + sqrt(kappa) a_in
    dbn/dt = -(i dn + gamma_n/2) b_n - i g_n a0
    a_out  = a_in - sqrt(kappa) a0

(all rates angular). Amplitudes are normalised so ``|a_in|^2`` is a photon
flux and ``|a0|^2``, ``|b_n|^2`` are photon numbers.

The homogeneous part is propagated exactly with one matrix exponential per
step size; the drive is integrated with Simpson's rule, using the drive at
the midpoint of every step, which is fourth-order accurate.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from scipy.integrate import cumulative_simpson, simpson

from .errors import AccuracyError, FormatError, RangeError, ValidationError
from .kernels import propagate_linear
from .model import TWO_PI, MemoryDevice, Pulse, TimeGrid, gaussian_envelope

STEPS_PER_KAPPA = 50
ACCURACY_FACTOR = 0.1
TAIL_PERIODS = 4.0


def system_matrices(device: MemoryDevice, frame_frequency: float):
    """Return the generator ``A`` and the drive vector ``B`` (angular units).

    State ordering is ``[a0, b_1, ..., b_N]``.
    """
    c = device.common
    n = device.size + 1
    A = np.zeros((n, n), dtype=np.complex128)
    kappa = TWO_PI * c.external_coupling
    A[0, 0] = -(1j * TWO_PI * (c.frequency - frame_frequency)
                + (kappa + TWO_PI * c.internal_decay) / 2)
    for i, r in enumerate(device.internals, start=1):
        if r.decay_rate < 0:
            raise ValidationError("negative decay rate makes the dynamics unstable",
                                  key="decay_rate")
        A[i, i] = -(1j * TWO_PI * (r.frequency - frame_frequency) + TWO_PI * r.decay_rate / 2)
        A[0, i] = A[i, 0] = -1j * TWO_PI * r.coupling
    B = np.zeros(n, dtype=np.complex128)
    B[0] = np.sqrt(kappa)
    return A, B


def default_step(device: MemoryDevice) -> float:
    return 1.0 / (STEPS_PER_KAPPA * device.common.external_coupling)


def max_step(device: MemoryDevice, frame_frequency: float) -> float:
    """Largest step accepted by :func:`propagate_drive`."""
    f = np.concatenate([[device.common.frequency], device.frequencies])
    detuning = np.max(np.abs(f - frame_frequency))
    return ACCURACY_FACTOR / (detuning + device.common.external_coupling)


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    times: np.ndarray
    input_field: np.ndarray
    common_amplitude: np.ndarray
    internal_amplitudes: np.ndarray  # shape (N, T)
    output_field: np.ndarray
    frame_frequency: float
    pulse_center: Optional[float] = None

    @property
    def input_energy(self):
        return float(_integrate(np.abs(self.input_field) ** 2, self.times))

    def to_csv(self, path, verbose=False):
        cols = ["time_s", "re_in", "im_in", "re_out", "im_out", "abs2_out"]
        n_int = self.internal_amplitudes.shape[0]
        if verbose:
            cols += ["re_a0", "im_a0"]
            for k in range(n_int):
                cols += [f"re_b{k}", f"im_b{k}"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for i, t in enumerate(self.times):
                ain = self.input_field[i]
                aout = self.output_field[i]
                row = [t, ain.real, ain.imag, aout.real, aout.imag, abs(aout) ** 2]
                if verbose:
                    a0 = self.common_amplitude[i]
                    row += [a0.real, a0.imag]
                    for k in range(n_int):
                        b = self.internal_amplitudes[k, i]
                        row += [b.real, b.imag]
                w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class EchoReport:
    echo_index: int
    window: tuple
    energy_efficiency: float
    peak_time: float
    peak_power_ratio: float
    half_max_interval: tuple

    def as_dict(self):
        return {
            "echo_index": self.echo_index,
            "window_s": list(self.window),
            "energy_efficiency": self.energy_efficiency,
            "peak_time_s": self.peak_time,
            "peak_power_ratio": self.peak_power_ratio,
            "half_max_interval_s": list(self.half_max_interval),
        }


def _integrate(y, t):
    return simpson(y, x=t)


def _cumulative(y, t):
    return cumulative_simpson(y, x=t, initial=0.0)


def propagate_drive(device: MemoryDevice, grid: TimeGrid, drive: Callable,
                    frame_frequency: Optional[float] = None,
                    pulse_center: Optional[float] = None) -> Trajectory:
    """Propagate an arbitrary input envelope ``drive(t)`` from vacuum.

    ``drive`` must accept an array of times (seconds) and return the complex
    envelope in the rotating frame.
    """
    frame = device.center_frequency if frame_frequency is None else float(frame_frequency)
    limit = max_step(device, frame)
    if grid.step > limit * (1 + 1e-12):
        raise AccuracyError(f"grid step {grid.step:.3g} s exceeds the accuracy limit "
                            f"{limit:.3g} s for this device and frame")
    A, B = system_matrices(device, frame)
    h = grid.step
    P = scipy.linalg.expm(A * h)
    P_half = scipy.linalg.expm(A * (h / 2))
    c0 = (h / 6) * (P @ B)
    c1 = (4 * h / 6) * (P_half @ B)
    c2 = (h / 6) * B

    times = grid.times
    u = np.asarray(drive(times), dtype=np.complex128)
    um = np.asarray(drive(times + h / 2), dtype=np.complex128)
    if u.shape != times.shape:
        raise FormatError("drive must return one complex value per time sample")
    x0 = np.zeros(device.size + 1, dtype=np.complex128)
    states = propagate_linear(P, c0, c1, c2, x0, u, um)
    a0 = states[:, 0]
    out = u - B[0] * a0
    return Trajectory(grid, times, u, a0, states[:, 1:].T.copy(), out, frame, pulse_center)


def propagate(device: MemoryDevice, pulse: Pulse, grid: TimeGrid,
              frame_frequency: Optional[float] = None, require_tail=True) -> Trajectory:
    """Send ``pulse`` into the memory and record every mode on ``grid``.

    Unless ``require_tail`` is false the grid must extend ``4 / min spacing``
    past the pulse centre so that several echo periods are captured.
    """
    u = gaussian_envelope(pulse, grid)  # raises TruncationError
    del u
    spacing = device.min_spacing()
    if require_tail and spacing is not None:
        needed = pulse.center_time + TAIL_PERIODS / spacing
        if grid.end < needed - grid.step:
            raise RangeError(f"grid ends at {grid.end:.4g} s but must reach {needed:.4g} s "
                             f"(4 periods of the smallest resonator spacing)")
    return propagate_drive(device, grid, pulse.envelope, frame_frequency,
                           pulse_center=pulse.center_time)


def energy_balance_residual(traj: Trajectory, device: MemoryDevice) -> float:
    """Largest violation of the integrated energy balance, relative to input energy.

    Checks ``E(t) - E(t0) = int (|a_in|^2 - |a_out|^2 - losses) dt`` at every
    grid point, where ``E`` is the total photon number stored in the modes.
    """
    t = traj.times
    b = traj.internal_amplitudes
    stored = np.abs(traj.common_amplitude) ** 2 + np.sum(np.abs(b) ** 2, axis=0)
    loss = TWO_PI * device.common.internal_decay * np.abs(traj.common_amplitude) ** 2
    loss = loss + np.sum(TWO_PI * device.decay_rates[:, None] * np.abs(b) ** 2, axis=0)
    flux = np.abs(traj.input_field) ** 2 - np.abs(traj.output_field) ** 2 - loss
    balance = stored - stored[0] - _cumulative(flux, t)
    scale = traj.input_energy
    if scale == 0.0:
        return float(np.max(np.abs(balance)))
    return float(np.max(np.abs(balance)) / scale)


def _window_energy(cum, t, lo, hi):
    return float(np.interp(hi, t, cum) - np.interp(lo, t, cum))


def echo_report(traj: Trajectory, spacing: float, echo_index: int = 1) -> EchoReport:
    """Energy and timing of echo ``echo_index`` (0 is the prompt reflection).

    The window spans half an echo period either side of
    ``pulse_center + echo_index / spacing``.
    """
    if traj.pulse_center is None:
        raise ValidationError("trajectory has no pulse centre; echoes need a pulsed input",
                              key="pulse_center")
    if spacing <= 0:
        raise ValidationError("spacing must be positive", key="spacing")
    t = traj.times
    tc = traj.pulse_center
    lo = tc + (echo_index - 0.5) / spacing
    hi = tc + (echo_index + 0.5) / spacing
    if lo < t[0] - 1e-15 or hi > t[-1] + 1e-15:
        raise RangeError(f"echo window [{lo:.4g}, {hi:.4g}] s lies outside the grid "
                         f"[{t[0]:.4g}, {t[-1]:.4g}] s")
    p_out = np.abs(traj.output_field) ** 2
    p_in = np.abs(traj.input_field) ** 2
    e_in = traj.input_energy
    cum = _cumulative(p_out, t)
    energy = _window_energy(cum, t, lo, hi)
    mask = (t >= lo) & (t <= hi)
    idx = np.flatnonzero(mask)
    k = idx[np.argmax(p_out[idx])]
    peak = p_out[k]
    above = idx[p_out[idx] >= 0.5 * peak] if peak > 0 else idx[:1]
    in_peak = p_in.max()
    return EchoReport(
        echo_index=int(echo_index),
        window=(lo, hi),
        energy_efficiency=energy / e_in if e_in > 0 else 0.0,
        peak_time=float(t[k] - tc),
        peak_power_ratio=float(peak / in_peak) if in_peak > 0 else 0.0,
        half_max_interval=(float(t[above[0]] - tc), float(t[above[-1]] - tc)),
    )


def recovered_energy(traj: Trajectory, horizon: float) -> float:
    """Output energy within ``horizon`` seconds of the grid start, over input energy."""
    t = traj.times
    end = t[0] + horizon
    if horizon <= 0 or end > t[-1] + 1e-15:
        raise RangeError(f"horizon {horizon:.4g} s is outside the simulated interval")
    e_in = traj.input_energy
    if e_in == 0:
        return 0.0
    cum = _cumulative(np.abs(traj.output_field) ** 2, t)
    return float(np.interp(end, t, cum) / e_in)


def echo_mode_transfer(traj: Trajectory, spacing: float, echo_index: int = 1,
                       mode: str = "gaussian"):
    """Amplitude transfer of the memory seen as a single-mode channel.

    Returns ``(transmissivity, phase)``. The output mode is the input pulse
    shape delayed to the echo peak; ``mode="gaussian"`` projects onto it,
    ``mode="matched"`` uses the full window energy (ideal mode matching) and
    takes only the phase from the projection.
    """
    rep = echo_report(traj, spacing, echo_index)
    t = traj.times
    delay = rep.peak_time
    ref = np.interp(t - delay, t, traj.input_field.real, left=0.0, right=0.0) \
        + 1j * np.interp(t - delay, t, traj.input_field.imag, left=0.0, right=0.0)
    e_in = traj.input_energy
    if e_in == 0:
        return 0.0, 0.0
    overlap = _integrate(np.conj(ref) * traj.output_field, t)
    norm = _integrate(np.abs(ref) ** 2, t)
    amp = overlap / np.sqrt(norm * e_in)
    phase = float(np.angle(amp))
    if mode == "gaussian":
        return float(abs(amp) ** 2), phase
    if mode == "matched":
        return rep.energy_efficiency, phase
    raise ValidationError(f"unknown mode {mode!r}", key="mode")


def read_intensity_csv(path):
    """Read a measured trace with columns ``time_s, abs2_out`` (header optional)."""
    cols = (0, 1)
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                header = [c.strip() for c in row]
                if rows or "time_s" not in header or "abs2_out" not in header:
                    raise FormatError(f"{path}:{line_no}: expected numeric time_s, abs2_out "
                                      f"values, got {row!r}") from None
                cols = (header.index("time_s"), header.index("abs2_out"))
                continue
            if len(vals) <= max(cols):
                raise FormatError(f"{path}:{line_no}: expected at least {max(cols) + 1} columns")
            rows.append((vals[cols[0]], vals[cols[1]]))
    if len(rows) < 2:
        raise FormatError(f"{path}: fewer than two samples")
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1]
