"""Impedance matching figures of merit, optimisation and trace fitting."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np
from scipy.optimize import minimize

from .dynamics import default_step, echo_report, propagate, propagate_drive
from .errors import FormatError, NumericalError, ObjectiveError, ValidationError
from .model import MemoryDevice, Pulse, TimeGrid
from .spectral import coarse_reflection

log = logging.getLogger(__name__)

OBJECTIVES = ("spectral_residual", "first_echo_efficiency", "efficiency_targets")
DEFAULT_TOL = 1e-6
DEFAULT_MAX_EVALUATIONS = 500


def analytic_matching_coupling(spacing, external_coupling):
    """Coupling (Hz) at which the comb absorbs at the waveguide coupling rate.

    Treating the comb as a continuum of density ``1/spacing``, the
    golden-rule absorption rate ``2 pi g^2 / spacing`` equals ``kappa`` when
    ``g = sqrt(kappa * spacing / (2 pi))``.
    """
    if spacing < 0 or external_coupling < 0:
        raise ValidationError("spacing and external_coupling must be non-negative")
    return math.sqrt(external_coupling * spacing / (2 * math.pi))


def matching_residual(device: MemoryDevice, band, spacing=None, points_per_spacing=64):
    """Mean squared period-averaged reflection over ``band = (lo, hi)`` in Hz.

    ``spacing`` defaults to the spacing of comb group 0. Close to 0 for an
    impedance-matched comb, close to 1 for a decoupled one.
    """
    lo, hi = band
    if not lo < hi:
        raise ValidationError("band must satisfy lo < hi", key="band")
    if spacing is None:
        spacing = _spacing_of(device, 0)
    _, s = coarse_reflection(device, lo, hi, spacing, points_per_spacing)
    return float(np.mean(np.abs(s) ** 2))


def _spacing_of(device, group):
    try:
        return device.group_spacing(group)
    except ValidationError:
        sp = device.min_spacing()
        if sp is None:
            raise
        return sp


# ---------------------------------------------------------------------------
# Parameter handling
# ---------------------------------------------------------------------------

def _parse_name(name):
    if name in ("g", "kappa", "common_detuning", "spacing"):
        return name, None
    if name.startswith("spacing[") and name.endswith("]"):
        try:
            return "spacing", int(name[8:-1])
        except ValueError:
            pass
    raise ValidationError(f"unknown free parameter {name!r}; expected g, kappa, "
                          f"common_detuning, spacing or spacing[k]", key=name)


def get_parameter(device: MemoryDevice, name, reference=None):
    kind, group = _parse_name(name)
    if kind == "g":
        return float(np.mean(device.couplings))
    if kind == "kappa":
        return device.common.external_coupling
    if kind == "common_detuning":
        ref = device.center_frequency if reference is None else reference
        return device.common.frequency - ref
    return device.group_spacing(0 if group is None else group)


def set_parameter(device: MemoryDevice, name, value, reference=None) -> MemoryDevice:
    """Return a copy of ``device`` with one named parameter changed."""
    kind, group = _parse_name(name)
    if kind == "g":
        return device.with_uniform(coupling=float(value))
    if kind == "kappa":
        return device.with_common(external_coupling=float(value))
    if kind == "common_detuning":
        ref = device.center_frequency if reference is None else reference
        return device.with_common(frequency=ref + float(value))
    groups = sorted(set(device.groups)) if group is None else [group]
    internals = list(device.internals)
    for grp in groups:
        idx = [i for i, r in enumerate(internals) if r.group == grp]
        if len(idx) < 2:
            raise ValidationError(f"group {grp} has no spacing to vary", key=name)
        freqs = np.array([internals[i].frequency for i in idx])
        center = 0.5 * (freqs.min() + freqs.max())
        scale = float(value) / device.group_spacing(grp)
        for i in idx:
            r = internals[i]
            internals[i] = replace(r, frequency=center + (r.frequency - center) * scale)
    return MemoryDevice(device.common, tuple(internals))


@dataclass(frozen=True)
class MatchingProblem:
    """What to vary, within which bounds, and what to optimise.

    ``pulse`` and ``tail`` (seconds simulated past the pulse centre) are only
    used by the time-domain objectives; ``targets`` maps group index to the
    first-echo efficiency wanted by ``efficiency_targets``.
    """

    base_device: MemoryDevice
    free_parameters: tuple
    bounds: Mapping[str, tuple]
    objective: str = "spectral_residual"
    band: Optional[tuple] = None
    pulse: Pulse = field(default_factory=Pulse)
    group: int = 0
    targets: Mapping[int, float] = field(default_factory=dict)
    tail: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "free_parameters", tuple(self.free_parameters))
        if not self.free_parameters:
            raise ValidationError("at least one free parameter is required",
                                  key="free_parameters")
        if self.objective not in OBJECTIVES:
            raise ValidationError(f"objective must be one of {OBJECTIVES}", key="objective")
        for name in self.free_parameters:
            _parse_name(name)
            if name not in self.bounds:
                raise ValidationError(f"no bounds given for {name!r}", key=name)
            lo, hi = self.bounds[name]
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValidationError(f"bounds for {name!r} must be finite with low < high",
                                      key=name)
        if self.objective == "efficiency_targets" and not self.targets:
            raise ValidationError("efficiency_targets needs at least one target", key="targets")

    @property
    def reference_frequency(self):
        return self.base_device.center_frequency

    def device_at(self, values) -> MemoryDevice:
        dev = self.base_device
        for name, v in zip(self.free_parameters, values):
            dev = set_parameter(dev, name, v, self.reference_frequency)
        return dev

    def start_values(self):
        vals = []
        for name in self.free_parameters:
            lo, hi = self.bounds[name]
            v = get_parameter(self.base_device, name, self.reference_frequency)
            vals.append(min(max(v, lo), hi))
        return np.array(vals)


@dataclass(frozen=True)
class FitResult:
    device: MemoryDevice
    objective_value: float
    iterations: int
    converged: bool
    parameters: dict = field(default_factory=dict)
    evaluations: int = 0
    start_objective: float = float("nan")

    def as_dict(self):
        return {
            "parameters": dict(self.parameters),
            "objective_value": self.objective_value,
            "start_objective": self.start_objective,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
        }

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _echo_efficiency(device, problem: MatchingProblem, group):
    pulse = problem.pulse
    frame = device.group_center(group) if group in set(device.groups) else device.center_frequency
    spacing = _spacing_of(device, group)
    tail = problem.tail
    if tail is None:
        tail = 4.0 / (device.min_spacing() or spacing)
    grid = TimeGrid.around(pulse, tail, default_step(device))
    traj = propagate(device, pulse, grid, frame_frequency=frame)
    return echo_report(traj, spacing, 1).energy_efficiency


def evaluate_objective(problem: MatchingProblem, device: MemoryDevice) -> float:
    """Objective value to *minimise* for ``device``."""
    if problem.objective == "spectral_residual":
        band = problem.band
        if band is None:
            f = device.frequencies
            band = (f.min(), f.max())
        return matching_residual(device, band, spacing=_spacing_of(device, problem.group))
    if problem.objective == "first_echo_efficiency":
        return -_echo_efficiency(device, problem, problem.group)
    return float(sum((_echo_efficiency(device, problem, g) - t) ** 2
                     for g, t in problem.targets.items()))


def _simplex(z0, step):
    k = len(z0)
    pts = [z0.copy()]
    for i in range(k):
        z = z0.copy()
        z[i] = z[i] + step if z[i] + step <= 1.0 else z[i] - step
        pts.append(z)
    return np.array(pts)


def _nelder_mead(fun, z0, tol, max_evaluations, restarts):
    """Bounded Nelder-Mead on the unit cube with restarts from the best point.

    Converged once a restart with a fresh simplex improves the objective by
    less than ``tol``.
    """
    state = {"n": 0, "best_f": np.inf, "best_z": np.array(z0, dtype=float), "ok": 0}

    def wrapped(z):
        z = np.clip(z, 0.0, 1.0)
        if state["n"] >= max_evaluations:
            return state["best_f"] if np.isfinite(state["best_f"]) else 1e300
        state["n"] += 1
        try:
            f = float(fun(z))
        except (NumericalError, ValidationError) as exc:
            log.debug("objective failed at %s: %s", z, exc)
            return 1e300
        if not np.isfinite(f):
            return 1e300
        state["ok"] += 1
        if f < state["best_f"]:
            state["best_f"] = f
            state["best_z"] = z.copy()
        return f

    wrapped(np.asarray(z0, dtype=float))
    start_f = state["best_f"]
    iterations = 0
    converged = False
    step = 0.1
    previous = state["best_f"]
    for attempt in range(restarts + 1):
        if state["n"] >= max_evaluations:
            break
        res = minimize(wrapped, state["best_z"], method="Nelder-Mead",
                       bounds=[(0.0, 1.0)] * len(z0),
                       options={"initial_simplex": _simplex(state["best_z"], step),
                                "fatol": tol, "xatol": 1e-9,
                                "maxfev": max(max_evaluations - state["n"], 1)})
        iterations += int(res.nit)
        if attempt > 0 and previous - state["best_f"] < tol:
            converged = state["n"] < max_evaluations or res.success
            break
        previous = state["best_f"]
        step = max(step / 2, 1e-3)
        if restarts == 0:
            converged = bool(res.success)
    if state["ok"] == 0:
        raise ObjectiveError("every objective evaluation failed")
    return state["best_z"], state["best_f"], iterations, converged, state["n"], start_f


def _run(problem: MatchingProblem, fun_of_device, tol, max_evaluations, restarts):
    lo = np.array([problem.bounds[n][0] for n in problem.free_parameters], dtype=float)
    hi = np.array([problem.bounds[n][1] for n in problem.free_parameters], dtype=float)

    def to_values(z):
        return lo + np.clip(z, 0.0, 1.0) * (hi - lo)

    z0 = (problem.start_values() - lo) / (hi - lo)
    z, f, its, conv, nev, f0 = _nelder_mead(lambda z: fun_of_device(problem.device_at(to_values(z))),
                                            z0, tol, max_evaluations, restarts)
    values = to_values(z)
    return FitResult(
        device=problem.device_at(values),
        objective_value=float(f),
        iterations=its,
        converged=bool(conv),
        parameters={n: float(v) for n, v in zip(problem.free_parameters, values)},
        evaluations=nev,
        start_objective=float(f0),
    )


def optimize(problem: MatchingProblem, tol=DEFAULT_TOL, max_evaluations=DEFAULT_MAX_EVALUATIONS,
             restarts=3) -> FitResult:
    """Minimise the problem's objective with bounded Nelder-Mead plus restarts.

    For ``first_echo_efficiency`` the reported ``objective_value`` is the
    negated efficiency.
    """
    return _run(problem, lambda dev: evaluate_objective(problem, dev), tol,
                max_evaluations, restarts)


def fit_trace(times, measured, problem: MatchingProblem, pulse: Optional[Pulse] = None,
              field_kind="intensity", tol=1e-10, max_evaluations=DEFAULT_MAX_EVALUATIONS,
              restarts=3, frame_frequency=None) -> FitResult:
    """Fit the free parameters so the model output matches a measured trace.

    ``measured`` is ``|a_out|^2`` sampled at ``times`` (``field_kind="intensity"``)
    or the complex output field (``field_kind="complex"``). The samples must
    be uniform; the simulation runs on the same grid, subdivided when the
    sampling is coarser than the accuracy limit. Objective: squared residual
    normalised by the squared data.
    """
    times = np.asarray(times, dtype=float)
    measured = np.asarray(measured)
    if times.ndim != 1 or times.shape != measured.shape or times.size < 3:
        raise FormatError("times and measured must be 1-D arrays of equal length >= 3")
    dt = np.diff(times)
    step = (times[-1] - times[0]) / (times.size - 1)
    if step <= 0 or np.max(np.abs(dt - step)) > 1e-6 * step:
        raise FormatError("measured trace is not sampled on a uniform time grid")
    if field_kind not in ("intensity", "complex"):
        raise ValidationError("field_kind must be 'intensity' or 'complex'", key="field_kind")
    pulse = problem.pulse if pulse is None else pulse
    sub = max(1, int(math.ceil(step / default_step(problem.base_device) - 1e-9)))
    grid = TimeGrid(times[0], times[-1], step / sub)
    if grid.size != (times.size - 1) * sub + 1:
        raise FormatError("measured times do not align with the simulation grid")
    scale = float(np.sum(np.abs(measured) ** 2))
    if scale == 0:
        raise FormatError("measured trace is identically zero")

    def residual(dev):
        frame = frame_frequency
        if frame is None:
            groups = set(dev.groups)
            frame = dev.group_center(problem.group) if problem.group in groups \
                else dev.center_frequency
        traj = propagate_drive(dev, grid, pulse.envelope, frame, pulse_center=pulse.center_time)
        model = traj.output_field[::sub]
        if field_kind == "intensity":
            model = np.abs(model) ** 2
        return float(np.sum(np.abs(model - measured) ** 2) / scale)

    return _run(problem, residual, tol, max_evaluations, restarts)
