"""Experiment configuration files and run reports.

A configuration is a TOML file whose tables mirror the domain types::

    seed = 7

    [device.common]
    frequency = 6.0e9
    external_coupling = 281e6
    internal_decay = 6e3

    [[device.comb]]            # or [[device.resonator]] entries
    center_frequency = 5.9436e9
    spacing = 3.55e6
    count = 4
    coupling = 12e6
    internal_decay = 6e3

    [pulse]      carrier_detuning, fwhm, mean_photon_number, phase, center_time,
                 group, frame_frequency
    [grid]       step, after, before_fwhm, max_samples
    [spectrum]   start, stop, margin, points
    [echo]       indices, horizon, verbose
    [matching]   free, bounds, objective, band, targets, tol, max_evaluations,
                 restarts, tail
    [fit]        data, field_kind, tol, max_evaluations, restarts
    [noise]      high_power_decay, decay_at, decay_photon_number, tls_decay,
                 critical_photon_number, exponent, temperature, stored_photons,
                 sweep_start, sweep_stop, sweep_points, group, common_tls
    [tomography] amplitudes | amplitude_start/stop/step, samples_per_amplitude,
                 dim, phase_strategy, lo_phases, input_phase, channel,
                 transmissivity, rotation, method, bootstrap, diagonal, padding

All frequencies and rates are in Hz, times in seconds and temperatures in
kelvin. Omitted keys take the defaults in :data:`DEFAULTS`. Command-line flags
override file values, which override defaults. Unknown keys are rejected with
their dotted path.
"""
from __future__ import annotations

import copy
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import scipy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import FormatError, ValidationError
from .model import (DEFAULT_MAX_SAMPLES, CombSpec, CommonResonatorParams, MemoryDevice, Pulse,
                    ResonatorParams, build_multicomb)

UNSET = None

DEFAULTS = {
    "seed": 0,
    "pulse": {"carrier_detuning": 0.0, "fwhm": 115e-9, "mean_photon_number": 1.0, "phase": 0.0,
              "center_time": 0.0, "group": 0, "frame_frequency": UNSET},
    "grid": {"step": UNSET, "after": UNSET, "before_fwhm": 3.0,
             "max_samples": DEFAULT_MAX_SAMPLES},
    "spectrum": {"start": UNSET, "stop": UNSET, "margin": 20e6, "points": 40001},
    "echo": {"indices": [1], "horizon": UNSET, "verbose": False},
    "matching": {"free": ["g"], "bounds": {"g": [5e6, 20e6]}, "objective": "spectral_residual",
                 "band": UNSET, "targets": {}, "tol": 1e-6, "max_evaluations": 500,
                 "restarts": 3, "tail": UNSET},
    "fit": {"data": UNSET, "field_kind": "intensity", "tol": 1e-10, "max_evaluations": 500,
            "restarts": 3},
    "noise": {"high_power_decay": 6e3, "decay_at": 165e3, "decay_photon_number": 1.0,
              "tls_decay": UNSET, "critical_photon_number": 1.0, "exponent": 0.5,
              "temperature": 0.1, "stored_photons": 1.0, "sweep_start": 0.01, "sweep_stop": 1.0,
              "sweep_points": 25, "group": 0, "common_tls": False},
    "tomography": {"amplitudes": UNSET, "amplitude_start": 0.0, "amplitude_stop": 1.2,
                   "amplitude_step": 0.02, "samples_per_amplitude": 200_000, "dim": 4,
                   "phase_strategy": "uniform_scan", "lo_phases": [0.0], "input_phase": 0.0,
                   "channel": "loss", "transmissivity": 0.6, "rotation": 0.0,
                   "method": "covariant", "bootstrap": 50, "diagonal": True, "padding": UNSET},
}

COMMON_KEYS = {"frequency": UNSET, "external_coupling": UNSET, "internal_decay": 0.0}
COMB_KEYS = {"center_frequency": UNSET, "spacing": UNSET, "count": UNSET, "coupling": UNSET,
             "internal_decay": 0.0}
RESONATOR_KEYS = {"frequency": UNSET, "decay_rate": 0.0, "coupling": 0.0, "group": 0}
CHANNELS = ("loss", "memory")


def _merge(defaults, given, path):
    if not isinstance(given, dict):
        raise ValidationError(f"{path} must be a table", key=path)
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if k not in defaults:
            raise ValidationError(f"unknown key {path}.{k}", key=f"{path}.{k}")
        out[k] = v
    return out


def _required(table, path):
    for k, v in table.items():
        if v is None:
            raise ValidationError(f"missing required key {path}.{k}", key=f"{path}.{k}")
    return table


def _number(table, key, path, positive=False, nonneg=False, integer=False, optional=False):
    v = table[key]
    dotted = f"{path}.{key}"
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{dotted} must be a number", key=dotted)
    if not math.isfinite(v):
        raise ValidationError(f"{dotted} must be finite", key=dotted)
    if integer and int(v) != v:
        raise ValidationError(f"{dotted} must be an integer", key=dotted)
    if positive and v <= 0:
        raise ValidationError(f"{dotted} must be positive", key=dotted)
    if nonneg and v < 0:
        raise ValidationError(f"{dotted} must be non-negative", key=dotted)
    return int(v) if integer else float(v)


def _rekey(err: ValidationError, prefix):
    key = f"{prefix}.{err.key}" if err.key else prefix
    msg = str(err)
    if key not in msg:
        msg = f"{key}: {msg}"
    return ValidationError(msg, key=key)


def _device(section) -> tuple:
    if not isinstance(section, dict):
        raise ValidationError("device must be a table", key="device")
    unknown = set(section) - {"common", "comb", "resonator"}
    if unknown:
        k = sorted(unknown)[0]
        raise ValidationError(f"unknown key device.{k}", key=f"device.{k}")
    if "common" not in section:
        raise ValidationError("missing required table device.common", key="device.common")
    has_comb, has_res = "comb" in section, "resonator" in section
    if has_comb == has_res:
        raise ValidationError("device needs exactly one of device.comb or device.resonator",
                              key="device.comb")
    common_d = _required(_merge(COMMON_KEYS, section["common"], "device.common"), "device.common")
    for k in common_d:
        _number(common_d, k, "device.common")
    try:
        common = CommonResonatorParams(**common_d)
    except ValidationError as e:
        raise _rekey(e, "device.common") from None
    name = "comb" if has_comb else "resonator"
    entries = section[name]
    if not isinstance(entries, list) or not entries:
        raise ValidationError(f"device.{name} must be a non-empty array of tables",
                              key=f"device.{name}")
    resolved = []
    items = []
    for i, raw in enumerate(entries):
        path = f"device.{name}[{i}]"
        d = _required(_merge(COMB_KEYS if has_comb else RESONATOR_KEYS, raw, path), path)
        for k in d:
            _number(d, k, path, integer=k in ("count", "group"))
        resolved.append(d)
        try:
            items.append(CombSpec(**d) if has_comb else ResonatorParams(**d))
        except ValidationError as e:
            raise _rekey(e, path) from None
    try:
        device = build_multicomb(items, common) if has_comb \
            else MemoryDevice(common, tuple(items))
    except ValidationError as e:
        raise _rekey(e, "device") from None
    return device, {"common": common_d, name: resolved}


@dataclass
class ExperimentConfig:
    """Validated configuration: resolved plain values plus domain objects."""

    values: dict
    device: Optional[MemoryDevice] = None

    @property
    def seed(self) -> int:
        return self.values["seed"]

    def section(self, name) -> dict:
        return self.values[name]

    @property
    def pulse(self) -> Pulse:
        p = self.values["pulse"]
        return Pulse(p["carrier_detuning"], p["fwhm"], p["mean_photon_number"], p["phase"],
                     p["center_time"])

    @property
    def group(self) -> int:
        return self.values["pulse"]["group"]

    def frame_frequency(self, group=None) -> float:
        f = self.values["pulse"]["frame_frequency"]
        if f is not None:
            return f
        dev = self.require_device()
        g = self.group if group is None else group
        return dev.group_center(g) if g in set(dev.groups) else dev.center_frequency

    def require_device(self) -> MemoryDevice:
        if self.device is None:
            raise ValidationError("this command needs a [device] section", key="device")
        return self.device

    def amplitudes(self):
        t = self.values["tomography"]
        if t["amplitudes"] is not None:
            return tuple(float(a) for a in t["amplitudes"])
        n = int(round((t["amplitude_stop"] - t["amplitude_start"]) / t["amplitude_step"]))
        return tuple(np.round(t["amplitude_start"] + t["amplitude_step"] * np.arange(n + 1), 12))

    def as_dict(self):
        return copy.deepcopy(self.values)

    @classmethod
    def from_dict(cls, raw: dict, overrides: Optional[dict] = None) -> "ExperimentConfig":
        raw = copy.deepcopy(raw)
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            parts = dotted.split(".")
            node = raw
            for p in parts[:-1]:
                node = node.setdefault(p, {})
            node[parts[-1]] = value
        unknown = set(raw) - set(DEFAULTS) - {"device"}
        if unknown:
            k = sorted(unknown)[0]
            raise ValidationError(f"unknown key {k}", key=k)
        values = {"seed": raw.get("seed", DEFAULTS["seed"])}
        if isinstance(values["seed"], bool) or not isinstance(values["seed"], int) \
                or values["seed"] < 0:
            raise ValidationError("seed must be a non-negative integer", key="seed")
        for name, defaults in DEFAULTS.items():
            if name != "seed":
                values[name] = _merge(defaults, raw.get(name, {}), name)
        device = None
        if "device" in raw:
            device, values["device"] = _device(raw["device"])
        cfg = cls(values, device)
        cfg._validate()
        return cfg

    def _validate(self):
        v = self.values
        p = v["pulse"]
        for k in ("carrier_detuning", "phase", "center_time"):
            _number(p, k, "pulse")
        _number(p, "fwhm", "pulse", positive=True)
        _number(p, "mean_photon_number", "pulse", nonneg=True)
        _number(p, "group", "pulse", integer=True, nonneg=True)
        _number(p, "frame_frequency", "pulse", positive=True, optional=True)
        g = v["grid"]
        _number(g, "step", "grid", positive=True, optional=True)
        _number(g, "after", "grid", positive=True, optional=True)
        _number(g, "before_fwhm", "grid", positive=True)
        _number(g, "max_samples", "grid", positive=True, integer=True)
        s = v["spectrum"]
        _number(s, "start", "spectrum", positive=True, optional=True)
        _number(s, "stop", "spectrum", positive=True, optional=True)
        _number(s, "margin", "spectrum", nonneg=True)
        _number(s, "points", "spectrum", positive=True, integer=True)
        e = v["echo"]
        if not isinstance(e["indices"], list) or not e["indices"] \
                or any(isinstance(i, bool) or not isinstance(i, int) or i < 1 for i in e["indices"]):
            raise ValidationError("echo.indices must be a list of integers >= 1", key="echo.indices")
        _number(e, "horizon", "echo", positive=True, optional=True)
        m = v["matching"]
        if isinstance(m["free"], str):
            m["free"] = [m["free"]]
        if not isinstance(m["bounds"], dict):
            raise ValidationError("matching.bounds must be a table", key="matching.bounds")
        for name, b in m["bounds"].items():
            if not (isinstance(b, list) and len(b) == 2):
                raise ValidationError(f"matching.bounds.{name} must be [low, high]",
                                      key=f"matching.bounds.{name}")
        if not isinstance(m["targets"], dict):
            raise ValidationError("matching.targets must be a table", key="matching.targets")
        for k in m["targets"]:
            if not str(k).isdigit():
                raise ValidationError("matching.targets keys must be group indices",
                                      key=f"matching.targets.{k}")
        _number(m, "tol", "matching", positive=True)
        _number(m, "max_evaluations", "matching", positive=True, integer=True)
        _number(m, "restarts", "matching", nonneg=True, integer=True)
        _number(m, "tail", "matching", positive=True, optional=True)
        f = v["fit"]
        if f["field_kind"] not in ("intensity", "complex"):
            raise ValidationError("fit.field_kind must be 'intensity' or 'complex'",
                                  key="fit.field_kind")
        _number(f, "tol", "fit", positive=True)
        n = v["noise"]
        for k in ("high_power_decay", "decay_at", "decay_photon_number", "temperature",
                  "sweep_start", "sweep_stop"):
            _number(n, k, "noise", positive=True)
        _number(n, "tls_decay", "noise", nonneg=True, optional=True)
        _number(n, "critical_photon_number", "noise", positive=True)
        _number(n, "exponent", "noise", positive=True)
        _number(n, "stored_photons", "noise", positive=True)
        _number(n, "sweep_points", "noise", positive=True, integer=True)
        _number(n, "group", "noise", nonneg=True, integer=True)
        if n["sweep_stop"] < n["sweep_start"]:
            raise ValidationError("noise.sweep_stop must not be below sweep_start",
                                  key="noise.sweep_stop")
        t = v["tomography"]
        if t["channel"] not in CHANNELS:
            raise ValidationError(f"tomography.channel must be one of {CHANNELS}",
                                  key="tomography.channel")
        _number(t, "transmissivity", "tomography", nonneg=True)
        _number(t, "rotation", "tomography")
        _number(t, "amplitude_step", "tomography", positive=True)
        _number(t, "bootstrap", "tomography", nonneg=True, integer=True)
        _number(t, "padding", "tomography", nonneg=True, integer=True, optional=True)

    def tls_model(self):
        from .noise import TlsModel
        n = self.values["noise"]
        try:
            if n["tls_decay"] is not None:
                return TlsModel(n["high_power_decay"], n["tls_decay"],
                                n["critical_photon_number"], n["exponent"])
            return TlsModel.calibrated(n["high_power_decay"], n["decay_at"],
                                       photon_number=n["decay_photon_number"],
                                       critical_photon_number=n["critical_photon_number"],
                                       exponent=n["exponent"])
        except ValidationError as e:
            raise _rekey(e, "noise") from None

    def protocol(self):
        from .tomography import TomographyProtocol
        t = self.values["tomography"]
        try:
            return TomographyProtocol(self.amplitudes(), t["samples_per_amplitude"], t["dim"],
                                      t["phase_strategy"], tuple(t["lo_phases"]),
                                      t["input_phase"])
        except ValidationError as e:
            raise _rekey(e, "tomography") from None


def parse_toml(text: str, source="<config>") -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise FormatError(f"{source}: {e}") from None


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read, merge ``overrides`` (dotted keys) and validate a TOML configuration."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise FormatError(f"cannot read config {path}: {e.strerror}") from None
    return ExperimentConfig.from_dict(parse_toml(text, str(path)), overrides)


def versions() -> dict:
    from . import __version__
    from ._accel import backend_name
    return {"combmem": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "backend": backend_name()}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


@dataclass
class RunReport:
    """Provenance and results of one CLI invocation."""

    command: str
    config: dict
    results: dict
    seed: int
    versions: dict = field(default_factory=versions)
    duration_s: float = 0.0
    outputs: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return _plain({"command": self.command, "seed": self.seed, "versions": self.versions,
                       "duration_s": self.duration_s, "outputs": self.outputs,
                       "config": self.config, "results": self.results})

    def to_json(self, path=None) -> str:
        text = json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(d["command"], d["config"], d["results"], d["seed"], d["versions"],
                   d["duration_s"], d.get("outputs", []))

    @classmethod
    def from_json(cls, path_or_text: Any) -> "RunReport":
        text = str(path_or_text)
        if not text.lstrip().startswith("{"):
            with open(text, encoding="utf-8") as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))
