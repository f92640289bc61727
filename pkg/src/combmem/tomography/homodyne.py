"""Homodyne quadrature statistics, sampling and data containers.

Quadrature convention: ``x_theta = (a e^{-i theta} + a^dag e^{i theta}) / sqrt(2)``,
so the vacuum has variance 1/2 and a coherent state ``|alpha>`` has mean
``sqrt(2) |alpha| cos(theta - arg alpha)``.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline

from ..errors import AccuracyError, DataError, FormatError, ValidationError
from ..kernels import hermite_functions, invert_cdf
from .states import CoherentState, DensityMatrix

CDF_TOL = 1e-6
# Coherent states needing more Fock levels than this are sampled from their
# exact Gaussian quadrature law instead of the tabulated inverse CDF.
FAST_PATH_DIM = 40
PHASE_STRATEGIES = ("fixed", "uniform_scan")


def quadrature_range(dim):
    """Half-width of an x interval holding all but ~1e-20 of any ``dim``-level state."""
    return math.sqrt(2.0 * dim + 1.0) + 7.0


def _pair_coefficients(rho: np.ndarray):
    """``c[d, m]`` such that ``p(x|theta) = sum_d Re(e^{i d theta} sum_m c[d,m] psi_m psi_{m+d})``."""
    dim = rho.shape[0]
    c = np.zeros((dim, dim), dtype=complex)
    for d in range(dim):
        diag = np.diagonal(rho, offset=d)  # rho[m, m + d]
        c[d, :dim - d] = diag if d == 0 else 2.0 * diag
    return c


def _harmonic_terms(rho: np.ndarray, psi: np.ndarray):
    """``H_d(x)`` for every offset ``d``; ``psi`` has shape ``(dim, K)``."""
    dim = rho.shape[0]
    c = _pair_coefficients(rho)
    H = np.zeros((dim, psi.shape[1]), dtype=complex)
    for d in range(dim):
        H[d] = c[d, :dim - d] @ (psi[:dim - d] * psi[d:])
    return H


class QuadratureDensity:
    """Evaluable ``p(x | theta)`` for a Fock-basis state."""

    def __init__(self, rho, phase=0.0):
        self.rho = rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho, complex)
        self.phase = float(phase)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        psi = hermite_functions(self.rho.shape[0], x.ravel())
        H = _harmonic_terms(self.rho, psi)
        rot = np.exp(1j * np.arange(H.shape[0]) * self.phase)
        p = np.real(rot @ H)
        return p.reshape(x.shape) if x.ndim else float(p[0])

    def mean(self):
        """Exact ``<x_theta>`` from the off-diagonal ``rho[m, m+1]`` terms."""
        dim = self.rho.shape[0]
        m = np.arange(dim - 1)
        s = np.sum(self.rho[m, m + 1] * np.sqrt(m + 1.0))
        return float(math.sqrt(2.0) * np.real(s * np.exp(1j * self.phase)))


def quadrature_pdf(rho, phase) -> QuadratureDensity:
    """Density of homodyne outcomes at local-oscillator phase ``phase``."""
    return QuadratureDensity(rho, phase)


@dataclass
class CdfTable:
    """Tabulated quadrature CDF, valid for every LO phase at once."""

    x: np.ndarray
    cdf_coef: np.ndarray
    pdf_coef: np.ndarray

    def cdf(self, x, phase):
        # cubic Hermite with the density as slope, as used by the sampler
        rot = np.exp(1j * np.arange(self.cdf_coef.shape[0]) * phase)
        F = np.real(rot @ self.cdf_coef)
        f = np.real(rot @ self.pdf_coef)
        xc = np.clip(x, self.x[0], self.x[-1])
        return CubicHermiteSpline(self.x, F, f)(xc)


def cdf_table(rho: np.ndarray, tol=CDF_TOL * 1e-3, max_refinements=6) -> CdfTable:
    """Cumulative integrals of the ``H_d`` terms on a grid refined until
    the total mass and the vanishing off-diagonal integrals agree with their
    exact values to ``tol``."""
    dim = rho.shape[0]
    L = quadrature_range(dim)
    h = min(0.02, 0.25 / math.sqrt(2.0 * dim + 1.0))
    for _ in range(max_refinements + 1):
        K = 2 * int(math.ceil(L / h)) + 1
        x = np.linspace(-L, L, K)
        psi = hermite_functions(dim, x)
        H = _harmonic_terms(rho, psi)
        C = np.zeros_like(H)
        C[:, 1:] = (cumulative_simpson(H.real, x=x, axis=1)
                    + 1j * cumulative_simpson(H.imag, x=x, axis=1))
        target = np.zeros(dim, dtype=complex)
        target[0] = np.trace(rho)
        if np.max(np.abs(C[:, -1] - target)) < tol:
            return CdfTable(x, C, H)
        h /= 2
    raise AccuracyError("quadrature CDF table did not reach the requested accuracy")


@dataclass(frozen=True, eq=False)
class QuadratureBatch:
    phases: np.ndarray
    values: np.ndarray
    temporal_mode_id: str = ""

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=float).ravel()
        x = np.asarray(self.values, dtype=float).ravel()
        if ph.shape != x.shape:
            raise ValidationError("phases and values must have equal length", key="values")
        if not (np.all(np.isfinite(ph)) and np.all(np.isfinite(x))):
            raise ValidationError("quadrature batch has non-finite entries", key="values")
        object.__setattr__(self, "phases", ph)
        object.__setattr__(self, "values", x)

    def __len__(self):
        return self.values.size

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta_rad", "x"])
            for t, x in zip(self.phases.tolist(), self.values.tolist()):
                w.writerow([repr(t), repr(x)])

    @classmethod
    def from_csv(cls, path, temporal_mode_id=""):
        try:
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from None
        if not rows or [c.strip() for c in rows[0]] != ["theta_rad", "x"]:
            raise FormatError(f"{path}: expected header 'theta_rad,x'")
        try:
            data = np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
        return cls(data[:, 0], data[:, 1], temporal_mode_id)

    @classmethod
    def concatenate(cls, batches, temporal_mode_id=""):
        return cls(np.concatenate([b.phases for b in batches]),
                   np.concatenate([b.values for b in batches]), temporal_mode_id)


@dataclass(frozen=True)
class TomographyProtocol:
    """Coherent-state probe set for process tomography.

    ``fixed`` uses the LO phases in ``lo_phases`` cyclically; ``uniform_scan``
    draws each sample's LO phase uniformly from ``[0, 2 pi)``.
    """

    amplitudes: tuple
    samples_per_amplitude: int = 200_000
    dim: int = 4
    phase_strategy: str = "uniform_scan"
    lo_phases: tuple = (0.0,)
    input_phase: float = 0.0

    def __post_init__(self):
        amps = tuple(float(a) for a in np.atleast_1d(self.amplitudes))
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "lo_phases", tuple(float(p) for p in np.atleast_1d(self.lo_phases)))
        if not amps:
            raise ValidationError("protocol needs at least one amplitude", key="amplitudes")
        if any(a < 0 or not math.isfinite(a) for a in amps):
            raise ValidationError("amplitudes must be finite and non-negative", key="amplitudes")
        if list(amps) != sorted(amps):
            raise ValidationError("amplitudes must be sorted ascending", key="amplitudes")
        if int(self.samples_per_amplitude) != self.samples_per_amplitude \
                or self.samples_per_amplitude < 1000:
            raise ValidationError("samples_per_amplitude must be an integer >= 1000",
                                  key="samples_per_amplitude")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError("dim must be a positive integer", key="dim")
        if self.phase_strategy not in PHASE_STRATEGIES:
            raise ValidationError(f"phase_strategy must be one of {PHASE_STRATEGIES}",
                                  key="phase_strategy")
        if not self.lo_phases:
            raise ValidationError("lo_phases must not be empty", key="lo_phases")

    @classmethod
    def standard_scan(cls, **overrides):
        """0 to 1.2 in steps of 0.02, 2e5 quadratures each, cutoff 4."""
        amps = tuple(np.round(np.arange(61) * 0.02, 10))
        kw = dict(amplitudes=amps, samples_per_amplitude=200_000, dim=4)
        kw.update(overrides)
        return cls(**kw)

    @property
    def phases(self):
        return "uniform_scan" if self.phase_strategy == "uniform_scan" else self.lo_phases

    def input_state(self, index) -> CoherentState:
        a = self.amplitudes[index]
        return CoherentState(a * complex(math.cos(self.input_phase), math.sin(self.input_phase)))

    def as_dict(self):
        return {
            "amplitudes": list(self.amplitudes),
            "samples_per_amplitude": int(self.samples_per_amplitude),
            "dim": int(self.dim),
            "phase_strategy": self.phase_strategy,
            "lo_phases": list(self.lo_phases),
            "input_phase": self.input_phase,
        }


def _rng(seed):
    return np.random.default_rng(seed)


def _draw_phases(rng, phases, count):
    if isinstance(phases, str):
        if phases != "uniform_scan":
            raise ValidationError(f"unknown phase strategy {phases!r}", key="phase_strategy")
        return rng.uniform(0.0, 2 * math.pi, count)
    ph = np.atleast_1d(np.asarray(phases, dtype=float))
    if ph.size == 0 or not np.all(np.isfinite(ph)):
        raise ValidationError("phases must be finite and non-empty", key="phases")
    if ph.size == count:
        return ph.copy()
    return np.resize(ph, count)


StateLike = Union[DensityMatrix, CoherentState, np.ndarray]


def sample_quadratures(state: StateLike, phases, count, seed, temporal_mode_id="",
                       exact_gaussian=None) -> QuadratureBatch:
    """Draw ``count`` homodyne outcomes.

    ``phases`` is ``"uniform_scan"``, a single phase, a list of phases used
    cyclically, or one phase per sample. Values come from the tabulated
    inverse CDF of the state's quadrature density. A :class:`CoherentState`
    that would need more than ``FAST_PATH_DIM`` Fock levels (or any coherent
    state when ``exact_gaussian`` is true) is drawn from its exact Gaussian
    law. Identical arguments give identical batches.
    """
    count = int(count)
    if count < 1:
        raise ValidationError("count must be at least 1", key="count")
    rng = _rng(seed)
    thetas = _draw_phases(rng, phases, count)
    if isinstance(state, CoherentState):
        dim = state.required_dim()
        gaussian = exact_gaussian if exact_gaussian is not None else dim > FAST_PATH_DIM
        if gaussian:
            mean = math.sqrt(2.0) * np.real(state.alpha * np.exp(-1j * thetas))
            return QuadratureBatch(thetas, mean + rng.normal(0.0, math.sqrt(0.5), count),
                                   temporal_mode_id)
        state = state.density(dim)
    rho = state.elements if isinstance(state, DensityMatrix) else DensityMatrix(state).elements
    table = cdf_table(rho)
    us = rng.random(count)
    x = invert_cdf(table.x, table.cdf_coef, table.pdf_coef, thetas, us)
    return QuadratureBatch(thetas, x, temporal_mode_id)


def simulate_runs(channel: Callable, protocol: TomographyProtocol, seed, workers=None):
    """Send every probe state of ``protocol`` through ``channel`` and sample its output.

    Amplitude ``i`` uses the independent stream ``(seed, i)``, so results do
    not depend on ``workers``. Returns ``[(alpha, QuadratureBatch), ...]``.
    """
    def one(i):
        probe = protocol.input_state(i)
        out = channel(probe)
        batch = sample_quadratures(out, protocol.phases, protocol.samples_per_amplitude,
                                   [int(seed), i], temporal_mode_id=f"amp{i:03d}")
        return probe.alpha, batch

    idx = range(len(protocol.amplitudes))
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, idx))
    return [one(i) for i in idx]
