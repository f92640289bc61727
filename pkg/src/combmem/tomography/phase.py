"""Mean-field phase estimates from homodyne batches."""
from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import circmean, circstd

from ..errors import DataError, EstimationError
from .homodyne import QuadratureBatch

MIN_INPUT_PHASES = 4


class MeanField(NamedTuple):
    amplitude: complex
    standard_error: float


class PhaseShift(NamedTuple):
    shift: float
    circular_std: float
    per_input: np.ndarray


def mean_field(batch: QuadratureBatch) -> MeanField:
    """Least-squares ``alpha`` from ``x = sqrt(2) Re(alpha e^{-i theta}) + noise``."""
    th = batch.phases
    if np.unique(np.round(np.mod(th, math.pi), 12)).size < 2:
        raise DataError("mean-field estimate needs at least two LO phases modulo pi")
    A = math.sqrt(2.0) * np.column_stack([np.cos(th), np.sin(th)])
    coef, *_ = np.linalg.lstsq(A, batch.values, rcond=None)
    resid = batch.values - A @ coef
    dof = max(len(th) - 2, 1)
    cov = np.linalg.inv(A.T @ A) * (resid @ resid / dof)
    return MeanField(complex(coef[0], coef[1]), float(math.sqrt(np.trace(cov) / 2)))


def _amplitude(item):
    if isinstance(item, QuadratureBatch):
        mf = mean_field(item)
        if abs(mf.amplitude) < 3 * mf.standard_error:
            raise EstimationError("mean field below three standard errors; phase undefined")
        return mf.amplitude
    a = complex(item)
    if a == 0:
        raise EstimationError("zero input amplitude has no phase")
    return a


def phase_shift_estimate(input_batches: Sequence, output_batches: Sequence) -> PhaseShift:
    """Phase acquired by the mean field, circular-averaged over the inputs.

    ``input_batches`` may hold batches measured on the probes or their known
    complex amplitudes. Returns the mean shift in ``(-pi, pi]``, the circular
    standard deviation across inputs and the per-input shifts.
    """
    if len(input_batches) != len(output_batches):
        raise DataError("input and output lists must have equal length")
    a_in = [_amplitude(b) for b in input_batches]
    a_out = [_amplitude(b) for b in output_batches]
    in_phases = np.angle(a_in)
    if np.unique(np.round(np.mod(in_phases, 2 * math.pi), 9)).size < MIN_INPUT_PHASES:
        raise DataError(f"need at least {MIN_INPUT_PHASES} distinct input phases")
    shifts = np.angle(np.asarray(a_out) / np.asarray(a_in))
    mean = float(circmean(shifts, high=math.pi, low=-math.pi))
    mean = math.atan2(math.sin(mean), math.cos(mean))
    return PhaseShift(mean, float(circstd(shifts, high=math.pi, low=-math.pi)), shifts)
