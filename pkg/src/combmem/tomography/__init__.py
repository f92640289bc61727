"""Coherent-state homodyne tomography of states and phase-invariant processes."""
from .homodyne import (QuadratureBatch, QuadratureDensity, TomographyProtocol, cdf_table,
                       quadrature_pdf, sample_quadratures, simulate_runs)
from .memory import memory_channel
from .mle import mle_process, mle_state, predicted_populations
from .phase import MeanField, PhaseShift, mean_field, phase_shift_estimate
from .states import (CoherentState, CutoffWarning, DensityMatrix, LossRotationChannel,
                     ProcessTensor, coherent_state, loss_channel, loss_kraus, rotation)

__all__ = [
    "CoherentState", "CutoffWarning", "DensityMatrix", "LossRotationChannel", "MeanField",
    "PhaseShift", "ProcessTensor", "QuadratureBatch", "QuadratureDensity",
    "TomographyProtocol", "cdf_table", "coherent_state", "loss_channel", "loss_kraus",
    "mean_field", "memory_channel", "mle_process", "mle_state", "phase_shift_estimate", "predicted_populations",
    "quadrature_pdf", "rotation", "sample_quadratures", "simulate_runs",
]
