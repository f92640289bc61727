"""Simulation and tomography toolkit for multi-resonator microwave comb memories."""
from ._accel import backend_name
from .errors import CombMemError, InputError, NumericalError
from .model import (CombSpec, CommonResonatorParams, MemoryDevice, Pulse, ResonatorParams,
                    TimeGrid, build_comb, build_multicomb)

__version__ = "0.1.0"

__all__ = [
    "CombMemError", "CombSpec", "CommonResonatorParams", "InputError", "MemoryDevice",
    "NumericalError", "Pulse", "ResonatorParams", "TimeGrid", "backend_name", "build_comb",
    "build_multicomb", "__version__",
]
