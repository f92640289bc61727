"""The echo memory viewed as a single-mode quantum channel."""
from __future__ import annotations

from ..dynamics import default_step, echo_mode_transfer, propagate
from ..model import MemoryDevice, Pulse, TimeGrid
from .states import LossRotationChannel


def memory_channel(device: MemoryDevice, pulse: Pulse, group=0, echo_index=1,
                   mode="gaussian") -> LossRotationChannel:
    """Loss-plus-rotation channel from an input pulse to the chosen echo.

    The device is linear, so a coherent probe maps to a coherent echo with
    amplitude scaled by ``sqrt(eta) e^{i phi}``; ``eta`` and ``phi`` come from
    projecting the simulated echo onto the delayed pulse shape.
    """
    frame = device.group_center(group)
    spacing = device.group_spacing(group)
    after = max((echo_index + 1) / spacing, 4.0 / device.min_spacing())
    grid = TimeGrid.around(pulse, after, default_step(device))
    traj = propagate(device, pulse, grid, frame_frequency=frame)
    eta, phi = echo_mode_transfer(traj, spacing, echo_index, mode)
    return LossRotationChannel(min(max(eta, 0.0), 1.0), phi)
