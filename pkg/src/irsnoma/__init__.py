"""Multi-cell IRS-aided NOMA downlink: channel model, optimizers and experiment harness."""

from .scenario import Scenario, ChannelSet, path_loss, sample_channels
from .phys import Assignment, ContinuousState

__all__ = [
    "Scenario",
    "ChannelSet",
    "path_loss",
    "sample_channels",
    "Assignment",
    "ContinuousState",
]

__version__ = "0.1.0"
