"""
Experiments module for skyheight
Contains the experiment configuration, the sweep harness and the CLI
"""

from .config import ExperimentConfig
from .harness import CellSpec, ExperimentHarness, SummaryRow

__all__ = [
    "ExperimentConfig",
    "CellSpec",
    "ExperimentHarness",
    "SummaryRow",
]
