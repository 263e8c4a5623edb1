"""
Utility Functions Module for skyheight
Provides seeding, unit conversion, normalization and logging helpers
"""

import hashlib
import logging
import math
from typing import Optional, Union

import numpy as np
from rich.logging import RichHandler


# Floor applied when a linear SINR of zero is expressed in dB
DB_FLOOR = -300.0


class SkyheightError(Exception):
    """Base class for errors raised by skyheight"""


class ConfigError(SkyheightError, ValueError):
    """Raised for malformed or invalid configuration"""


class EpisodeFinishedError(SkyheightError, RuntimeError):
    """Raised when stepping an environment whose episode is already done"""


class CellError(SkyheightError):
    """Raised when an experiment cell fails; carries the cell id"""

    def __init__(self, cell_id: str, cause: Exception):
        self.cell_id = cell_id
        self.cause = cause
        super().__init__(f"cell {cell_id} failed: {cause}")


class ReplayMismatchError(SkyheightError):
    """Raised when a logged spectral efficiency cannot be reproduced"""

    def __init__(self, row: int, logged: float, recomputed: float):
        self.row = row
        self.logged = logged
        self.recomputed = recomputed
        super().__init__(
            f"steps.csv row {row}: logged se {logged!r} != recomputed {recomputed!r}"
        )


class SimUtils:
    """
    Utility functions shared by the simulator modules
    """

    @staticmethod
    def derive_seed(master_seed: int, *labels: Union[str, int, float]) -> int:
        """
        Derive a labeled child seed from a master seed

        The derivation is sha256 over the master seed and the labels joined
        with '|', truncated to 63 bits. It is stable across runs, platforms
        and Python versions.

        Args:
            master_seed: Master seed
            *labels: Purpose labels (strings or numbers)

        Returns:
            int: Non-negative 63-bit child seed
        """
        parts = [str(int(master_seed))] + [SimUtils._label(label) for label in labels]
        digest = hashlib.sha256("|".join(parts).encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") >> 1

    @staticmethod
    def _label(label: Union[str, int, float]) -> str:
        if isinstance(label, float):
            return repr(float(label))
        return str(label)

    @staticmethod
    def substream(seed: int, label: str) -> np.random.Generator:
        """
        Create an independent PCG64 generator for one purpose

        Args:
            seed: Parent seed (topology seed or cell seed)
            label: Purpose label, e.g. "bs-positions" or "exploration"

        Returns:
            np.random.Generator: Seeded generator
        """
        return np.random.default_rng(SimUtils.derive_seed(seed, label))

    @staticmethod
    def linear_to_db(value: float) -> float:
        """
        Convert a linear power ratio to decibels

        Args:
            value: Linear ratio (>= 0)

        Returns:
            float: Value in dB, floored at DB_FLOOR for zero
        """
        if value <= 0.0:
            return DB_FLOOR
        return max(10.0 * math.log10(value), DB_FLOOR)

    @staticmethod
    def db_to_linear(value_db: float) -> float:
        """
        Convert decibels to a linear power ratio

        Args:
            value_db: Value in dB

        Returns:
            float: Linear ratio
        """
        return 10.0 ** (value_db / 10.0)

    @staticmethod
    def normalize_clipped(value: float, low: float, high: float) -> float:
        """
        Clip a value to [low, high] and map it affinely to [0, 1]

        Args:
            value: Raw value
            low: Lower clip bound
            high: Upper clip bound

        Returns:
            float: Normalized value in [0, 1]
        """
        if high <= low:
            raise ValueError(f"Invalid normalization range [{low}, {high}]")
        clipped = min(max(value, low), high)
        return (clipped - low) / (high - low)

    @staticmethod
    def wrap_angle(angle_rad: float) -> float:
        """
        Wrap an angle to [-pi, pi)

        Args:
            angle_rad: Angle in radians

        Returns:
            float: Wrapped angle
        """
        return (angle_rad + math.pi) % (2.0 * math.pi) - math.pi

    @staticmethod
    def setup_logging(verbose: bool = False, log_file: Optional[str] = None) -> logging.Logger:
        """
        Configure the package logger with a rich console handler

        Args:
            verbose: Log at DEBUG instead of INFO
            log_file: Optional path of a plain-text log file

        Returns:
            logging.Logger: The configured "skyheight" logger
        """
        logger = logging.getLogger("skyheight")
        logger.setLevel(logging.DEBUG if verbose else logging.INFO)
        logger.handlers.clear()
        logger.propagate = False

        console = RichHandler(show_path=False, rich_tracebacks=True)
        console.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(console)

        if log_file:
            file_handler = logging.FileHandler(log_file, mode="w")
            file_handler.setFormatter(
                logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
            )
            logger.addHandler(file_handler)

        return logger
