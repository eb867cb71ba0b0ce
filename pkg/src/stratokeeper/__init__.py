"""Balloon station-keeping simulation and launch-configuration optimisation."""

__version__ = "0.1.0"
