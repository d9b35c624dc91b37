"""Simulation and analysis toolkit for directed polymers in random environments."""

__version__ = "0.1.0"
