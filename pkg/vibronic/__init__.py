"""Superconducting-circuit emulation of molecular vibronic spectra."""

__version__ = "0.1.0"
