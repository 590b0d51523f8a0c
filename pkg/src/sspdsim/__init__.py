"""Pulse-train response and blinding analysis of superconducting nanowire single-photon detectors."""

__version__ = "0.1.0"
