"""Predictive structure/texture image transmission over a slotted UAV downlink."""

__version__ = "0.1.0"
