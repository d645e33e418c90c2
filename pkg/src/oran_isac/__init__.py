"""Secure ISAC sensing in an O-RAN cell: waveform to control loop."""

__version__ = "0.1.0"
