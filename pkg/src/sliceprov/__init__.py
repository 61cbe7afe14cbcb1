"""Uncertainty-aware infrastructure provisioning for network slices."""

__version__ = "0.1.0"
