"""Deterministic simulator of attention-weighted federated averaging on edge traces."""

__version__ = "0.1.0"
