"""Numerics for conformal quaternionic contact geometry on its flat models."""

__version__ = "0.1.0"
