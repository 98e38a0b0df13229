"""Evolving alert-driven attack graphs with next-action forecasting."""

__version__ = "0.1.0"
