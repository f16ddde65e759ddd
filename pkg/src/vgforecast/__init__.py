"""Visibility-graph structural features and attention-based direction forecasting."""

__version__ = "0.1.0"
