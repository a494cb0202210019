"""Fairness-aware service robot training with bias-detection guidance."""

__version__ = "0.1.0"
