"""Receding-horizon gradient-based control with lookahead cost predictions."""

__version__ = "1.0.0"
