"""Preference optimization for multi-agent trajectory prediction consistency."""

__version__ = "0.1.0"
