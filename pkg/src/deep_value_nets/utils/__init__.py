"""Utility functions."""

from deep_value_nets.utils.logging import setup_logging

__all__ = ["setup_logging"]
