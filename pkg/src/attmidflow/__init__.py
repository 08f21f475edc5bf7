"""Attention/midway optical flow estimation and flow-based gesture recognition."""

__version__ = "0.1.0"
