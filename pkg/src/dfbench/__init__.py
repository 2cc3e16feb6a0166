"""Desk-scale benchmarking harness for video deepfake detectors."""

__version__ = "0.1.0"
