"""Blockchain radio-access queueing, latency-bound and double-spend analysis."""

__version__ = "0.1.0"
