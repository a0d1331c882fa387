"""Benchmark harness for anomaly detection on high-dimensional cloud telemetry."""

__version__ = "0.1.0"
