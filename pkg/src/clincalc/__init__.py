"""Batch harness for step-wise grading, structured error attribution, and
retrieval+code solving of clinical calculation benchmarks."""

__version__ = "0.1.0"
