"""Sandboxed executor for generated calculation scripts (stdio JSON protocol)."""

__version__ = "0.1.0"
