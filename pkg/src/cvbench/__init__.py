"""Benchmark harness for internal clustering validity indexes."""

__version__ = "0.1.0"
