"""Experiment harness: configuration, runs, persistence and check suites."""

__version__ = "0.1.0"
