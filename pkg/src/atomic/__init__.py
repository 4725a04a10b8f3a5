"""Validation, simulation and deviation analysis of memristive IMPLY-logic algorithms."""

__version__ = "0.1.0"
