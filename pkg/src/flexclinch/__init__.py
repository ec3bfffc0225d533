"""Clinching-auction mechanisms for real-time demand-response flexibility markets."""

__version__ = "0.1.0"
