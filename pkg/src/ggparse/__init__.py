"""Greedy dependency parsing with biaffine arc scores and predicted tree layers."""

__version__ = "0.1.0"
