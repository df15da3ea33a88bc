"""Symbolic planning with learned executors for novelty-induced impasses."""

__version__ = "0.1.0"
