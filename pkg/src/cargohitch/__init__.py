"""Freight transport in the spare capacity of scheduled passenger transit."""

__version__ = "0.1.0"
