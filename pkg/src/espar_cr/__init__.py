"""Sector-based opportunistic spectrum access with an ESPAR antenna."""

__version__ = "0.1.0"
