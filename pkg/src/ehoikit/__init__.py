"""Desk-scale egocentric hand-object interaction toolkit."""

__version__ = "0.1.0"
