"""Fractional stochastic series from critical XXZ spin chains and classical fractional processes."""

__version__ = "0.1.0"
