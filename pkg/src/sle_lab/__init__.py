"""Numerical experiments on SLE time sets, diffusions and critical percolation."""

__version__ = "0.1.0"
