"""PnPKit: plug-and-play signal reconstruction with batch and online solvers."""

__version__ = "0.1.0"
