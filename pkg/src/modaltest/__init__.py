"""Impact-hammer modal test simulation and analysis."""

__version__ = "0.1.0"
