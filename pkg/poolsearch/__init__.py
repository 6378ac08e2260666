"""Persistent-pool stochastic backtracking search over PRM-scored reasoning prefixes."""

__version__ = "0.3.0"
