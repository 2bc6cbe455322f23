"""Exact conditional inference on contingency tables with Markov, Graver and
lattice move sets."""

__version__ = "0.1.0"
