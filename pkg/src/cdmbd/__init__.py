"""Constrained dynamic Markov-blanket detection."""
__version__ = "0.1.0"
