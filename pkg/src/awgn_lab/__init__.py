"""Numerics for the amplitude-limited Gaussian channel.

Discrete-input output mixtures, divergences between them, circle wrapping,
a certified capacity solver, closed-form support-size bounds and a CLI.
"""
__version__ = "0.1.0"
