"""Bath-coupled Brownian motion, its Kramers equation, and the quantized master equation."""

__version__ = "0.1.0"
