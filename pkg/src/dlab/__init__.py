"""Numerical laboratory for bilinear decay, wave packets and almost-conservation laws."""
__version__ = "0.1.0"
