"""Simulate depth-camera respiration videos and measure how sensor noise degrades them."""

__version__ = "0.1.0"
