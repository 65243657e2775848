"""Kernel falsification tests comparing observational CATE estimates with an RCT."""

__version__ = "0.1.0"
