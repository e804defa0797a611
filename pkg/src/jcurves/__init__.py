"""Numerical toolkit for pseudo-holomorphic curve analysis on degenerating surfaces."""

__version__ = "0.1.0"
