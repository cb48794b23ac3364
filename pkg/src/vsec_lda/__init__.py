"""Correspondence topic model with vocabulary selection embedded in Gibbs inference."""

__version__ = "0.1.0"
