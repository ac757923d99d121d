"""Dynamical variational autoencoders for speech power spectrograms."""

__version__ = "0.1.0"
