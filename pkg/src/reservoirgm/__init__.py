"""Gaussian graphical models for reservoir networks.

Sparse, latent-variable, and conditional latent-variable precision
estimation via regularized max-det programs, plus the surrounding
pipeline: time-series preprocessing, hyperparameter selection, latent
space attribution, network analytics, and conditional-Gaussian
exhaustion risk.
"""

__version__ = "0.1.0"
