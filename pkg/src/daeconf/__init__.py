"""Denoising-autoencoder confidence scores against classifier overgeneralization."""

__version__ = "0.1.0"
