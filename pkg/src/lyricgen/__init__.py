"""Melody- and theme-conditioned lyrics generation with a SeqGAN."""

__version__ = "0.1.0"
