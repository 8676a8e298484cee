"""Paillier-encrypted image datasets and a small CNN to classify them."""

__version__ = "0.1.0"
