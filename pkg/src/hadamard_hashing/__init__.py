"""Hadamard-codebook learning to hash: codebooks, training and Hamming retrieval."""

__version__ = '0.1'
