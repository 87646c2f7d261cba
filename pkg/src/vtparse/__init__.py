"""Unsupervised dependency parsing with a transition-based encoder and a
generative transition decoder, trained under POS-rule constraints."""

__version__ = "0.1.0"
