"""Unsupervised keyword extraction from full-sentence VQA answers."""

__version__ = "0.1.0"
