"""Semantic 3D house wireframe synthesis, tokenization, generation and evaluation."""

__version__ = "0.1.0"
