"""Distillation effects on learned representations, measured through 2D
triplet embeddings of intermediate activations."""

__version__ = "0.1.0"
