"""Prototype-based discriminative training with positive and negative prototypes."""
__version__ = "0.1.0"
