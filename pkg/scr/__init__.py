"""Style conditioned recommendations: a conditional VAE recommender with interpretable style profiles."""

__version__ = "1.0.0"
