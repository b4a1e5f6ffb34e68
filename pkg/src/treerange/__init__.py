"""Range of random walks indexed by Galton-Watson trees."""
__version__ = "0.1.0"
