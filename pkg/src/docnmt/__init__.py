"""Document-aware neural machine translation with global and local document embeddings."""

__version__ = "0.1.0"
