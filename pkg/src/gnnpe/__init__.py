"""Exact subgraph matching via dominance-preserving star/path embeddings."""

__version__ = "0.1.0"
