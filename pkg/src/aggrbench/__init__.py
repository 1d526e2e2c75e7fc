"""Scatter-, reduce-, pull- and push-based GNN aggregation with a characterization harness."""

__version__ = "0.1.0"
