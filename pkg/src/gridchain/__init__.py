"""Pseudonymous, bloom-filter-authenticated smart-meter aggregation on a per-group private chain."""

__version__ = "0.1.0"
