"""Desk-scale simulator for GHZ-entanglement-based secure aggregation in federated learning."""

__version__ = "0.1.0"
