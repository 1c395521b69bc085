"""Desk-scale simulator for energy-aware federated learning over LTE + NR."""

__version__ = "0.1.0"
