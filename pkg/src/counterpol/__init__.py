"""Counterfactual explanation policies for classic-control RL."""

__version__ = "0.1.0"
