"""Firm lifecycle events, officer resolution and SARIMA counterfactuals."""
__version__ = "0.1.0"
