"""Actual-cause diagnosis and counterfactual repair of black-box controllers."""

__version__ = "0.1.0"
