"""Substation energy disaggregation with behind-the-meter solar.

Two engines share one data model: a deterministic dictionary-learning
engine (``det_train`` / ``det_disagg``) and a Bayesian spike-and-slab
engine (``bayes_train`` / ``bayes_test``) that also reports per-load
uncertainty.
"""
from .core import Dataset, DataShape, LoadClassSpec, default_specs, validate_dataset
from .errors import DisaggError

__version__ = "0.1.0"

__all__ = ["DataShape", "Dataset", "DisaggError", "LoadClassSpec", "default_specs",
           "validate_dataset", "__version__"]
