"""Guided-clustering classifiers: borrow the cluster structure of an easy guide
(a separable dataset or fixed prototype vectors) to classify a cluttered one."""

__version__ = "0.1.0"
