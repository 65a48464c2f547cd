"""Desk-scale network-flow classification pipelines.

Submodules:
    data       flow datasets and class schemas
    ingest     CSV parsing, cleaning, standardization, splitting
    resample   SMOTE, undersampling, ENN, categorization, double balancing
    nnet       from-scratch dense neural network
    pipelines  hierarchical topologies (binary-first and categorized)
    evaluate   confusion matrices, metrics, reports, heat maps
    synth      seeded Gaussian-cluster dataset generator
    cli        command-line entry point

This module stays import-light on purpose: the CLI applies the
FLOWGATE_THREADS cap before anything pulls in numpy.
"""
from __future__ import annotations

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "data",
    "ingest",
    "resample",
    "nnet",
    "pipelines",
    "evaluate",
    "synth",
    "cli",
    "errors",
)


def __getattr__(name: str):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
