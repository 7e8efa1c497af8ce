"""Coupling towards the past: marginal samplers, their derandomisation and certified counting."""

from .core import (
    BOT,
    TRUNCATED,
    FiniteDistribution,
    ModelSpec,
    RandomSource,
    ReplaySource,
    RngSource,
    ScanClock,
    Tape,
    approx_resolve,
    resolve,
)
from .model import Hypergraph, parse_hypergraph

__version__ = "0.1.0"

__all__ = [
    "BOT",
    "TRUNCATED",
    "FiniteDistribution",
    "Hypergraph",
    "ModelSpec",
    "RandomSource",
    "ReplaySource",
    "RngSource",
    "ScanClock",
    "Tape",
    "approx_resolve",
    "parse_hypergraph",
    "resolve",
]
