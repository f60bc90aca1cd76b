"""Fault-tolerant quadruped locomotion via teacher-student reinforcement
learning: per-fault teacher policies distilled through similarity (style)
rewards into one encoder-decoder student policy, with a desk-scale
simulator and evaluation harness."""

__version__ = "0.1.0"

from .config import Config, desk_profile, load_profile, paper_profile
from .faults import FaultCase, FaultClass, enumerate_fault_cases

__all__ = [
    "Config",
    "FaultCase",
    "FaultClass",
    "desk_profile",
    "enumerate_fault_cases",
    "load_profile",
    "paper_profile",
    "__version__",
]
