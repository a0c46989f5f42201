"""Empirical verification harness for expord."""

from expord.analysis.runner import RunResult, SampleRunner
from expord.analysis.verification import (
    attractor_estimate,
    check_subequilibrium,
    part_metric_trace,
    persistence_floor,
    verify_cone_entry,
    verify_monotone,
    verify_sublinear,
)

__all__ = [
    "RunResult",
    "SampleRunner",
    "attractor_estimate",
    "check_subequilibrium",
    "part_metric_trace",
    "persistence_floor",
    "verify_cone_entry",
    "verify_monotone",
    "verify_sublinear",
]
