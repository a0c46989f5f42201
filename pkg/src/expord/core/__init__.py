"""Core module for exponential-ordering computations on Nicholson systems."""

from expord.core.coeffs import Harmonic, ModulatedCoefficient, QuasiPeriodicCoefficient, window_sup
from expord.core.cone import ConeSpec, cone_contains, in_interior, leq_B, part_metric
from expord.core.fnspace import HistorySegment, constant_history, make_history
from expord.core.integrator import Trajectory, integrate, integrate_many, segment_at
from expord.core.models import AttractorEstimate, ConditionReport, OrderReport, Verdict, VerificationReport
from expord.core.nicholson import NicholsonModel, rhs, transform_mean, validate_model

__all__ = [
    "Harmonic",
    "ModulatedCoefficient",
    "QuasiPeriodicCoefficient",
    "window_sup",
    "ConeSpec",
    "cone_contains",
    "in_interior",
    "leq_B",
    "part_metric",
    "HistorySegment",
    "constant_history",
    "make_history",
    "Trajectory",
    "integrate",
    "integrate_many",
    "segment_at",
    "AttractorEstimate",
    "ConditionReport",
    "OrderReport",
    "Verdict",
    "VerificationReport",
    "NicholsonModel",
    "rhs",
    "transform_mean",
    "validate_model",
]
