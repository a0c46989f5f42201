"""Report data models for expord."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np


def to_plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and nested containers to JSON-ready values."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # JSON has no infinities
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    return value


class Verdict(str, Enum):
    """Outcome of a tested condition."""

    HOLDS_STRICT = "holds-strict"
    HOLDS_NON_STRICT = "holds-non-strict"
    INDETERMINATE = "indeterminate-within-scan"
    FAILS = "fails"

    @property
    def holds(self) -> bool:
        """True for both holding verdicts."""
        return self in (Verdict.HOLDS_STRICT, Verdict.HOLDS_NON_STRICT)

    @property
    def rank(self) -> int:
        """Severity rank, higher is worse."""
        return _VERDICT_RANK[self]

    @classmethod
    def worst(cls, verdicts) -> "Verdict":
        """Combine verdicts, keeping the most severe one."""
        verdicts = list(verdicts)
        if not verdicts:
            return cls.HOLDS_STRICT
        return max(verdicts, key=lambda v: v.rank)

    @classmethod
    def best(cls, verdicts) -> "Verdict":
        """Combine alternative verdicts, keeping the least severe one."""
        verdicts = list(verdicts)
        if not verdicts:
            return cls.FAILS
        return min(verdicts, key=lambda v: v.rank)


_VERDICT_RANK = {
    Verdict.HOLDS_STRICT: 0,
    Verdict.HOLDS_NON_STRICT: 1,
    Verdict.INDETERMINATE: 2,
    Verdict.FAILS: 3,
}


@dataclass(frozen=True)
class OrderReport:
    """Result of a cone membership or order test."""

    holds: bool
    margin: float
    tolerance: float
    component: int | None = None
    s: float | None = None

    @property
    def location(self) -> tuple[int, float] | None:
        """Grid point (component, s) achieving the smallest slack."""
        if self.component is None:
            return None
        return (self.component, self.s)

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready dictionary."""
        return to_plain(
            {
                "holds": self.holds,
                "margin": self.margin,
                "tolerance": self.tolerance,
                "location": list(self.location) if self.location else None,
            }
        )


@dataclass
class ConditionReport:
    """Per-patch values of a tested inequality with an overall verdict."""

    name: str
    verdict: Verdict
    patches: list[dict[str, Any]] = field(default_factory=list)
    binding_patch: int | None = None
    conditions: dict[str, Verdict] = field(default_factory=dict)
    scan: dict[str, Any] | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        """Whether the overall verdict is a holding one."""
        return self.verdict.holds

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready dictionary."""
        return to_plain(
            {
                "name": self.name,
                "verdict": self.verdict,
                "patches": self.patches,
                "binding_patch": self.binding_patch,
                "conditions": self.conditions,
                "scan": self.scan,
                "notes": self.notes,
            }
        )


@dataclass
class VerificationReport:
    """Outcome of an empirical verification of a dynamical claim."""

    claim: str
    horizon: float
    passes: list[bool] = field(default_factory=list)
    margins: list[float] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def sample_count(self) -> int:
        """Number of samples checked."""
        return len(self.passes)

    @property
    def passed(self) -> bool:
        """True when every sample passed."""
        return all(self.passes)

    @property
    def failure_count(self) -> int:
        """Number of failing samples."""
        return self.passes.count(False)

    @property
    def worst_margin(self) -> float:
        """Smallest margin over all samples."""
        if not self.margins:
            return math.inf
        return min(self.margins)

    @property
    def verdict(self) -> Verdict:
        """Verdict view of the report for exit-code aggregation."""
        return Verdict.HOLDS_STRICT if self.passed else Verdict.FAILS

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready dictionary."""
        return to_plain(
            {
                "claim": self.claim,
                "sample_count": self.sample_count,
                "horizon": self.horizon,
                "passed": self.passed,
                "worst_margin": self.worst_margin,
                "passes": self.passes,
                "margins": self.margins,
                "metadata": self.metadata,
            }
        )


@dataclass
class AttractorEstimate:
    """Sampled estimate of the attracting solution b(w.t) and its persistence floor."""

    times: np.ndarray
    b: np.ndarray
    spread: np.ndarray
    floor: float
    tolerance: float
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def tail_spread(self) -> float:
        """Largest spread over the stored tail."""
        if self.spread.size == 0:
            return 0.0
        return float(np.max(self.spread))

    @property
    def is_copy_of_base(self) -> bool:
        """All sampled trajectories collapse onto one solution at the tail."""
        return self.tail_spread < self.tolerance

    @property
    def verdict(self) -> Verdict:
        """Verdict view of the estimate for exit-code aggregation."""
        return Verdict.HOLDS_STRICT if self.is_copy_of_base else Verdict.FAILS

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready dictionary (series go to CSV)."""
        return to_plain(
            {
                "claim": "attractor",
                "tail_start": self.times[0] if self.times.size else None,
                "tail_end": self.times[-1] if self.times.size else None,
                "samples": int(self.times.size),
                "tail_spread": self.tail_spread,
                "tolerance": self.tolerance,
                "copy_of_base": self.is_copy_of_base,
                "floor": self.floor,
                "metadata": self.metadata,
            }
        )
