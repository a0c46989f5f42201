"""Exponential ordering cone K_B for diagonal B = diag(-mu_1, ..., -mu_m)."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from expord.core.exceptions import ConeError
from expord.core.fnspace import HistorySegment, axpy
from expord.core.models import OrderReport

DEFAULT_TOLERANCE = 1e-9
PART_METRIC_TOLERANCE = 1e-6
ALPHA_MAX = math.exp(30.0)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConeSpec:
    """Decay rates mu_i >= 0 defining B = diag(-mu_i)."""

    mu: tuple[float, ...]

    def __post_init__(self):
        mu = tuple(float(m) for m in self.mu)
        if not mu:
            raise ConeError("A cone needs at least one rate")
        if any(not (m >= 0 and math.isfinite(m)) for m in mu):
            raise ConeError(f"Cone rates must be finite and nonnegative, got {mu}")
        object.__setattr__(self, "mu", mu)

    @property
    def dim(self) -> int:
        """Dimension m."""
        return len(self.mu)

    @property
    def matrix(self) -> np.ndarray:
        """The diagonal matrix B."""
        return -np.diag(self.mu)


def _check_dim(phi: HistorySegment, cone: ConeSpec) -> None:
    if phi.dim != cone.dim:
        raise ConeError(f"Segment dimension {phi.dim} does not match cone dimension {cone.dim}")


def _slopes(phi: HistorySegment) -> tuple[np.ndarray, ...]:
    if phi.has_derivs:
        return phi.derivs
    return tuple(
        np.gradient(v, g, edge_order=2 if v.size > 2 else 1) for v, g in zip(phi.values, phi.grids)
    )


def _minimum(rows: Sequence[np.ndarray], phi: HistorySegment) -> tuple[float, int, float]:
    margin, where, at = math.inf, 0, 0.0
    for i, row in enumerate(rows):
        k = int(np.argmin(row))
        if row[k] < margin:
            margin, where, at = float(row[k]), i, float(phi.grids[i][k])
    return margin, where, at


def cone_contains(phi: HistorySegment, cone: ConeSpec, tol: float = DEFAULT_TOLERANCE) -> OrderReport:
    """Test phi >= 0 and phi' + mu phi >= 0 on every grid node."""
    _check_dim(phi, cone)
    rows = [
        np.minimum(v, d + mu * v) for v, d, mu in zip(phi.values, _slopes(phi), cone.mu)
    ]
    margin, comp, s = _minimum(rows, phi)
    return OrderReport(holds=margin >= -tol, margin=margin, tolerance=tol, component=comp, s=s)


def leq_B(
    phi: HistorySegment,
    psi: HistorySegment,
    cone: ConeSpec,
    tol: float = DEFAULT_TOLERANCE,
) -> OrderReport:
    """Test phi <=_B psi, i.e. psi - phi in K_B."""
    return cone_contains(axpy(-1.0, phi, psi), cone, tol)


def in_interior(phi: HistorySegment, cone: ConeSpec, tol: float = DEFAULT_TOLERANCE) -> OrderReport:
    """Test phi(-r) >> 0 and phi' + mu phi >= eps with quantitative margin eps >= tol."""
    _check_dim(phi, cone)
    if not phi.has_derivs:
        raise ConeError("Interior membership needs stored derivs")
    margin, comp, s = math.inf, None, None
    for i, (v, d, mu) in enumerate(zip(phi.values, phi.derivs, cone.mu)):
        slack = d + mu * v
        k = int(np.argmin(slack))
        candidates = ((float(v[0]), float(phi.grids[i][0])), (float(slack[k]), float(phi.grids[i][k])))
        for value, at in candidates:
            if value < margin:
                margin, comp, s = value, i, at
    return OrderReport(holds=margin >= tol, margin=margin, tolerance=tol, component=comp, s=s)


def _sandwiched(phi: HistorySegment, psi: HistorySegment, cone: ConeSpec, alpha: float, tol: float) -> bool:
    lower = leq_B(axpy(1.0 / alpha, phi), psi, cone, tol)
    if not lower.holds:
        return False
    return leq_B(psi, axpy(alpha, phi), cone, tol).holds


def part_metric(
    phi: HistorySegment,
    psi: HistorySegment,
    cone: ConeSpec,
    tol: float = PART_METRIC_TOLERANCE,
    alpha_max: float = ALPHA_MAX,
    oracle_tol: float = 0.0,
) -> float:
    """Part metric ln(alpha*) by bisection on ln(alpha) with leq_B as oracle.

    Returns the upper end of the final bracket, so the result is within tol of
    the true distance at this grid resolution.
    """
    for name, seg in (("phi", phi), ("psi", psi)):
        report = in_interior(seg, cone, 0.0)
        if not report.margin > 0:
            raise ConeError(f"{name} is not in the cone interior (margin {report.margin:.3e})")

    if _sandwiched(phi, psi, cone, 1.0, oracle_tol):
        return 0.0

    lo, hi = 0.0, math.log(2.0)
    limit = math.log(alpha_max)
    while not _sandwiched(phi, psi, cone, math.exp(hi), oracle_tol):
        lo = hi
        hi *= 2.0
        if hi > limit:
            if _sandwiched(phi, psi, cone, alpha_max, oracle_tol):
                hi = limit
                break
            raise ConeError("Infinite distance at this resolution: no bracket below alpha_max")

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _sandwiched(phi, psi, cone, math.exp(mid), oracle_tol):
            hi = mid
        else:
            lo = mid
    logger.debug(f"Part metric bracket [{lo:.9f}, {hi:.9f}]")
    return hi


def norm_bound(p: float) -> float:
    """Factor 2e^p - e^-p - 1 bounding ||phi - psi||_L / min(||phi||_L, ||psi||_L)."""
    return 2.0 * math.exp(p) - math.exp(-p) - 1.0


def check_norm_bound(
    phi: HistorySegment,
    psi: HistorySegment,
    cone: ConeSpec,
    tol: float = PART_METRIC_TOLERANCE,
) -> tuple[float, float]:
    """Return (||phi - psi||_L, bound) with the bound evaluated at p + tol."""
    p = part_metric(phi, psi, cone, tol)
    lhs = axpy(-1.0, phi, psi).norm("lipschitz")
    rhs = norm_bound(p + tol) * min(phi.norm("lipschitz"), psi.norm("lipschitz"))
    return lhs, rhs
