"""Empirical checks of order preservation, cone entry, sublinearity, contraction and persistence."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from expord.analysis.runner import map_samples
from expord.analysis.sampling import grid_steps, random_cone_element, random_positive_history, spawn_generators
from expord.core.coeffs import frequencies_of, window_inf
from expord.core.cone import (
    DEFAULT_TOLERANCE,
    PART_METRIC_TOLERANCE,
    ConeSpec,
    cone_contains,
    in_interior,
    leq_B,
    part_metric,
)
from expord.core.exceptions import VerificationError
from expord.core.fnspace import HistorySegment, axpy, constant_history
from expord.core.integrator import Trajectory, default_step, integrate_many, segment_at, segments
from expord.core.models import AttractorEstimate, VerificationReport
from expord.core.nicholson import NicholsonModel, check_monotone, cone_from_model

TRANSIENT_FRACTION = 0.6
FLOOR_TOLERANCE = 1e-6
ATTRACTOR_TOLERANCE = 1e-3

logger = logging.getLogger(__name__)


def sample_times(spacing: float, T: float, start: float | None = None) -> np.ndarray:
    """Times k * spacing in [start, T] (start defaults to spacing)."""
    start = spacing if start is None else start
    count = int(math.floor(T / spacing + 1e-9))
    times = np.arange(0, count + 1) * spacing
    return times[times >= start - 1e-9 * spacing]


def _step(model: NicholsonModel, h: float | None) -> float:
    return default_step(model) if h is None else h


def _integrate_batch(model: NicholsonModel, histories: Sequence[HistorySegment], T: float, h: float) -> list[Trajectory]:
    return integrate_many(model, histories, T, h) if histories else []


def _strict_condition(model: NicholsonModel) -> bool:
    return check_monotone(model).conditions["strict"].holds


def _log(report: VerificationReport) -> VerificationReport:
    logger.info(
        f"{report.claim}: {report.sample_count} samples, {report.failure_count} failed, "
        f"worst margin {report.worst_margin:.3e}"
    )
    if report.metadata.get("exploratory"):
        logger.warning(f"{report.claim}: model is outside the sufficient condition, report is exploratory")
    return report


@dataclass(frozen=True)
class PairCheck:
    """Order check of one pair of trajectories."""

    passed: bool
    margin: float
    interior_margin: float | None


def check_ordered_pair(
    model: NicholsonModel,
    cone: ConeSpec,
    phi: HistorySegment,
    psi: HistorySegment,
    T: float,
    h: float | None = None,
    tol: float = DEFAULT_TOLERANCE,
    strict: bool = False,
) -> PairCheck:
    """Integrate phi and psi and test y_t(phi) <=_B y_t(psi) on t = r, 2r, ..., T.

    With strict, the difference must also stay in the cone interior.
    """
    low, high = integrate_many(model, [phi, psi], T, _step(model, h))
    return _compare_pair(low, high, cone, T, tol, strict)


def _compare_pair(low: Trajectory, high: Trajectory, cone: ConeSpec, T: float, tol: float, strict: bool) -> PairCheck:
    times = sample_times(low.model.max_delay, T)
    margin, interior_margin, passed = math.inf, math.inf if strict else None, True
    for a, b in zip(segments(low, times), segments(high, times)):
        report = leq_B(a, b, cone, tol)
        margin = min(margin, report.margin)
        passed = passed and report.holds
        if strict:
            inner = in_interior(axpy(-1.0, a, b), cone, 0.0)
            interior_margin = min(interior_margin, inner.margin)
            passed = passed and inner.margin > 0
    return PairCheck(passed, margin, interior_margin)


def verify_monotone(
    model: NicholsonModel,
    cone: ConeSpec,
    n_pairs: int,
    T: float,
    seed: int = 0,
    h: float | None = None,
    tol: float = DEFAULT_TOLERANCE,
    workers: int = 1,
) -> VerificationReport:
    """Random ordered pairs psi = phi + k, k in K_B (every other k interior), checked along trajectories."""
    h = _step(model, h)
    steps = grid_steps(model.delays, h)
    strict_model = _strict_condition(model)

    lows, highs = [], []
    for index, rng in enumerate(spawn_generators(seed, n_pairs)):
        phi = random_positive_history(rng, model.delays, steps)
        lows.append(phi)
        highs.append(axpy(1.0, random_cone_element(rng, cone, model.delays, steps, interior=index % 2 == 1), phi))
    trajectories = _integrate_batch(model, lows + highs, T, h)

    def one(index: int) -> PairCheck:
        strict = index % 2 == 1 and strict_model
        return _compare_pair(trajectories[index], trajectories[n_pairs + index], cone, T, tol, strict)

    checks = map_samples(one, list(range(n_pairs)), workers)
    return _log(
        VerificationReport(
            claim="monotone",
            horizon=T,
            passes=[c.passed for c in checks],
            margins=[c.margin for c in checks],
            metadata={
                "seed": seed,
                "step": h,
                "tolerance": tol,
                "sample_times": "r, 2r, ..., T",
                "interior_margins": [c.interior_margin for c in checks],
                "exploratory": not strict_model,
            },
        )
    )


@dataclass(frozen=True)
class EntryCheck:
    """Cone entry record of one trajectory."""

    passed: bool
    margin: float
    first_cone_time: float | None
    first_interior_time: float | None
    interior_required: bool


def check_cone_entry(
    model: NicholsonModel,
    cone: ConeSpec,
    phi: HistorySegment,
    T: float,
    h: float | None = None,
    tol: float = DEFAULT_TOLERANCE,
) -> EntryCheck:
    """y_t in K_B for t >= r, and in its interior for t >= 2r when phi(0) >> 0."""
    (traj,) = integrate_many(model, [phi], T, _step(model, h))
    return _entry_record(traj, cone, T, tol)


def _entry_record(traj: Trajectory, cone: ConeSpec, T: float, tol: float) -> EntryCheck:
    r = traj.model.max_delay
    interior_required = bool(np.all(traj.history.at_zero() > 0))
    passed, margin = True, math.inf
    first_cone = first_interior = None
    times = sample_times(r / 4.0, T, start=r)
    for t, seg in zip(times, segments(traj, times)):
        member = cone_contains(seg, cone, tol)
        if member.holds and first_cone is None:
            first_cone = float(t)
        margin = min(margin, member.margin)
        passed = passed and member.holds
        inner = in_interior(seg, cone, 0.0)
        if inner.margin > 0 and first_interior is None:
            first_interior = float(t)
        if interior_required and t >= 2 * r - 1e-9 * r:
            passed = passed and inner.margin > 0
    return EntryCheck(passed, margin, first_cone, first_interior, interior_required)


def verify_cone_entry(
    model: NicholsonModel,
    cone: ConeSpec,
    n_histories: int,
    T: float,
    seed: int = 0,
    h: float | None = None,
    tol: float = DEFAULT_TOLERANCE,
    workers: int = 1,
) -> VerificationReport:
    """Random nonnegative histories, every third one vanishing at 0."""
    h = _step(model, h)
    steps = grid_steps(model.delays, h)

    histories = [
        random_positive_history(rng, model.delays, steps, vanish_at_zero=index % 3 == 2)
        for index, rng in enumerate(spawn_generators(seed, n_histories))
    ]
    trajectories = _integrate_batch(model, histories, T, h)
    checks = map_samples(lambda traj: _entry_record(traj, cone, T, tol), trajectories, workers)
    return _log(
        VerificationReport(
            claim="cone_entry",
            horizon=T,
            passes=[c.passed for c in checks],
            margins=[c.margin for c in checks],
            metadata={
                "seed": seed,
                "step": h,
                "tolerance": tol,
                "sample_times": "r, 5r/4, ..., T",
                "first_cone_times": [c.first_cone_time for c in checks],
                "first_interior_times": [c.first_interior_time for c in checks],
                "interior_required": [c.interior_required for c in checks],
                "exploratory": not _strict_condition(model),
            },
        )
    )


def verify_sublinear(
    model: NicholsonModel,
    cone: ConeSpec,
    psi: HistorySegment,
    lambdas: Sequence[float],
    T: float,
    h: float | None = None,
    tol: float = DEFAULT_TOLERANCE,
    workers: int = 1,
) -> VerificationReport:
    """lambda y_t(psi) <=_B y_t(lambda psi), strictly in the interior for t > r when 0 < lambda < 1."""
    if not in_interior(psi, cone, 0.0).margin > 0:
        raise VerificationError("Sublinearity needs a history in the cone interior")
    if any(not 0.0 <= lam <= 1.0 for lam in lambdas):
        raise VerificationError(f"Scaling factors must lie in [0, 1], got {list(lambdas)}")
    h = _step(model, h)
    r = model.max_delay
    lambdas = list(lambdas)
    base, *scaled = integrate_many(model, [psi] + [axpy(lam, psi) for lam in lambdas], T, h)
    times = sample_times(r / 2.0, T)
    base_segments = segments(base, times)

    def one(item: tuple[float, Trajectory]) -> tuple[bool, float]:
        lam, traj = item
        passed, margin = True, math.inf
        for t, seg, upper in zip(times, base_segments, segments(traj, times)):
            lower = axpy(lam, seg)
            report = leq_B(lower, upper, cone, tol)
            margin = min(margin, report.margin)
            passed = passed and report.holds
            if 0.0 < lam < 1.0 and t > r * (1 + 1e-9):
                passed = passed and in_interior(axpy(-1.0, lower, upper), cone, 0.0).margin > 0
        return passed, margin

    checks = map_samples(one, list(zip(lambdas, scaled)), workers)
    return _log(
        VerificationReport(
            claim="sublinear",
            horizon=T,
            passes=[c[0] for c in checks],
            margins=[c[1] for c in checks],
            metadata={"lambdas": list(lambdas), "step": h, "tolerance": tol, "sample_times": "r/2, r, ..., T"},
        )
    )


@dataclass
class PartMetricTrace:
    """Part metric between two trajectories at t = 0, 2r, 3r, ..."""

    times: np.ndarray
    values: np.ndarray
    report: VerificationReport


def part_metric_trace(
    model: NicholsonModel,
    cone: ConeSpec,
    phi: HistorySegment,
    psi: HistorySegment,
    T: float,
    h: float | None = None,
    tol: float = PART_METRIC_TOLERANCE,
) -> PartMetricTrace:
    """p(y_t(phi), y_t(psi)) must be nonincreasing up to 2 tol; aborts when a segment leaves the interior."""
    h = _step(model, h)
    r = model.max_delay
    a, b = integrate_many(model, [phi, psi], T, h)
    grid = np.concatenate([[0.0], sample_times(r, T, start=2 * r)])

    times, values, aborted = [], [], None
    for t in grid:
        x, y = segment_at(a, t), segment_at(b, t)
        if not (in_interior(x, cone, 0.0).margin > 0 and in_interior(y, cone, 0.0).margin > 0):
            aborted = float(t)
            logger.warning(f"Part metric trace aborted at t={t}: segment left the cone interior")
            break
        times.append(float(t))
        values.append(part_metric(x, y, cone, tol))

    values_arr = np.array(values)
    slack = values_arr[:-1] + 2 * tol - values_arr[1:] if values_arr.size > 1 else np.array([])
    passes = [bool(s >= 0) for s in slack]
    if aborted is not None:
        passes.append(False)
    report = VerificationReport(
        claim="part_metric",
        horizon=T,
        passes=passes,
        margins=[float(s) for s in slack],
        metadata={"step": h, "tolerance": tol, "slack": 2 * tol, "aborted_at": aborted, "sample_times": "0, 2r, 3r, ..."},
    )
    return PartMetricTrace(np.array(times), values_arr, _log(report))


def _tail_floor(traj: Trajectory, T_transient: float) -> float:
    return float(np.min(traj.states[traj.mask_from(T_transient)]))


def _cone_floor(traj: Trajectory, cone: ConeSpec, T_transient: float, T: float, r: float) -> float:
    times = sample_times(r, T, start=max(T_transient, r))
    if times.size == 0:
        return math.nan
    return min(in_interior(seg, cone, 0.0).margin for seg in segments(traj, times))


def persistence_floor(
    model: NicholsonModel,
    n_histories: int,
    T_transient: float | None,
    T: float,
    seed: int = 0,
    h: float | None = None,
    floor_tol: float = FLOOR_TOLERANCE,
    histories: Sequence[HistorySegment] | None = None,
    cone: ConeSpec | None = None,
    workers: int = 1,
) -> tuple[float, VerificationReport]:
    """Floor M = min of y_i(t) over histories, tail times and patches.

    Random histories have phi(0) >> 0; explicit histories replace them. With a
    cone, the smallest interior margin of tail segments is reported as well.
    """
    h = _step(model, h)
    T_transient = TRANSIENT_FRACTION * T if T_transient is None else T_transient
    if histories is None:
        steps = grid_steps(model.delays, h)
        histories = [random_positive_history(rng, model.delays, steps) for rng in spawn_generators(seed, n_histories)]

    def one(traj: Trajectory) -> tuple[float, float | None]:
        floor = _tail_floor(traj, T_transient)
        cone_floor = _cone_floor(traj, cone, T_transient, T, model.max_delay) if cone else None
        return floor, cone_floor

    floors = map_samples(one, _integrate_batch(model, list(histories), T, h), workers)
    M = min((f for f, _ in floors), default=math.nan)
    persistent = bool(floors) and M > floor_tol
    report = VerificationReport(
        claim="persistence",
        horizon=T,
        passes=[f > floor_tol for f, _ in floors],
        margins=[f for f, _ in floors],
        metadata={
            "seed": seed,
            "step": h,
            "transient": T_transient,
            "floor": M,
            "floor_tolerance": floor_tol,
            "cone_floor": min((c for _, c in floors if c is not None), default=None),
            "verdict": "persistent-at-resolution" if persistent else "not-persistent",
        },
    )
    return M, _log(report)


def attractor_estimate(
    model: NicholsonModel,
    n_initials: int,
    T_transient: float | None,
    T: float,
    seed: int = 0,
    h: float | None = None,
    tol: float = ATTRACTOR_TOLERANCE,
    cone: ConeSpec | None = None,
    workers: int = 1,
) -> AttractorEstimate:
    """Tail mean of strictly positive trajectories, their pointwise spread and floor."""
    h = _step(model, h)
    T_transient = TRANSIENT_FRACTION * T if T_transient is None else T_transient
    steps = grid_steps(model.delays, h)
    histories = [random_positive_history(rng, model.delays, steps) for rng in spawn_generators(seed, n_initials)]
    trajectories = integrate_many(model, histories, T, h)

    mask = trajectories[0].mask_from(T_transient)
    tails = np.stack([traj.states[mask] for traj in trajectories])
    times = trajectories[0].times[mask]
    b = tails.mean(axis=0)
    spread = np.max(tails.max(axis=0) - tails.min(axis=0), axis=1)
    floor = float(tails.min())

    metadata: dict[str, Any] = {"seed": seed, "step": h, "initials": n_initials, "transient": T_transient, "T": T}
    if cone is None:
        cone, _ = cone_from_model(model)
    if cone is not None:
        segs = map_samples(lambda traj: segment_at(traj, T), trajectories, workers)
        mean = segs[0]
        for seg in segs[1:]:
            mean = axpy(1.0, seg, mean)
        mean = axpy(1.0 / len(segs), mean)
        inner = in_interior(mean, cone, 0.0)
        metadata["b_interior_margin"] = inner.margin
        metadata["b_in_cone_interior"] = inner.margin > 0
    estimate = AttractorEstimate(times, b, spread, floor, tol, metadata)
    logger.info(f"attractor: {n_initials} initials, tail spread {estimate.tail_spread:.3e}, floor {floor:.4g}")
    return estimate


def check_subequilibrium(
    model: NicholsonModel,
    v: Sequence[float],
    T_scan: float | None = None,
    step: float | None = None,
    sign: str = "sub",
) -> VerificationReport:
    """Scan F(t, v) >= 0 (sub) or <= 0 (super) for the constant state v."""
    if sign not in ("sub", "super"):
        raise VerificationError(f"sign must be 'sub' or 'super', got {sign!r}")
    v = np.asarray(v, dtype=float)
    if v.shape != (model.m,):
        raise VerificationError(f"Expected {model.m} values, got {v.shape}")
    if np.any(v < 0):
        raise VerificationError("Sub-/super-equilibrium checks need v >= 0")
    orientation = 1.0 if sign == "sub" else -1.0
    frequencies = frequencies_of(*model.d, *model.beta, *model.c, *(x for row in model.a for x in row))

    margins, windows = [], []
    for i in range(model.m):
        def signed_field(t, i=i):
            coeffs = model.sample(t)
            value = (
                -coeffs["d"][:, i] * v[i]
                + coeffs["a"][:, i, :] @ v
                + coeffs["beta"][:, i] * v[i] * np.exp(-coeffs["c"][:, i] * v[i])
            )
            value = orientation * value
            return value if np.ndim(t) else float(value[0])

        found = window_inf(signed_field, T_scan, step, frequencies)
        margins.append(found.value)
        windows.append(found.to_dict())

    report = VerificationReport(
        claim=f"{sign}equilibrium",
        horizon=windows[0]["T_scan"],
        passes=[m >= 0 for m in margins],
        margins=margins,
        metadata={
            "values": v.tolist(),
            "sign": sign,
            "strict": all(m > 0 for m in margins),
            "scan": windows,
        },
    )
    return _log(report)


def constant_levels(model: NicholsonModel, levels: Sequence[float], h: float | None = None) -> HistorySegment:
    """Constant history on the grids the analysis uses for this model."""
    return constant_history(levels, model.delays, grid_steps(model.delays, _step(model, h)))
