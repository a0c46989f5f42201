"""Nicholson patch model, its hypotheses and the monotonicity conditions."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from expord.core.coeffs import (
    QuasiPeriodicCoefficient,
    TimeFunction,
    bounded_primitive,
    frequencies_of,
    mean_value,
    modulate,
    moving_integral,
    moving_integral_bounds,
    window_inf,
    window_sup,
)
from expord.core.cone import ConeSpec
from expord.core.exceptions import ModelError
from expord.core.fnspace import HistorySegment
from expord.core.models import ConditionReport, Verdict, to_plain

SUPEREQUILIBRIUM_CAP = 1.0e3
# Relative width of the band around a threshold treated as equality
BOUNDARY_RTOL = 1e-12
E2 = math.e**2

ZERO = QuasiPeriodicCoefficient(0.0)

logger = logging.getLogger(__name__)


def _is_zero(c: TimeFunction) -> bool:
    return c.lower_bound == 0.0 and c.upper_bound == 0.0


def _as_coefficient(c: Any) -> TimeFunction:
    if isinstance(c, (int, float)) and not isinstance(c, bool):
        return QuasiPeriodicCoefficient(float(c))
    if isinstance(c, TimeFunction):
        return c
    raise ModelError(f"Unsupported coefficient: {c!r}")


@dataclass(frozen=True)
class NicholsonModel:
    """m patches y_i' = -d_i y_i + sum_j a_ij y_j + beta_i y_i(t - r_i) exp(-c_i y_i(t - r_i)).

    Coefficients are evaluated at t + offset, so the offset selects the point
    of the hull.
    """

    delays: tuple[float, ...]
    d: tuple[TimeFunction, ...]
    beta: tuple[TimeFunction, ...]
    c: tuple[TimeFunction, ...]
    a: tuple[tuple[TimeFunction, ...], ...] | None = None
    offset: float = 0.0

    def __post_init__(self):
        m = len(self.delays)
        if m == 0:
            raise ModelError("A model needs at least one patch")
        for name in ("d", "beta", "c"):
            if len(getattr(self, name)) != m:
                raise ModelError(f"Expected {m} '{name}' coefficients, got {len(getattr(self, name))}")
        delays = tuple(float(r) for r in self.delays)
        if any(not (r > 0 and math.isfinite(r)) for r in delays):
            raise ModelError(f"Delays must be positive and finite, got {delays}")
        if not math.isfinite(float(self.offset)):
            raise ModelError("Offset must be finite")

        if self.a is None:
            a = tuple(tuple(ZERO for _ in range(m)) for _ in range(m))
        else:
            if len(self.a) != m or any(len(row) != m for row in self.a):
                raise ModelError(f"Migration matrix must be {m} x {m}")
            a = tuple(tuple(_as_coefficient(x) for x in row) for row in self.a)
        for i in range(m):
            if not _is_zero(a[i][i]):
                raise ModelError(f"Migration diagonal a[{i}][{i}] must be identically zero")

        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "offset", float(self.offset))
        for name in ("d", "beta", "c"):
            object.__setattr__(self, name, tuple(_as_coefficient(x) for x in getattr(self, name)))
        object.__setattr__(self, "a", a)

    @property
    def m(self) -> int:
        """Patch count."""
        return len(self.delays)

    @property
    def max_delay(self) -> float:
        """Largest delay."""
        return max(self.delays)

    @property
    def migration_pairs(self) -> tuple[tuple[int, int], ...]:
        """Index pairs (i, j) with a nonzero migration coefficient."""
        return tuple(
            (i, j) for i in range(self.m) for j in range(self.m) if i != j and not _is_zero(self.a[i][j])
        )

    def at(self, offset: float) -> "NicholsonModel":
        """Same coefficients seen from another base point."""
        return replace(self, offset=float(offset))

    def shifted(self, s: float) -> "NicholsonModel":
        """The model at base point offset + s (the hull flow)."""
        return self.at(self.offset + s)

    def sample(self, times) -> dict[str, np.ndarray]:
        """Coefficient values at model times (offset applied), vectorised.

        Returns arrays d, beta, c of shape (n, m) and a of shape (n, m, m).
        """
        t = np.atleast_1d(np.asarray(times, dtype=float)) + self.offset

        def column(c: TimeFunction) -> np.ndarray:
            return np.broadcast_to(np.asarray(c(t), dtype=float), t.shape)

        out = {name: np.stack([column(c) for c in getattr(self, name)], axis=1) for name in ("d", "beta", "c")}
        a = np.zeros((t.size, self.m, self.m))
        for i, j in self.migration_pairs:
            a[:, i, j] = column(self.a[i][j])
        out["a"] = a
        return out

    def to_dict(self) -> dict[str, Any]:
        """Closed-form description of the model."""
        return {
            "delays": list(self.delays),
            "offset": self.offset,
            "d": [c.to_dict() for c in self.d],
            "beta": [c.to_dict() for c in self.beta],
            "c": [c.to_dict() for c in self.c],
            "a": [[c.to_dict() for c in row] for row in self.a],
        }


def vector_field(
    d: np.ndarray,
    a: np.ndarray,
    beta: np.ndarray,
    c: np.ndarray,
    x: np.ndarray,
    xd: np.ndarray,
) -> np.ndarray:
    """Right-hand side from coefficient values, current state x and delayed state xd."""
    return -d * x + a @ x + beta * xd * np.exp(-c * xd)


def rhs(model: NicholsonModel, t: float, seg: HistorySegment) -> np.ndarray:
    """f_i(t, phi) = -d_i phi_i(0) + sum_j a_ij phi_j(0) + beta_i phi_i(-r_i) e^{-c_i phi_i(-r_i)}."""
    if seg.dim != model.m:
        raise ModelError(f"Segment dimension {seg.dim} does not match {model.m} patches")
    if not np.allclose(seg.delays, model.delays, rtol=1e-9, atol=0):
        raise ModelError(f"Segment delays {seg.delays} do not match model delays {model.delays}")
    coeffs = model.sample(t)
    return vector_field(
        coeffs["d"][0], coeffs["a"][0], coeffs["beta"][0], coeffs["c"][0], seg.at_zero(), seg.at_start()
    )


def classify(lower: float, upper: float, threshold: float) -> Verdict:
    """Verdict for 'sup < threshold' given a scanned lower value and a certified upper bound."""
    band = BOUNDARY_RTOL * max(abs(threshold), 1.0)
    if upper < threshold - band:
        return Verdict.HOLDS_STRICT
    if lower > threshold + band:
        return Verdict.FAILS
    if upper <= threshold + band:
        return Verdict.HOLDS_NON_STRICT
    return Verdict.INDETERMINATE


def _split(verdict: Verdict) -> tuple[Verdict, Verdict]:
    """(strict, non-strict) readings of a classify() verdict; equality fails only the strict one."""
    if verdict is Verdict.HOLDS_NON_STRICT:
        return Verdict.FAILS, Verdict.HOLDS_STRICT
    return verdict, verdict


def validate_model(
    model: NicholsonModel, T_scan: float | None = None, step: float | None = None
) -> ConditionReport:
    """Check positivity of decay, birth and scale, nonnegative migration and positive net decay.

    Bounds are certified analytically; the net decay is scanned only when its bound is inconclusive.
    """
    m = model.m
    patches = []
    decay, birth, scale, net_decay = [], [], [], []
    for i in range(m):
        d_inf = model.d[i].lower_bound
        beta_inf = model.beta[i].lower_bound
        c_inf = model.c[i].lower_bound
        outflow = [model.a[j][i] for j in range(m) if j != i and not _is_zero(model.a[j][i])]
        net_certified = d_inf - sum(x.upper_bound for x in outflow)

        entry = {
            "patch": i,
            "d_inf": d_inf,
            "beta_inf": beta_inf,
            "c_inf": c_inf,
            "net_decay_certified": net_certified,
        }
        decay.append(Verdict.HOLDS_STRICT if d_inf > 0 else Verdict.FAILS)
        birth.append(Verdict.HOLDS_STRICT if beta_inf > 0 else Verdict.FAILS)
        scale.append(Verdict.HOLDS_STRICT if c_inf > 0 else Verdict.FAILS)

        if net_certified > 0:
            net_decay.append(Verdict.HOLDS_STRICT)
        else:
            def net(t, i=i, outflow=outflow):
                return np.asarray(model.d[i](t)) - sum(np.asarray(x(t)) for x in outflow)

            found = window_inf(net, T_scan, step, frequencies_of(model.d[i], *outflow))
            entry["net_decay_scan"] = found.value
            entry["net_decay_scan_window"] = found.to_dict()
            net_decay.append(Verdict.FAILS if found.value <= 0 else Verdict.INDETERMINATE)
        patches.append(entry)

    migration = Verdict.HOLDS_STRICT
    for i, j in model.migration_pairs:
        if model.a[i][j].lower_bound < 0:
            migration = Verdict.FAILS

    conditions = {
        "decay_positive": Verdict.worst(decay),
        "migration_nonnegative": migration,
        "birth_positive": Verdict.worst(birth),
        "scale_positive": Verdict.worst(scale),
        "net_decay_positive": Verdict.worst(net_decay),
    }
    verdict = Verdict.worst(conditions.values())
    binding = next((i for i, v in enumerate(zip(decay, birth, scale, net_decay)) if not all(x.holds for x in v)), None)
    if verdict is not Verdict.HOLDS_STRICT:
        logger.info(f"Model hypotheses: {verdict.value} {to_plain(conditions)}")
    return ConditionReport(
        name="hypotheses",
        verdict=verdict,
        patches=patches,
        binding_patch=binding,
        conditions=conditions,
        notes=["coefficients are finite trigonometric sums, so they are continuous and almost periodic"],
    )


def auxiliary_map(mu: float, r: float, beta_plus: float, d_plus: float) -> float:
    """f(mu) = -d+ + mu - (beta+/e^2) e^{mu r}."""
    return -d_plus + mu - (beta_plus / E2) * math.exp(mu * r)


def auxiliary_map_derivative(mu: float, r: float, beta_plus: float) -> float:
    """f'(mu) = 1 - (beta+ r / e^2) e^{mu r}."""
    return 1.0 - (beta_plus * r / E2) * math.exp(mu * r)


def optimal_rate(r: float, beta_plus: float) -> float:
    """mu = (1/r) ln(e^2 / (r beta+)), the maximum point of the auxiliary map."""
    if not (r > 0 and beta_plus > 0):
        raise ModelError(f"Rate needs r > 0 and beta+ > 0, got r={r}, beta+={beta_plus}")
    return math.log(E2 / (r * beta_plus)) / r


def cone_from_model(model: NicholsonModel) -> tuple[ConeSpec | None, ConditionReport]:
    """Cone with mu_i from the certified beta_i^+, with the auxiliary map maxima.

    The cone is None when some mu_i would be negative (r_i beta_i^+ > e^2).
    """
    patches, verdicts, rates = [], [], []
    for i, r in enumerate(model.delays):
        beta_plus = model.beta[i].upper_bound
        d_plus = model.d[i].upper_bound
        mu = optimal_rate(r, beta_plus)
        f_mu = auxiliary_map(mu, r, beta_plus, d_plus)
        patches.append(
            {
                "patch": i,
                "r": r,
                "beta_plus": beta_plus,
                "d_plus": d_plus,
                "mu": mu,
                "f_mu": f_mu,
                "f_prime_mu": auxiliary_map_derivative(mu, r, beta_plus),
            }
        )
        verdicts.append(Verdict.HOLDS_STRICT if mu >= 0 else Verdict.FAILS)
        rates.append(mu)

    verdict = Verdict.worst(verdicts)
    cone = ConeSpec(tuple(rates)) if verdict.holds else None
    binding = int(np.argmin(rates))
    return cone, ConditionReport(
        name="cone",
        verdict=verdict,
        patches=patches,
        binding_patch=binding,
        conditions={"nonnegative_rates": verdict},
    )


def check_monotone(
    model: NicholsonModel, T_scan: float | None = None, step: float | None = None
) -> ConditionReport:
    """Per patch r beta+ e^{d+ r} against e, plus a scan of the pointwise sufficient condition."""
    _, cone_report = cone_from_model(model)
    patches, strict, non_strict, pointwise, windows = [], [], [], [], []
    for i, r in enumerate(model.delays):
        beta, d = model.beta[i], model.d[i]
        beta_scan = window_sup(beta, T_scan, step)
        windows.append(beta_scan)
        d_scan = window_sup(d, T_scan, step)
        value = r * beta.upper_bound * math.exp(d.upper_bound * r)
        value_scan = r * beta_scan.value * math.exp(d_scan.value * r)
        patch_strict, patch_non_strict = _split(classify(value_scan, value, math.e))
        strict.append(patch_strict)
        non_strict.append(patch_non_strict)

        mu = cone_report.patches[i]["mu"]
        scale = math.exp(2.0 - mu * r)

        def margin(t, d=d, beta=beta, mu=mu, scale=scale):
            return (mu - np.asarray(d(t))) * scale - np.asarray(beta(t))

        found = window_inf(margin, T_scan, step, frequencies_of(d, beta))
        pointwise.append(
            Verdict.HOLDS_STRICT if found.value > 0 else (Verdict.HOLDS_NON_STRICT if found.value == 0 else Verdict.FAILS)
        )
        patches.append(
            {
                "patch": i,
                "r": r,
                "beta_plus": beta.upper_bound,
                "d_plus": d.upper_bound,
                "beta_plus_scan": beta_scan.value,
                "d_plus_scan": d_scan.value,
                "value": value,
                "value_scan": value_scan,
                "threshold": math.e,
                "strict": patch_strict,
                "non_strict": patch_non_strict,
                "mu": mu,
                "pointwise_margin": found.value,
                "pointwise_argmin": found.argmax,
            }
        )

    conditions = {
        "non_strict": Verdict.worst(non_strict),
        "strict": Verdict.worst(strict),
        "pointwise": Verdict.worst(pointwise),
    }
    if conditions["strict"].holds:
        verdict = Verdict.HOLDS_STRICT
    elif conditions["non_strict"].holds:
        verdict = Verdict.HOLDS_NON_STRICT
    else:
        verdict = Verdict.worst([conditions["strict"], conditions["non_strict"]])
    binding = int(np.argmax([p["value"] for p in patches]))
    window = windows[binding]
    return ConditionReport(
        name="monotone",
        verdict=verdict,
        patches=patches,
        binding_patch=binding,
        conditions=conditions,
        scan={"T_scan": window.T_scan, "step": window.step},
    )


def _require_trig(c: TimeFunction, what: str) -> QuasiPeriodicCoefficient:
    if not isinstance(c, QuasiPeriodicCoefficient):
        raise ModelError(f"{what} must be a trigonometric sum")
    return c


def check_relaxed(
    model: NicholsonModel, T_scan: float | None = None, step: float | None = None
) -> ConditionReport:
    """Per patch r sup beta(t) exp(int_{t-r}^t d) against e."""
    patches, verdicts, notes = [], [], []
    scan = None
    for i, r in enumerate(model.delays):
        d = _require_trig(model.d[i], f"d[{i}]")
        beta = model.beta[i]

        def weighted(t, d=d, beta=beta, r=r):
            return np.asarray(beta(t)) * np.exp(moving_integral(d, t, r))

        found = window_sup(weighted, T_scan, step, frequencies_of(d, beta))
        scan = scan or found.to_dict()
        _, mi_upper = moving_integral_bounds(d, r)
        value = r * beta.upper_bound * math.exp(mi_upper)
        value_scan = r * found.value
        verdict = classify(value_scan, value, math.e)

        entry = {
            "patch": i,
            "r": r,
            "value": value,
            "value_scan": value_scan,
            "argmax": found.argmax,
            "threshold": math.e,
            "verdict": verdict,
            "scan": found.to_dict(),
        }
        period = d.period()
        if period is not None and math.isclose(r / period, round(r / period), rel_tol=1e-9) and round(r / period) > 0:
            reduced = r * beta.upper_bound * math.exp(mean_value(d) * r)
            entry["periodic_reduction"] = reduced
            notes.append(f"patch {i}: delay is a multiple of the period of d, moving integral is d0 r")
        if verdict is Verdict.INDETERMINATE:
            logger.warning(f"Relaxed condition for patch {i} is indeterminate within the scan window")
        verdicts.append(verdict)
        patches.append(entry)

    verdict = Verdict.worst(verdicts)
    binding = int(np.argmax([p["value"] for p in patches]))
    return ConditionReport(
        name="relaxed",
        verdict=verdict,
        patches=patches,
        binding_patch=binding,
        conditions={"relaxed": verdict},
        scan=scan,
        notes=notes,
    )


@dataclass(frozen=True)
class MeanTransform:
    """Mean-value change of variables z_i = e^{h_i(t)} y_i."""

    model: NicholsonModel
    h: tuple[QuasiPeriodicCoefficient, ...]
    cone: ConeSpec | None
    scale_bounds: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def to_dict(self) -> dict[str, Any]:
        """Transformed model, primitives and the bounds of e^{-h}."""
        return to_plain(
            {
                "model": self.model.to_dict(),
                "h": [h.to_dict() for h in self.h],
                "mu": list(self.cone.mu) if self.cone else None,
                "exp_minus_h_bounds": [list(b) for b in self.scale_bounds],
            }
        )


def transform_mean(model: NicholsonModel) -> MeanTransform:
    """Replace each d_i by its mean d_i0, moving the oscillation into a, beta and c."""
    h = tuple(bounded_primitive(_require_trig(d, "d")) for d in model.d)
    m = model.m

    def lagged(i: int) -> QuasiPeriodicCoefficient:
        return h[i].translate(-model.delays[i])

    d = tuple(QuasiPeriodicCoefficient(mean_value(c)) for c in model.d)
    beta, c = [], []
    for i in range(m):
        if h[i].is_constant:
            beta.append(model.beta[i])
            c.append(model.c[i])
        else:
            beta.append(modulate(model.beta[i], h[i] - lagged(i)))
            c.append(modulate(model.c[i], -lagged(i)))
    a = [list(row) for row in model.a]
    for i, j in model.migration_pairs:
        if not (h[i].is_constant and h[j].is_constant):
            a[i][j] = modulate(model.a[i][j], h[i] - h[j])

    transformed = NicholsonModel(
        model.delays, d, tuple(beta), tuple(c), tuple(tuple(row) for row in a), model.offset
    )
    cone, _ = cone_from_model(transformed)
    bounds = tuple((math.exp(-x.upper_bound), math.exp(-x.lower_bound)) for x in h)
    logger.debug(f"Mean transform: d0={[x.constant for x in d]}, e^-h bounds={bounds}")
    return MeanTransform(transformed, h, cone, bounds)


def transform_history(
    seg: HistorySegment, h: Sequence[QuasiPeriodicCoefficient], t: float = 0.0
) -> HistorySegment:
    """Segment of z = e^{h(t + s)} y at base time t (offset included in t)."""
    if len(h) != seg.dim:
        raise ModelError("One primitive per component is required")
    if not seg.has_derivs:
        raise ModelError("Transforming a segment needs stored derivs")
    values, derivs = [], []
    for hi, g, v, dv in zip(h, seg.grids, seg.values, seg.derivs):
        scale = np.exp(np.asarray(hi(t + g)))
        slope = np.asarray(hi.derivative()(t + g))
        values.append(scale * v)
        derivs.append(scale * (slope * v + dv))
    return HistorySegment(seg.delays, seg.grids, tuple(values), tuple(derivs))


def transform_states(
    h: Sequence[QuasiPeriodicCoefficient], times: np.ndarray, states: np.ndarray, offset: float = 0.0
) -> np.ndarray:
    """Sampled z_i(t) = e^{h_i(t + offset)} y_i(t) for states of shape (n, m)."""
    times = np.asarray(times, dtype=float)
    scale = np.stack([np.exp(np.asarray(hi(times + offset))) for hi in h], axis=1)
    return scale * np.asarray(states)


@dataclass(frozen=True)
class SuperEquilibrium:
    """Radius R0 with F(t, R) <= 0 for all R >= R0 and all t."""

    radius: float
    binding_patch: int
    patches: tuple[dict[str, float], ...]
    zero_margin: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        """Radius, per-patch data and the strictness of the zero sub-equilibrium."""
        return to_plain(
            {
                "radius": self.radius,
                "binding_patch": self.binding_patch,
                "patches": list(self.patches),
                "zero_margin": self.zero_margin,
                "zero_is_strong_subequilibrium": self.zero_margin > 0,
            }
        )


def superequilibrium_radius(model: NicholsonModel, cap: float = SUPEREQUILIBRIUM_CAP) -> SuperEquilibrium:
    """Smallest R0 with beta_i^+ e^{-c_i,inf R} <= inf(d_i - sum_j a_ij) for every patch.

    The radius is the closed form ln(beta+ / delta) / c_inf, the root that
    bracketing and bisection on R would converge to.
    F(t, 0) = 0 identically, so the zero state is a sub-equilibrium with margin 0.
    """
    patches = []
    for i in range(model.m):
        inflow = [model.a[i][j] for j in range(model.m) if j != i and not _is_zero(model.a[i][j])]
        delta = model.d[i].lower_bound - sum(x.upper_bound for x in inflow)
        beta_plus = model.beta[i].upper_bound
        c_inf = model.c[i].lower_bound
        if delta <= 0 or c_inf <= 0:
            raise ModelError(f"Patch {i}: no super-equilibrium radius (net decay {delta:.6g}, c_inf {c_inf:.6g})")
        radius = 0.0 if beta_plus <= delta else math.log(beta_plus / delta) / c_inf
        if radius > cap:
            raise ModelError(f"Patch {i}: super-equilibrium radius {radius:.6g} exceeds cap {cap:.6g}")
        patches.append({"patch": i, "net_decay": delta, "beta_plus": beta_plus, "c_inf": c_inf, "radius": radius})

    binding = int(np.argmax([p["radius"] for p in patches]))
    return SuperEquilibrium(patches[binding]["radius"], binding, tuple(patches))


def _scalar(model: NicholsonModel) -> None:
    if model.m != 1:
        raise ModelError(f"Special-solution conditions are scalar only, got {model.m} patches")


def special_solution_conditions(
    model: NicholsonModel, T_scan: float | None = None, step: float | None = None
) -> ConditionReport:
    """Small-delay conditions for special solutions of the scalar equation."""
    _scalar(model)
    r = model.delays[0]
    d = _require_trig(model.d[0], "d")
    beta = model.beta[0]
    d0 = mean_value(d)
    d_scan = window_sup(d, T_scan, step).value
    beta_scan = window_sup(beta, T_scan, step).value
    _, mi_upper = moving_integral_bounds(d, r)

    def weighted(t):
        return np.asarray(beta(t)) * np.exp(moving_integral(d, t, r))

    found = window_sup(weighted, T_scan, step, frequencies_of(d, beta))
    sup_upper = beta.upper_bound * math.exp(mi_upper)

    values: dict[str, tuple[float, float, float]] = {
        # (scanned lower value, certified upper value, threshold)
        "classic": ((d_scan + beta_scan) * r * math.e, (d.upper_bound + beta.upper_bound) * r * math.e, 1.0),
        "exponential": (
            r * beta_scan * math.exp(d_scan * r),
            r * beta.upper_bound * math.exp(d.upper_bound * r),
            1.0 / math.e,
        ),
        "improved_classic": (
            (d0 + found.value * math.exp(-d0 * r)) * r * math.e,
            (d0 + sup_upper * math.exp(-d0 * r)) * r * math.e,
            1.0,
        ),
        "improved_exponential": (r * found.value, r * sup_upper, 1.0 / math.e),
    }
    conditions = {name: classify(lo, hi, th) for name, (lo, hi, th) in values.items()}
    patch = {"patch": 0, "r": r, "d0": d0}
    for name, (lo, hi, th) in values.items():
        patch[name] = hi
        patch[f"{name}_scan"] = lo
        patch[f"{name}_threshold"] = th
    return ConditionReport(
        name="special_solutions",
        verdict=Verdict.best(conditions.values()),
        patches=[patch],
        binding_patch=0,
        conditions=conditions,
        scan=found.to_dict(),
        notes=["informational: any one condition suffices"],
    )


def scalar_model(
    d: TimeFunction | float,
    beta: TimeFunction | float,
    c: TimeFunction | float,
    r: float,
    offset: float = 0.0,
) -> NicholsonModel:
    """Convenience constructor for the scalar equation."""
    return NicholsonModel((r,), (d,), (beta,), (c,), offset=offset)
