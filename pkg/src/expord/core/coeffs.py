"""Exact calculus for quasi-periodic coefficients c0 + sum_k a_k cos(w_k t + phi_k)."""

import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from typing import Any, Protocol, runtime_checkable

import numpy as np
from scipy.optimize import minimize_scalar

from expord.core.exceptions import CoefficientError

# Window defaults for suprema over the real line
PERIODS_PER_WINDOW = 50
SAMPLES_PER_PERIOD = 50
MAX_WINDOW = 1.0e4
CONSTANT_WINDOW = (1.0, 0.1)
SCAN_CHUNK = 1 << 17

FREQUENCY_RTOL = 1e-12


@runtime_checkable
class TimeFunction(Protocol):
    """Closed-form coefficient of time with certified bounds."""

    def __call__(self, t): ...

    @property
    def lower_bound(self) -> float: ...

    @property
    def upper_bound(self) -> float: ...

    @property
    def frequencies(self) -> tuple[float, ...]: ...

    @property
    def is_constant(self) -> bool: ...

    def translate(self, tau: float) -> "TimeFunction": ...


@dataclass(frozen=True)
class Harmonic:
    """One cosine term amp * cos(freq * t + phase)."""

    amp: float
    freq: float
    phase: float = 0.0

    def __post_init__(self):
        for name in ("amp", "freq", "phase"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise CoefficientError(f"Harmonic {name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if not self.freq > 0:
            raise CoefficientError(f"Harmonic frequency must be positive, got {self.freq}")


def _merge(harmonics: Iterable[Harmonic]) -> tuple[Harmonic, ...]:
    """Merge terms of equal frequency by phasor addition; lone terms are kept as given."""
    groups: list[list[Harmonic]] = []
    for h in sorted(harmonics, key=lambda h: h.freq):
        if groups and math.isclose(groups[-1][0].freq, h.freq, rel_tol=FREQUENCY_RTOL):
            groups[-1].append(h)
        else:
            groups.append([h])

    merged = []
    for group in groups:
        if len(group) == 1:
            if group[0].amp != 0.0:
                merged.append(group[0])
            continue
        phasor = sum(h.amp * complex(math.cos(h.phase), math.sin(h.phase)) for h in group)
        if abs(phasor) > 0.0:
            merged.append(Harmonic(abs(phasor), group[0].freq, math.atan2(phasor.imag, phasor.real)))
    return tuple(merged)


@dataclass(frozen=True)
class QuasiPeriodicCoefficient:
    """Constant plus a finite sum of cosine harmonics, defined for all real t."""

    constant: float = 0.0
    harmonics: tuple[Harmonic, ...] = field(default_factory=tuple)

    def __post_init__(self):
        constant = float(self.constant)
        if not math.isfinite(constant):
            raise CoefficientError(f"Constant term must be finite, got {constant}")
        object.__setattr__(self, "constant", constant)
        object.__setattr__(self, "harmonics", _merge(self.harmonics))

    @classmethod
    def from_literal(cls, literal: Any) -> "QuasiPeriodicCoefficient":
        """Build from a number or {const, harmonics: [{amp, freq, phase}]}."""
        if isinstance(literal, bool):
            raise CoefficientError("Coefficient literal must be a number or a table")
        if isinstance(literal, (int, float)):
            return cls(float(literal))
        if not isinstance(literal, Mapping):
            raise CoefficientError("Coefficient literal must be a number or a table")
        unknown = set(literal) - {"const", "harmonics"}
        if unknown:
            raise CoefficientError(f"Unknown coefficient keys: {sorted(unknown)}")
        harmonics = []
        for term in literal.get("harmonics", []):
            if not isinstance(term, Mapping):
                raise CoefficientError("Each harmonic must be a table {amp, freq, phase}")
            extra = set(term) - {"amp", "freq", "phase"}
            if extra:
                raise CoefficientError(f"Unknown harmonic keys: {sorted(extra)}")
            try:
                harmonics.append(Harmonic(term["amp"], term["freq"], term.get("phase", 0.0)))
            except KeyError as e:
                raise CoefficientError(f"Harmonic is missing {e}") from e
        return cls(literal.get("const", 0.0), tuple(harmonics))

    def to_dict(self) -> dict[str, Any]:
        """Literal form accepted by from_literal."""
        return {
            "const": self.constant,
            "harmonics": [{"amp": h.amp, "freq": h.freq, "phase": h.phase} for h in self.harmonics],
        }

    @cached_property
    def _arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.array([h.amp for h in self.harmonics]),
            np.array([h.freq for h in self.harmonics]),
            np.array([h.phase for h in self.harmonics]),
        )

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if not self.harmonics:
            out = np.full(t.shape, self.constant)
        else:
            amps, freqs, phases = self._arrays
            out = self.constant + np.cos(np.multiply.outer(t, freqs) + phases) @ amps
        return float(out) if out.ndim == 0 else out

    @property
    def is_constant(self) -> bool:
        """True when there are no harmonics."""
        return not self.harmonics

    @property
    def frequencies(self) -> tuple[float, ...]:
        """Frequencies of the harmonics."""
        return tuple(h.freq for h in self.harmonics)

    @cached_property
    def lower_bound(self) -> float:
        """Analytic lower bound c0 - sum |a_k|."""
        return self.constant - sum(abs(h.amp) for h in self.harmonics)

    @cached_property
    def upper_bound(self) -> float:
        """Analytic upper bound c0 + sum |a_k|."""
        return self.constant + sum(abs(h.amp) for h in self.harmonics)

    def translate(self, tau: float) -> "QuasiPeriodicCoefficient":
        """The coefficient t -> c(t + tau)."""
        return QuasiPeriodicCoefficient(
            self.constant,
            tuple(Harmonic(h.amp, h.freq, h.phase + h.freq * tau) for h in self.harmonics),
        )

    def __neg__(self) -> "QuasiPeriodicCoefficient":
        return QuasiPeriodicCoefficient(
            -self.constant, tuple(Harmonic(-h.amp, h.freq, h.phase) for h in self.harmonics)
        )

    def __add__(self, other: "QuasiPeriodicCoefficient | float") -> "QuasiPeriodicCoefficient":
        if isinstance(other, (int, float)):
            return QuasiPeriodicCoefficient(self.constant + other, self.harmonics)
        if not isinstance(other, QuasiPeriodicCoefficient):
            return NotImplemented
        return QuasiPeriodicCoefficient(self.constant + other.constant, self.harmonics + other.harmonics)

    __radd__ = __add__

    def __sub__(self, other: "QuasiPeriodicCoefficient | float") -> "QuasiPeriodicCoefficient":
        return self + (-other)

    def __mul__(self, factor: float) -> "QuasiPeriodicCoefficient":
        if not isinstance(factor, (int, float)):
            return NotImplemented
        return QuasiPeriodicCoefficient(
            self.constant * factor,
            tuple(Harmonic(h.amp * factor, h.freq, h.phase) for h in self.harmonics),
        )

    __rmul__ = __mul__

    def derivative(self) -> "QuasiPeriodicCoefficient":
        """Exact derivative sum -a w sin(w t + phi), written as cosines."""
        return QuasiPeriodicCoefficient(
            0.0, tuple(Harmonic(h.amp * h.freq, h.freq, h.phase + math.pi / 2.0) for h in self.harmonics)
        )

    def period(self, max_denominator: int = 1000) -> float | None:
        """Common period of commensurable frequencies, None if there is none (or no harmonic)."""
        if not self.harmonics:
            return None
        base = self.harmonics[0].freq
        ratios = []
        for h in self.harmonics:
            ratio = Fraction(h.freq / base).limit_denominator(max_denominator)
            if not math.isclose(float(ratio), h.freq / base, rel_tol=1e-9):
                return None
            ratios.append(ratio)
        numerator = reduce(math.gcd, (q.numerator for q in ratios))
        denominator = reduce(math.lcm, (q.denominator for q in ratios))
        fundamental = base * numerator / denominator
        return 2.0 * math.pi / fundamental


@dataclass(frozen=True)
class ModulatedCoefficient:
    """base(t) * exp(exponent(t)): the evaluable form of mean-transformed coefficients."""

    base: QuasiPeriodicCoefficient
    exponent: QuasiPeriodicCoefficient

    def __call__(self, t):
        out = np.asarray(self.base(t)) * np.exp(np.asarray(self.exponent(t)))
        return float(out) if out.ndim == 0 else out

    @property
    def is_constant(self) -> bool:
        """True when neither factor oscillates."""
        return self.base.is_constant and self.exponent.is_constant

    @property
    def frequencies(self) -> tuple[float, ...]:
        """Frequencies of both factors."""
        return self.base.frequencies + self.exponent.frequencies

    @cached_property
    def _range(self) -> tuple[float, float]:
        lo, hi = math.exp(self.exponent.lower_bound), math.exp(self.exponent.upper_bound)
        corners = [b * e for b in (self.base.lower_bound, self.base.upper_bound) for e in (lo, hi)]
        return min(corners), max(corners)

    @property
    def lower_bound(self) -> float:
        """Certified lower bound from the factor ranges."""
        return self._range[0]

    @property
    def upper_bound(self) -> float:
        """Certified upper bound from the factor ranges."""
        return self._range[1]

    def translate(self, tau: float) -> "ModulatedCoefficient":
        """The coefficient t -> c(t + tau)."""
        return ModulatedCoefficient(self.base.translate(tau), self.exponent.translate(tau))

    def to_dict(self) -> dict[str, Any]:
        """Closed-form description for reports."""
        return {"base": self.base.to_dict(), "exponent": self.exponent.to_dict()}


def modulate(coeff: TimeFunction, exponent: QuasiPeriodicCoefficient) -> ModulatedCoefficient:
    """Multiply a coefficient by exp(exponent), folding nested exponentials."""
    if isinstance(coeff, ModulatedCoefficient):
        return ModulatedCoefficient(coeff.base, coeff.exponent + exponent)
    if isinstance(coeff, QuasiPeriodicCoefficient):
        return ModulatedCoefficient(coeff, exponent)
    raise CoefficientError(f"Cannot modulate {type(coeff).__name__}")


def mean_value(c: QuasiPeriodicCoefficient) -> float:
    """Mean value lim (1/T) int_0^T c: the constant term."""
    return c.constant


def moving_integral(c: QuasiPeriodicCoefficient, t, r: float):
    """Exact int_{t-r}^t c(s) ds."""
    if not r > 0:
        raise CoefficientError(f"Moving integral length must be positive, got {r}")
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, c.constant * r)
    for h in c.harmonics:
        out = out + (h.amp / h.freq) * (np.sin(h.freq * t + h.phase) - np.sin(h.freq * (t - r) + h.phase))
    return float(out) if out.ndim == 0 else out


def moving_integral_bounds(c: QuasiPeriodicCoefficient, r: float) -> tuple[float, float]:
    """Certified range of the moving integral: c0 r -/+ sum 2|a/w||sin(w r / 2)|."""
    if not r > 0:
        raise CoefficientError(f"Moving integral length must be positive, got {r}")
    swing = sum(2.0 * abs(h.amp / h.freq) * abs(math.sin(h.freq * r / 2.0)) for h in c.harmonics)
    return c.constant * r - swing, c.constant * r + swing


def bounded_primitive(c: QuasiPeriodicCoefficient) -> QuasiPeriodicCoefficient:
    """Bounded primitive h of c - mean_value(c): sum (a/w) sin(w t + phi)."""
    return QuasiPeriodicCoefficient(
        0.0,
        tuple(Harmonic(h.amp / h.freq, h.freq, h.phase - math.pi / 2.0) for h in c.harmonics),
    )


def default_window(frequencies: Iterable[float]) -> tuple[float, float]:
    """Default (T_scan, step): 50 slowest periods (capped) sampled 50 times per fastest period."""
    frequencies = [w for w in frequencies if w > 0]
    if not frequencies:
        return CONSTANT_WINDOW
    T_scan = min(PERIODS_PER_WINDOW * 2.0 * math.pi / min(frequencies), MAX_WINDOW)
    step = (2.0 * math.pi / max(frequencies)) / SAMPLES_PER_PERIOD
    return T_scan, step


@dataclass(frozen=True)
class WindowSup:
    """Supremum estimate of a time function over [0, T_scan]."""

    value: float
    argmax: float
    T_scan: float
    step: float

    def to_dict(self) -> dict[str, float]:
        """Scan parameters and result for reports."""
        return {"value": self.value, "argmax": self.argmax, "T_scan": self.T_scan, "step": self.step}


def window_sup(
    expr: Callable,
    T_scan: float | None = None,
    step: float | None = None,
    frequencies: Iterable[float] | None = None,
) -> WindowSup:
    """Max of expr over the grid {0, step, ..., T_scan}, refined by a bounded local search.

    The refinement runs Brent's bounded scalar minimisation (scipy's
    minimize_scalar) on the two grid cells around the best node, in place
    of a golden-section search.

    expr must accept numpy arrays. Without explicit window parameters the
    defaults are derived from `frequencies` (or expr.frequencies when present).
    """
    if frequencies is None:
        frequencies = getattr(expr, "frequencies", ())
    default_T, default_step = default_window(frequencies)
    T_scan = default_T if T_scan is None else float(T_scan)
    step = default_step if step is None else float(step)
    if not T_scan > 0 or not step > 0:
        raise CoefficientError(f"Scan window and step must be positive, got {T_scan}, {step}")

    count = int(math.ceil(T_scan / step - 1e-9))
    best_value, best_t = -math.inf, 0.0
    for start in range(0, count + 1, SCAN_CHUNK):
        index = np.arange(start, min(start + SCAN_CHUNK, count + 1))
        grid = np.minimum(index * step, T_scan)
        values = np.asarray(expr(grid), dtype=float)
        k = int(np.argmax(values))
        if values[k] > best_value:
            best_value, best_t = float(values[k]), float(grid[k])

    lo, hi = max(0.0, best_t - step), min(T_scan, best_t + step)
    if hi > lo:
        res = minimize_scalar(
            lambda x: -float(expr(x)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
        )
        if -res.fun > best_value:
            best_value, best_t = float(-res.fun), float(res.x)
    return WindowSup(best_value, best_t, T_scan, step)


def window_inf(
    expr: Callable,
    T_scan: float | None = None,
    step: float | None = None,
    frequencies: Iterable[float] | None = None,
) -> WindowSup:
    """Min of expr over the scan window (value and argmin in a WindowSup)."""
    if frequencies is None:
        frequencies = getattr(expr, "frequencies", ())
    found = window_sup(lambda t: -np.asarray(expr(t)), T_scan, step, frequencies)
    return WindowSup(-found.value, found.argmax, found.T_scan, found.step)


def frequencies_of(*functions: TimeFunction) -> tuple[float, ...]:
    """All frequencies appearing in the given coefficients."""
    return tuple(w for f in functions for w in f.frequencies)
