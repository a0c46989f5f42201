"""Sampled elements of the phase space C([-r, 0], R^m)."""

from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from expord.core.exceptions import HistoryError

# Relative slack for grid end points and spacing checks
GRID_RTOL = 1e-9


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class HistorySegment:
    """A sampled continuous function on prod_i [-r_i, 0], one uniform grid per component.

    Segments are immutable: arrays are copied and marked read-only on construction.
    """

    delays: tuple[float, ...]
    grids: tuple[np.ndarray, ...]
    values: tuple[np.ndarray, ...]
    derivs: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if not self.delays:
            raise HistoryError("A segment needs at least one component")
        if not (len(self.delays) == len(self.grids) == len(self.values)):
            raise HistoryError("delays, grids and values must have one entry per component")
        if self.derivs is not None and len(self.derivs) != len(self.values):
            raise HistoryError("derivs must have one entry per component")

        delays = tuple(float(r) for r in self.delays)
        grids, values, derivs = [], [], []
        for i, r in enumerate(delays):
            if not r > 0:
                raise HistoryError(f"Delay of component {i} must be positive, got {r}")
            grid = np.asarray(self.grids[i], dtype=float)
            vals = np.asarray(self.values[i], dtype=float)
            if grid.ndim != 1 or grid.size < 2:
                raise HistoryError(f"Component {i} needs at least 2 grid points")
            if vals.shape != grid.shape:
                raise HistoryError(f"Component {i}: values do not match its grid")
            if abs(grid[0] + r) > GRID_RTOL * r or abs(grid[-1]) > GRID_RTOL * r:
                raise HistoryError(f"Component {i}: grid must span [-{r}, 0]")
            spacing = np.diff(grid)
            if np.any(spacing <= 0) or not np.allclose(spacing, r / (grid.size - 1), rtol=1e-8, atol=0):
                raise HistoryError(f"Component {i}: grid must be uniform and increasing")
            grid = grid.copy()
            grid[0], grid[-1] = -r, 0.0
            grids.append(_frozen(grid))
            values.append(_frozen(vals))
            if self.derivs is not None:
                ders = np.asarray(self.derivs[i], dtype=float)
                if ders.shape != vals.shape:
                    raise HistoryError(f"Component {i}: derivs must have the shape of values")
                derivs.append(_frozen(ders))

        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "grids", tuple(grids))
        object.__setattr__(self, "values", tuple(values))
        object.__setattr__(self, "derivs", tuple(derivs) if self.derivs is not None else None)

    @property
    def dim(self) -> int:
        """Number of components m."""
        return len(self.delays)

    @property
    def has_derivs(self) -> bool:
        """Whether derivative samples are stored."""
        return self.derivs is not None

    @property
    def steps(self) -> tuple[float, ...]:
        """Grid spacing per component."""
        return tuple(r / (g.size - 1) for r, g in zip(self.delays, self.grids))

    @property
    def max_delay(self) -> float:
        """Largest segment length."""
        return max(self.delays)

    @cached_property
    def _splines(self) -> tuple[CubicHermiteSpline, ...]:
        return tuple(
            CubicHermiteSpline(g, v, d) for g, v, d in zip(self.grids, self.values, self.derivs)
        )

    def _check_component(self, component: int) -> None:
        if not 0 <= component < self.dim:
            raise HistoryError(f"Component {component} out of range for dimension {self.dim}")

    def _check_domain(self, s, component: int) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        r = self.delays[component]
        slack = GRID_RTOL * r
        if np.any(s < -r - slack) or np.any(s > slack):
            raise HistoryError(f"s outside [-{r}, 0] for component {component}")
        return np.clip(s, -r, 0.0)

    def eval(self, s, component: int = 0):
        """Value at s (scalar or array): cubic Hermite with derivs, linear otherwise."""
        self._check_component(component)
        s = self._check_domain(s, component)
        grid = self.grids[component]
        if self.has_derivs:
            out = np.asarray(self._splines[component](s))
        else:
            out = np.interp(s, grid, self.values[component])
        # grid nodes return the stored samples exactly
        idx = np.clip(np.searchsorted(grid, s), 0, grid.size - 1)
        out = np.where(grid[idx] == s, self.values[component][idx], out)
        return float(out) if out.ndim == 0 else out

    def eval_derivative(self, s, component: int = 0):
        """Derivative at s from the Hermite interpolant (requires derivs)."""
        if not self.has_derivs:
            raise HistoryError("Derivative evaluation needs stored derivs")
        self._check_component(component)
        s = self._check_domain(s, component)
        out = self._splines[component](s, 1)
        return float(out) if out.ndim == 0 else out

    def at_zero(self) -> np.ndarray:
        """The vector phi(0)."""
        return np.array([v[-1] for v in self.values])

    def at_start(self) -> np.ndarray:
        """The vector (phi_i(-r_i))_i."""
        return np.array([v[0] for v in self.values])

    def norm(self, kind: str = "sup") -> float:
        """Sup norm or the derivative-based Lipschitz norm."""
        sup = max(float(np.max(np.abs(v))) for v in self.values)
        if kind == "sup":
            return sup
        if kind == "lipschitz":
            if not self.has_derivs:
                raise HistoryError("Lipschitz norm needs stored derivs")
            return sup + max(float(np.max(np.abs(d))) for d in self.derivs)
        raise HistoryError(f"Unknown norm kind: {kind}")

    header = ("component", "s", "value", "deriv")

    def rows(self) -> Iterator[list[float | int | str]]:
        """One CSV row per grid node, components numbered from 1; deriv is empty without stored derivs."""
        for i, (grid, values) in enumerate(zip(self.grids, self.values)):
            for k, (s, v) in enumerate(zip(grid, values)):
                dv = float(self.derivs[i][k]) if self.has_derivs else ""
                yield [i + 1, float(s), float(v), dv]

    def matches(self, other: "HistorySegment") -> bool:
        """Whether both segments live on the same grids."""
        if self.dim != other.dim:
            return False
        return all(
            g.size == h.size and np.allclose(g, h, rtol=0, atol=GRID_RTOL * max(r, 1.0))
            for g, h, r in zip(self.grids, other.grids, self.delays)
        )


def _uniform_grid(delay: float, step: float) -> np.ndarray:
    count = int(round(delay / step))
    if count < 1 or abs(count * step - delay) > 1e-6 * delay:
        raise HistoryError(f"Delay {delay} is not a whole number of steps {step}")
    return np.linspace(-delay, 0.0, count + 1)


def _per_component(step, dim: int) -> list[float]:
    if np.ndim(step) == 0:
        steps = [float(step)] * dim
    else:
        steps = [float(h) for h in step]
    if len(steps) != dim:
        raise HistoryError("One step per component is required")
    if any(not h > 0 for h in steps):
        raise HistoryError(f"Step must be positive, got {step}")
    return steps


def make_history(
    values: Sequence[Sequence[float]],
    delays: Sequence[float],
    step: float | Sequence[float],
    derivs: Sequence[Sequence[float]] | None = None,
) -> HistorySegment:
    """Build a segment from per-component samples on uniform grids of spacing `step`.

    Missing derivs are filled by second-order centered finite differences.
    """
    if len(values) == 0 or any(len(v) == 0 for v in values):
        raise HistoryError("Empty values")
    if len(values) != len(delays):
        raise HistoryError("One value array per delay is required")
    steps = _per_component(step, len(delays))

    grids = []
    for vals, r, h in zip(values, delays, steps):
        if not r > 0:
            raise HistoryError(f"Delay must be positive, got {r}")
        grid = _uniform_grid(float(r), h)
        if grid.size != len(vals):
            raise HistoryError(
                f"Expected {grid.size} samples for delay {r} and step {h}, got {len(vals)}"
            )
        grids.append(grid)

    if derivs is None:
        derivs = [
            np.gradient(np.asarray(v, dtype=float), g, edge_order=2 if len(v) > 2 else 1)
            for v, g in zip(values, grids)
        ]
    return HistorySegment(tuple(delays), tuple(grids), tuple(values), tuple(derivs))


def history_from_functions(
    functions: Sequence[Callable],
    delays: Sequence[float],
    step: float | Sequence[float],
    derivatives: Sequence[Callable] | None = None,
) -> HistorySegment:
    """Sample callables of s (vectorised over numpy arrays) into a segment."""
    steps = _per_component(step, len(delays))
    grids = [_uniform_grid(float(r), h) for r, h in zip(delays, steps)]
    values = [np.broadcast_to(np.asarray(f(g), dtype=float), g.shape) for f, g in zip(functions, grids)]
    derivs = None
    if derivatives is not None:
        derivs = [np.broadcast_to(np.asarray(f(g), dtype=float), g.shape) for f, g in zip(derivatives, grids)]
    return make_history(values, delays, steps, derivs)


def constant_history(levels: Sequence[float], delays: Sequence[float], step: float | Sequence[float]) -> HistorySegment:
    """Constant segment with exact zero derivatives."""
    steps = _per_component(step, len(delays))
    values = [np.full(_uniform_grid(float(r), h).size, float(c)) for c, r, h in zip(levels, delays, steps)]
    return make_history(values, delays, steps, [np.zeros_like(v) for v in values])


def evaluate(seg: HistorySegment, s, component: int = 0):
    """Evaluate a segment component at s."""
    return seg.eval(s, component)


def norm(seg: HistorySegment, kind: str = "sup") -> float:
    """Sup norm or Lipschitz norm of a segment."""
    return seg.norm(kind)


def axpy(alpha: float, phi: HistorySegment, psi: HistorySegment | None = None) -> HistorySegment:
    """Pointwise alpha * phi + psi (psi defaults to zero); derivs combine linearly."""
    if psi is None:
        values = tuple(alpha * v for v in phi.values)
        derivs = tuple(alpha * d for d in phi.derivs) if phi.has_derivs else None
        return HistorySegment(phi.delays, phi.grids, values, derivs)

    if not phi.matches(psi):
        raise HistoryError("Grid mismatch between segments")
    values = tuple(alpha * v + w for v, w in zip(phi.values, psi.values))
    derivs = None
    if phi.has_derivs and psi.has_derivs:
        derivs = tuple(alpha * d + e for d, e in zip(phi.derivs, psi.derivs))
    return HistorySegment(phi.delays, phi.grids, values, derivs)
