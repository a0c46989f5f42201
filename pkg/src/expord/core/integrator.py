"""Fixed-step method-of-steps integration of Nicholson systems."""

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from expord.core.exceptions import IntegrationError
from expord.core.fnspace import HistorySegment
from expord.core.nicholson import NicholsonModel

STEPS_PER_DELAY = 50
MIN_STEPS_PER_DELAY = 4
# Slack when rounding times to grid indices
INDEX_RTOL = 1e-9
FINITE_CHECK_EVERY = 64

logger = logging.getLogger(__name__)


def hermite_basis(theta: np.ndarray) -> np.ndarray:
    """Cubic Hermite weights (h00, h10, h01, h11) stacked on the last axis."""
    theta = np.asarray(theta, dtype=float)
    t2, t3 = theta * theta, theta * theta * theta
    return np.stack(
        [2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + theta, -2 * t3 + 3 * t2, t3 - t2],
        axis=-1,
    )


def default_step(model: NicholsonModel) -> float:
    """min(r_i) / 50."""
    return min(model.delays) / STEPS_PER_DELAY


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solution samples on t = 0, h, ..., N h with right-hand-side values.

    Arrays are read-only. Values before 0 come from the initial history.
    """

    model: NicholsonModel
    history: HistorySegment
    step: float
    horizon: float
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray

    def __post_init__(self):
        for name in ("times", "states", "derivs"):
            getattr(self, name).setflags(write=False)

    @property
    def t0(self) -> float:
        """Start time."""
        return 0.0

    @property
    def m(self) -> int:
        """Patch count."""
        return self.states.shape[1]

    @cached_property
    def dense(self) -> CubicHermiteSpline:
        """Piecewise cubic Hermite interpolant through (states, derivs)."""
        return CubicHermiteSpline(self.times, self.states, self.derivs, axis=0)

    def _node_index(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ratio = t / self.step
        idx = np.rint(ratio).astype(int)
        exact = (np.abs(ratio - idx) < INDEX_RTOL) & (idx >= 0) & (idx < self.times.size)
        return np.clip(idx, 0, self.times.size - 1), exact

    def values_at(self, t, component: int, from_right: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """(value, derivative) of component at times t >= -r_i; stored nodes are returned exactly.

        At t = 0 the slope is the history's, or the solution's right derivative with from_right.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        r = self.model.delays[component]
        if np.any(t < -r * (1 + INDEX_RTOL)) or np.any(t > self.times[-1] * (1 + INDEX_RTOL) + 1e-12):
            raise IntegrationError(f"Times outside [-{r}, {self.times[-1]}] for component {component}")
        values, slopes = np.empty_like(t), np.empty_like(t)

        past = ((t < 0) if from_right else (t <= 0)) | (self.times.size == 1)
        if np.any(past):
            s = np.maximum(t[past], -r)
            values[past] = self.history.eval(s, component)
            slopes[past] = self.history.eval_derivative(s, component)

        ahead = ~past
        if np.any(ahead):
            tt = np.minimum(t[ahead], self.times[-1])
            values[ahead] = self.dense(tt)[:, component]
            slopes[ahead] = self.dense(tt, 1)[:, component]
            idx, exact = self._node_index(tt)
            values[ahead] = np.where(exact, self.states[idx, component], values[ahead])
            slopes[ahead] = np.where(exact, self.derivs[idx, component], slopes[ahead])
        return values, slopes

    def mask_from(self, t_from: float) -> np.ndarray:
        """Boolean mask of stored times >= t_from."""
        return self.times >= t_from - INDEX_RTOL * self.step

    @property
    def header(self) -> list[str]:
        """CSV columns t, y_1..y_m, dy_1..dy_m."""
        return ["t"] + [f"y_{i + 1}" for i in range(self.m)] + [f"dy_{i + 1}" for i in range(self.m)]

    def rows(self) -> Iterator[list[float]]:
        """One CSV row per stored time, matching `header`."""
        for t, y, dy in zip(self.times, self.states, self.derivs):
            yield [float(t)] + [float(v) for v in y] + [float(v) for v in dy]


class _DelayTable:
    """Delayed values y_i(tau - r_i) at one family of stage times tau, for a batch of histories.

    Solution values are gathered from the flattened (2, N + 1, m) x n buffer of
    states and derivatives and combined with cubic Hermite weights; stages whose
    delayed time is <= 0 read the histories instead.
    """

    def __init__(
        self,
        stage_times: np.ndarray,
        histories: Sequence[HistorySegment],
        delays: tuple[float, ...],
        h: float,
        nodes: int,
    ):
        m = len(delays)
        patches = np.arange(m)
        q = stage_times[:, None] - np.asarray(delays)[None, :]
        past = q <= 0
        ratio = np.where(past, 0.0, q / h)
        k = np.floor(ratio).astype(int)
        basis = hermite_basis(ratio - k)

        # Blocks: value at k, value at k + 1, slope at k, slope at k + 1
        weights = (basis[..., 0], basis[..., 2], h * basis[..., 1], h * basis[..., 3])
        offsets = ((0, k), (0, k + 1), (1, k), (1, k + 1))
        self.matrix = np.zeros((stage_times.size, m, 4 * m))
        for b, (w, (kind, row)) in enumerate(zip(weights, offsets)):
            self.matrix[:, patches, b * m + patches] = w
        self.index = np.concatenate(
            [(kind * nodes + row) * m + patches for kind, row in offsets], axis=1
        )

        self.start = int(np.count_nonzero(past.any(axis=1)))
        self.past = past[: self.start, :, None]
        self.history_values = np.zeros((self.start, m, len(histories)))
        for i, r in enumerate(delays):
            mask = past[: self.start, i]
            if np.any(mask):
                s = np.maximum(q[: self.start, i][mask], -r)
                for j, phi in enumerate(histories):
                    self.history_values[mask, i, j] = phi.eval(s, i)

    def lookup(self, s: int, flat: np.ndarray) -> np.ndarray:
        """Delayed values, shape (m, n), at stage s."""
        value = self.matrix[s] @ flat[self.index[s]]
        if s < self.start:
            value = np.where(self.past[s], self.history_values[s], value)
        return value


def _check_history(model: NicholsonModel, history: HistorySegment) -> None:
    if history.dim != model.m:
        raise IntegrationError(f"History dimension {history.dim} does not match {model.m} patches")
    if not np.allclose(history.delays, model.delays, rtol=1e-9, atol=0):
        raise IntegrationError(f"History delays {history.delays} do not match model delays {model.delays}")
    if not history.has_derivs:
        raise IntegrationError("The initial history needs stored derivs")


def _columns(sample: dict[str, np.ndarray], name: str, sign: float = 1.0) -> np.ndarray:
    return sign * sample[name][:, :, None]


def _check_finite(states: np.ndarray, times: np.ndarray, lo: int, hi: int) -> None:
    finite = np.isfinite(states[lo:hi]).all(axis=(1, 2))
    if not finite.all():
        first = lo + int(np.argmin(finite))
        raise IntegrationError(f"Non-finite state at t={times[first]:.6g}", time=float(times[first]))


def integrate_many(
    model: NicholsonModel,
    histories: Sequence[HistorySegment],
    T: float,
    h: float | None = None,
) -> list[Trajectory]:
    """Integrate several histories on a shared time grid, one trajectory per history.

    Each step advances the whole batch with vectorised arithmetic. Every
    trajectory matches the one `integrate` returns for its history alone, up
    to rounding.
    """
    histories = list(histories)
    if not histories:
        raise IntegrationError("No histories to integrate")
    for phi in histories:
        _check_history(model, phi)
    h = default_step(model) if h is None else float(h)
    if not h > 0:
        raise IntegrationError(f"Step must be positive, got {h}")
    if h > min(model.delays) / MIN_STEPS_PER_DELAY * (1 + 1e-12):
        raise IntegrationError(f"Step {h} too large for delays {model.delays}: need h <= min(r)/4")
    if not (T >= 0 and math.isfinite(T)):
        raise IntegrationError(f"Horizon must be finite and nonnegative, got {T}")

    N = int(math.ceil(T / h - 1e-9)) if T > 0 else 0
    m, n_hist = model.m, len(histories)
    times = np.arange(N + 1) * h
    buffer = np.zeros((2, N + 1, m, n_hist))
    states, derivs = buffer[0], buffer[1]
    flat = buffer.reshape(2 * (N + 1) * m, n_hist)

    nodes = model.sample(times)
    mids = model.sample(times[:-1] + 0.5 * h)
    negd, beta, negc = _columns(nodes, "d", -1.0), _columns(nodes, "beta"), _columns(nodes, "c", -1.0)
    negd_mid, beta_mid, negc_mid = _columns(mids, "d", -1.0), _columns(mids, "beta"), _columns(mids, "c", -1.0)
    migrates = bool(model.migration_pairs)
    a_nodes, a_mids = nodes["a"], mids["a"]
    mid_delays = _DelayTable(times[:-1] + 0.5 * h, histories, model.delays, h, N + 1)
    end_delays = _DelayTable(times[1:], histories, model.delays, h, N + 1)

    def linear(x, negd_row, a_row):
        return negd_row * x + a_row @ x if migrates else negd_row * x

    def birth(beta_row, negc_row, xd):
        return beta_row * xd * np.exp(negc_row * xd)

    states[0] = np.stack([phi.at_zero() for phi in histories], axis=1)
    starts = np.stack([phi.at_start() for phi in histories], axis=1)
    derivs[0] = linear(states[0], negd[0], a_nodes[0]) + birth(beta[0], negc[0], starts)
    logger.debug(f"Integrating {n_hist} histor{'y' if n_hist == 1 else 'ies'} of {m} patch(es) to T={T} with h={h} ({N} steps)")

    half, sixth = 0.5 * h, h / 6.0
    checked = 0
    # Overflow shows up as non-finite states, reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(N):
            y, k1 = states[s], derivs[s]
            g_mid = birth(beta_mid[s], negc_mid[s], mid_delays.lookup(s, flat))
            k2 = linear(y + half * k1, negd_mid[s], a_mids[s]) + g_mid
            k3 = linear(y + half * k2, negd_mid[s], a_mids[s]) + g_mid
            g_end = birth(beta[s + 1], negc[s + 1], end_delays.lookup(s, flat))
            k4 = linear(y + h * k3, negd[s + 1], a_nodes[s + 1]) + g_end
            states[s + 1] = y + sixth * (k1 + 2.0 * (k2 + k3) + k4)
            derivs[s + 1] = linear(states[s + 1], negd[s + 1], a_nodes[s + 1]) + g_end
            if s + 1 - checked >= FINITE_CHECK_EVERY or s + 1 == N:
                _check_finite(states, times, checked, s + 2)
                checked = s + 1

    return [
        Trajectory(
            model,
            phi,
            h,
            float(T),
            times,
            np.ascontiguousarray(states[:, :, j]),
            np.ascontiguousarray(derivs[:, :, j]),
        )
        for j, phi in enumerate(histories)
    ]


def integrate(
    model: NicholsonModel,
    history: HistorySegment,
    T: float,
    h: float | None = None,
) -> Trajectory:
    """Classical four-stage Runge-Kutta with cubic Hermite delayed values.

    Requires h <= min(r_i)/4 so every delayed value lies in the computed past.
    """
    return integrate_many(model, [history], T, h)[0]


def _segment_points(r: float, h: float) -> int:
    ratio = r / h
    if abs(ratio - round(ratio)) < INDEX_RTOL * max(ratio, 1.0):
        return int(round(ratio)) + 1
    return int(math.ceil(ratio)) + 1


def segment_at(traj: Trajectory, t: float) -> HistorySegment:
    """The state y_t on prod_i [-r_i, 0], sampled at spacing <= h with derivatives."""
    slack = INDEX_RTOL * max(traj.horizon, 1.0)
    if t < -slack or t > traj.horizon + slack:
        raise IntegrationError(f"Segment time {t} outside [0, {traj.horizon}]", time=t)
    t = min(max(t, 0.0), traj.times[-1])

    grids, values, derivs = [], [], []
    for i, r in enumerate(traj.model.delays):
        grid = np.linspace(-r, 0.0, _segment_points(r, traj.step))
        v, dv = traj.values_at(t + grid, i, from_right=t > 0)
        grids.append(grid)
        values.append(v)
        derivs.append(dv)
    return HistorySegment(traj.model.delays, tuple(grids), tuple(values), tuple(derivs))


def segments(traj: Trajectory, times) -> list[HistorySegment]:
    """segment_at for several times."""
    return [segment_at(traj, float(t)) for t in times]
