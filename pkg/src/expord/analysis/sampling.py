"""Random histories and certified random cone elements."""

from collections.abc import Sequence

import numpy as np

from expord.core.cone import ConeSpec, cone_contains, in_interior
from expord.core.exceptions import VerificationError
from expord.core.fnspace import HistorySegment, history_from_functions

MAX_REJECTIONS = 100


def spawn_generators(seed: int, count: int) -> list[np.random.Generator]:
    """Independent generators for `count` samples derived from one master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _cone_component(rng: np.random.Generator, mu: float, r: float, interior: bool):
    q = rng.uniform(0.1, 1.0)
    b = rng.uniform(0.0, 1.0)
    c = rng.uniform(0.05, 0.5) * q if interior else 0.0
    kappa = rng.uniform(0.05, 0.5) * q if interior else 0.0

    def value(s):
        u = 1.0 + s / r
        return q * np.exp(-mu * s) * (1.0 + b * u * u) + c + kappa * (s + r)

    def slope(s):
        u = 1.0 + s / r
        return q * np.exp(-mu * s) * (-mu * (1.0 + b * u * u) + 2.0 * b * u / r) + kappa

    return value, slope


def random_cone_element(
    rng: np.random.Generator,
    cone: ConeSpec,
    delays: Sequence[float],
    step: float | Sequence[float],
    interior: bool = False,
) -> HistorySegment:
    """q e^{-mu s}(1 + b(1 + s/r)^2), plus c + kappa (s + r) for interior elements.

    Membership is certified on the grid before the element is returned.
    """
    for _ in range(MAX_REJECTIONS):
        parts = [_cone_component(rng, mu, r, interior) for mu, r in zip(cone.mu, delays)]
        seg = history_from_functions([p[0] for p in parts], delays, step, [p[1] for p in parts])
        report = in_interior(seg, cone, 0.0) if interior else cone_contains(seg, cone, 0.0)
        if report.holds and (not interior or report.margin > 0):
            return seg
    raise VerificationError(f"No certified cone element after {MAX_REJECTIONS} draws")


def random_positive_history(
    rng: np.random.Generator,
    delays: Sequence[float],
    step: float | Sequence[float],
    levels: tuple[float, float] = (0.1, 3.0),
    vanish_at_zero: bool = False,
) -> HistorySegment:
    """Smooth history L + A sin(w s + p) with A <= L/2, so bounded below by L/2.

    With vanish_at_zero the history is multiplied by -s/r, giving phi(0) = 0.
    """
    functions, derivatives = [], []
    for r in delays:
        level = rng.uniform(*levels)
        amp = rng.uniform(0.0, 0.5 * level)
        freq = rng.uniform(0.5, 5.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)

        def value(s, level=level, amp=amp, freq=freq, phase=phase):
            return level + amp * np.sin(freq * s + phase)

        def slope(s, amp=amp, freq=freq, phase=phase):
            return amp * freq * np.cos(freq * s + phase)

        if vanish_at_zero:
            def damped(s, value=value, r=r):
                return value(s) * (-s / r)

            def damped_slope(s, value=value, slope=slope, r=r):
                return slope(s) * (-s / r) - value(s) / r

            functions.append(damped)
            derivatives.append(damped_slope)
        else:
            functions.append(value)
            derivatives.append(slope)
    return history_from_functions(functions, delays, step, derivatives)


def grid_steps(delays: Sequence[float], h: float) -> tuple[float, ...]:
    """Per-component history spacing r_i / ceil(r_i / h), never coarser than h."""
    return tuple(r / int(np.ceil(r / h - 1e-9)) for r in delays)
