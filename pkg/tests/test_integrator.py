"""Tests for the delay integrator."""

import math
import time

import numpy as np
import pytest

from expord.analysis.sampling import grid_steps, random_positive_history, spawn_generators
from expord.core.coeffs import Harmonic, QuasiPeriodicCoefficient
from expord.core.exceptions import IntegrationError
from expord.core.fnspace import constant_history, history_from_functions
from expord.core.integrator import (
    default_step,
    hermite_basis,
    integrate,
    integrate_many,
    segment_at,
    segments,
)
from expord.core.nicholson import NicholsonModel, scalar_model


@pytest.fixture
def pure_delay():
    """y' = y(t - 1): polynomial pieces by the method of steps."""
    return scalar_model(0.0, 1.0, 0.0, 1.0)


@pytest.fixture
def constant():
    """y' = -y + 2 y(t - 0.3) exp(-y(t - 0.3))."""
    return scalar_model(1.0, 2.0, 1.0, 0.3)


@pytest.fixture
def varying():
    """d = 1 + 0.3 cos t, beta = 2 + 0.5 sin(sqrt(2) t), r = 0.5."""
    d = QuasiPeriodicCoefficient(1.0, (Harmonic(0.3, 1.0),))
    beta = QuasiPeriodicCoefficient(2.0, (Harmonic(0.5, math.sqrt(2.0), -math.pi / 2),))
    return scalar_model(d, beta, 1.0, 0.5)


@pytest.fixture
def two_patch():
    """Two patches with quasi-periodic coefficients and migration."""
    q = QuasiPeriodicCoefficient
    return NicholsonModel(
        delays=(0.5, 0.4),
        d=(q(1.0, (Harmonic(0.2, 1.0),)), q(1.2, (Harmonic(0.3, math.sqrt(2.0)),))),
        beta=(q(2.0, (Harmonic(0.3, math.sqrt(3.0)),)), q(2.5, (Harmonic(0.5, 0.5),))),
        c=(1.0, 1.0),
        a=((0.0, q(0.1, (Harmonic(0.05, math.sqrt(2.0)),))), (0.15, 0.0)),
    )


def wavy(level: float, delays, step):
    """level + 0.3 sin(5 s) on every component, with exact derivatives."""
    return history_from_functions(
        [lambda s: level + 0.3 * np.sin(5.0 * s)] * len(delays),
        delays,
        step,
        [lambda s: 1.5 * np.cos(5.0 * s)] * len(delays),
    )


class TestHermiteBasis:
    """Tests for the cubic Hermite weights."""

    def test_end_points(self):
        """Test the weights interpolate values at both ends."""
        np.testing.assert_allclose(hermite_basis(0.0), [1.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(hermite_basis(1.0), [0.0, 0.0, 1.0, 0.0])

    def test_partition_of_unity(self):
        """Test h00 + h01 = 1."""
        w = hermite_basis(np.linspace(0.0, 1.0, 11))
        np.testing.assert_allclose(w[:, 0] + w[:, 2], 1.0)


class TestIntegrate:
    """Tests for integration."""

    def test_method_of_steps_is_exact(self, pure_delay):
        """Test y = 1 + t + (t-1)^2/2 + (t-2)^3/6 is reproduced on polynomial pieces."""
        traj = integrate(pure_delay, constant_history([1.0], [1.0], 0.1), 3.0, 0.1)
        assert traj.times.size == 31
        assert traj.states[10, 0] == pytest.approx(2.0, abs=1e-12)
        assert traj.states[20, 0] == pytest.approx(3.5, abs=1e-12)
        assert traj.states[30, 0] == pytest.approx(6.0 + 1.0 / 6.0, abs=1e-11)
        assert traj.derivs[30, 0] == pytest.approx(3.5, abs=1e-11)

    def test_linear_decay(self):
        """Test y' = -y against the exponential."""
        model = scalar_model(1.0, 0.0, 1.0, 0.5)
        traj = integrate(model, constant_history([1.0], [0.5], 0.01), 2.0, 0.01)
        assert traj.states[-1, 0] == pytest.approx(math.exp(-2.0), abs=1e-9)

    def test_fourth_order(self):
        """Test the error against e^{-t} drops by about 16 each time h halves."""
        model = scalar_model(1.0, 0.0, 1.0, 1.0)
        history = constant_history([1.0], [1.0], 0.1)
        errors = [
            abs(integrate(model, history, 2.0, h).states[-1, 0] - math.exp(-2.0))
            for h in (0.1, 0.05, 0.025, 0.0125)
        ]
        ratios = [a / b for a, b in zip(errors, errors[1:])]
        assert len(ratios) == 3
        for ratio in ratios:
            assert 12.0 <= ratio <= 20.0

    def test_converges_to_equilibrium(self, constant):
        """Test positive solutions approach ln 2."""
        traj = integrate(constant, constant_history([0.2], [0.3], 0.006), 60.0)
        assert traj.step == default_step(constant)
        assert traj.states.min() > 0
        assert traj.states[-1, 0] == pytest.approx(math.log(2.0), abs=1e-6)

    def test_two_patches_non_integer_ratio(self):
        """Test delays that are not multiples of the step."""
        model = NicholsonModel((0.5, 0.4), (1.0, 1.2), (2.0, 2.5), (1.0, 1.0), a=((0.0, 0.1), (0.15, 0.0)))
        history = constant_history([1.0, 1.0], [0.5, 0.4], [0.5 / 63, 0.4 / 50])
        traj = integrate(model, history, 5.0, 0.008)
        assert traj.m == 2
        assert np.all(np.isfinite(traj.states))
        assert traj.states.min() > 0

    def test_zero_horizon(self, constant):
        """Test T = 0 keeps only the initial state."""
        history = history_from_functions([lambda s: 1.0 + s], [0.3], 0.1, [lambda s: 1.0 + 0 * s])
        traj = integrate(constant, history, 0.0, 0.05)
        assert traj.times.size == 1
        seg = segment_at(traj, 0.0)
        np.testing.assert_allclose(seg.values[0], 1.0 + seg.grids[0])

    def test_step_too_large(self, constant):
        """Test h must not exceed min(r)/4."""
        with pytest.raises(IntegrationError, match="too large"):
            integrate(constant, constant_history([1.0], [0.3], 0.1), 1.0, 0.1)

    def test_dimension_mismatch(self, constant):
        """Test the history must match the patch count."""
        with pytest.raises(IntegrationError, match="dimension"):
            integrate(constant, constant_history([1.0, 1.0], [0.3, 0.3], 0.1), 1.0)

    def test_delay_mismatch(self, constant):
        """Test the history must be defined on [-r, 0]."""
        with pytest.raises(IntegrationError, match="delays"):
            integrate(constant, constant_history([1.0], [0.5], 0.1), 1.0)

    def test_blow_up(self):
        """Test a non-finite state raises with its time."""
        model = scalar_model(-1000.0, 0.0, 1.0, 0.5)
        with pytest.raises(IntegrationError, match="Non-finite") as excinfo:
            integrate(model, constant_history([1.0], [0.5], 0.01), 5.0, 0.01)
        assert 0.0 < excinfo.value.time <= 5.0

    def test_arrays_read_only(self, constant):
        """Test trajectory arrays cannot be modified."""
        traj = integrate(constant, constant_history([1.0], [0.3], 0.006), 0.3)
        with pytest.raises(ValueError):
            traj.states[0, 0] = 2.0


class TestBatch:
    """Tests for integrating several histories at once."""

    def test_matches_single_runs(self, two_patch):
        """Test every batch member equals its own run."""
        h = 0.005
        histories = [
            constant_history([1.0, 1.0], [0.5, 0.4], h),
            wavy(0.8, [0.5, 0.4], h),
            constant_history([3.0, 0.2], [0.5, 0.4], h),
        ]
        batch = integrate_many(two_patch, histories, 6.0, h)
        assert len(batch) == 3
        for phi, traj in zip(histories, batch):
            single = integrate(two_patch, phi, 6.0, h)
            assert traj.history is phi
            np.testing.assert_allclose(traj.states, single.states, rtol=0, atol=1e-12)
            np.testing.assert_allclose(traj.derivs, single.derivs, rtol=0, atol=1e-12)

    def test_members_are_independent(self, constant):
        """Test trajectories of a batch do not share state arrays."""
        low, high = integrate_many(constant, [constant_history([c], [0.3], 0.006) for c in (0.5, 2.0)], 1.0)
        assert not np.shares_memory(low.states, high.states)
        assert low.states[-1, 0] < high.states[-1, 0]

    def test_empty(self, constant):
        """Test an empty batch is rejected."""
        with pytest.raises(IntegrationError, match="No histories"):
            integrate_many(constant, [], 1.0)

    def test_any_bad_member_rejected(self, constant):
        """Test one mismatched history rejects the batch."""
        with pytest.raises(IntegrationError, match="delays"):
            integrate_many(constant, [constant_history([1.0], [0.3], 0.1), constant_history([1.0], [0.5], 0.1)], 1.0)


class TestSegments:
    """Tests for extracting states y_t."""

    @pytest.fixture
    def traj(self, pure_delay):
        """Pure delay trajectory on [0, 3]."""
        return integrate(pure_delay, constant_history([1.0], [1.0], 0.1), 3.0, 0.1)

    def test_nodes_are_exact(self, traj):
        """Test segment samples at stored times equal the states."""
        seg = segment_at(traj, 2.0)
        assert seg.grids[0].size == 11
        np.testing.assert_array_equal(seg.values[0], traj.states[10:21, 0])
        np.testing.assert_array_equal(seg.derivs[0], traj.derivs[10:21, 0])

    def test_between_nodes(self, traj):
        """Test dense output between stored times, across the breakpoint at t = 2."""
        seg = segment_at(traj, 2.55)
        t = 2.55 + seg.grids[0]
        expected = 1.0 + t + (t - 1.0) ** 2 / 2.0 + np.where(t > 2.0, (t - 2.0) ** 3 / 6.0, 0.0)
        np.testing.assert_allclose(seg.values[0], expected, atol=1e-10)

    def test_straddles_history(self, traj):
        """Test segments at t < r mix history and solution."""
        seg = segment_at(traj, 0.5)
        t = 0.5 + seg.grids[0]
        np.testing.assert_allclose(seg.values[0], np.where(t <= 0, 1.0, 1.0 + t), atol=1e-12)

    def test_outside_horizon(self, traj):
        """Test segment times beyond T."""
        with pytest.raises(IntegrationError, match="outside"):
            segment_at(traj, 3.5)

    def test_non_integer_ratio_spacing(self):
        """Test segment spacing never exceeds the step."""
        model = scalar_model(1.0, 2.0, 1.0, 0.5)
        traj = integrate(model, constant_history([1.0], [0.5], 0.5 / 17), 1.0, 0.03)
        seg = segment_at(traj, 1.0)
        assert seg.grids[0].size == 18
        assert seg.steps[0] <= 0.03

    def test_segments(self, traj):
        """Test several segments at once."""
        assert [s.at_zero()[0] for s in segments(traj, [1.0, 2.0])] == pytest.approx([2.0, 3.5])

    def test_rows(self, traj):
        """Test one CSV row per stored time, matching the header."""
        rows = list(traj.rows())
        assert traj.header == ["t", "y_1", "dy_1"]
        assert len(rows) == 31
        assert rows[10] == pytest.approx([1.0, 2.0, 1.0])


class TestRestart:
    """Tests for restarting from an intermediate state on the shifted model."""

    @pytest.mark.parametrize("t1", [0.5, 2.5])
    def test_restart_matches_tail(self, varying, t1):
        """Test y(t1 + s; phi) = y(s; y_t1, model shifted by t1)."""
        h = 0.01
        traj = integrate(varying, wavy(1.0, [0.5], h), 6.0, h)
        restart = integrate(varying.shifted(t1), segment_at(traj, t1), 6.0 - t1, h)
        start = int(round(t1 / h))
        assert restart.times.size == traj.times.size - start
        np.testing.assert_allclose(restart.states, traj.states[start:], rtol=0, atol=1e-9)
        np.testing.assert_allclose(restart.derivs, traj.derivs[start:], rtol=0, atol=1e-9)

    def test_restart_two_patches(self, two_patch):
        """Test the restart identity with migration and unequal delays."""
        h = 0.005
        traj = integrate(two_patch, wavy(1.0, [0.5, 0.4], h), 4.0, h)
        restart = integrate(two_patch.shifted(2.0), segment_at(traj, 2.0), 2.0, h)
        np.testing.assert_allclose(restart.states, traj.states[400:], rtol=0, atol=1e-9)


@pytest.mark.slow
class TestFullScale:
    """Full-scale runs on the constant scalar model."""

    def test_twenty_histories_reach_ln2(self, constant):
        """Test 20 random positive histories are within 1e-4 of ln 2 at T = 200 with h = 1e-3."""
        h = 1e-3
        steps = grid_steps(constant.delays, h)
        histories = [random_positive_history(rng, constant.delays, steps) for rng in spawn_generators(0, 20)]
        started = time.perf_counter()
        trajectories = integrate_many(constant, histories, 200.0, h)
        elapsed = time.perf_counter() - started
        finals = np.array([traj.states[-1, 0] for traj in trajectories])
        assert np.max(np.abs(finals - math.log(2.0))) < 1e-4
        assert elapsed < 10.0
