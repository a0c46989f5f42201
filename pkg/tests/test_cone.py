"""Tests for exponential-ordering cones."""

import math

import numpy as np
import pytest

from expord.analysis.sampling import random_cone_element, spawn_generators
from expord.core.cone import (
    ConeSpec,
    check_norm_bound,
    cone_contains,
    in_interior,
    leq_B,
    norm_bound,
    part_metric,
)
from expord.core.exceptions import ConeError
from expord.core.fnspace import axpy, constant_history, history_from_functions

STEP = 0.05


def segment(f, df, r=1.0):
    """Scalar segment of f with exact derivative df."""
    return history_from_functions([f], [r], STEP, [df])


@pytest.fixture
def cone():
    """Scalar cone with mu = 1."""
    return ConeSpec((1.0,))


class TestConeSpec:
    """Tests for cone construction."""

    def test_matrix(self):
        """Test B = diag(-mu)."""
        np.testing.assert_array_equal(ConeSpec((1.0, 2.0)).matrix, [[-1.0, 0.0], [0.0, -2.0]])

    def test_negative_rate(self):
        """Test negative rates are rejected."""
        with pytest.raises(ConeError):
            ConeSpec((-0.1,))

    def test_empty(self):
        """Test a cone needs a rate."""
        with pytest.raises(ConeError):
            ConeSpec(())


class TestMembership:
    """Tests for cone membership and the induced order."""

    def test_constant_in_interior(self, cone):
        """Test positive constants are interior points."""
        phi = constant_history([1.0], [1.0], STEP)
        assert cone_contains(phi, cone).holds
        report = in_interior(phi, cone)
        assert report.holds
        assert report.margin == pytest.approx(1.0)

    def test_boundary_element(self, cone):
        """Test e^{-mu s} lies on the boundary."""
        phi = segment(lambda s: np.exp(-s), lambda s: -np.exp(-s))
        assert cone_contains(phi, cone).holds
        assert not in_interior(phi, cone).holds

    def test_decaying_too_fast(self, cone):
        """Test e^{-2s} violates the slope condition at s = -r."""
        phi = segment(lambda s: np.exp(-2.0 * s), lambda s: -2.0 * np.exp(-2.0 * s))
        report = cone_contains(phi, cone)
        assert not report.holds
        assert report.margin == pytest.approx(-math.exp(2.0))
        assert report.location == (0, -1.0)

    def test_negative_values(self, cone):
        """Test negative segments are outside the cone."""
        assert not cone_contains(constant_history([-0.5], [1.0], STEP), cone).holds

    def test_mu_zero_means_nondecreasing(self):
        """Test mu = 0 gives the monotone cone."""
        cone = ConeSpec((0.0,))
        increasing = segment(lambda s: 2.0 + s, lambda s: 1.0 + 0 * s)
        decreasing = segment(lambda s: 2.0 - s, lambda s: -1.0 + 0 * s)
        assert cone_contains(increasing, cone).holds
        assert not cone_contains(decreasing, cone).holds

    def test_order(self, cone):
        """Test constants are ordered by value."""
        low = constant_history([1.0], [1.0], STEP)
        high = constant_history([2.0], [1.0], STEP)
        assert leq_B(low, high, cone).holds
        assert not leq_B(high, low, cone).holds

    def test_closed_under_nonnegative_combinations(self):
        """Test a phi + b psi stays in the cone for a, b >= 0."""
        cone = ConeSpec((1.0, 0.3))
        rngs = spawn_generators(3, 13)
        members = [random_cone_element(rng, cone, (1.0, 0.5), STEP) for rng in rngs[:6]]
        weights = rngs[12].uniform(0.0, 5.0, size=(len(members), 2))
        for (phi, psi), (a, b) in zip(zip(members, members[1:] + members[:1]), weights):
            combined = axpy(a, phi, axpy(b, psi))
            assert cone_contains(combined, cone).holds
        assert cone_contains(axpy(0.0, members[0]), cone).margin == 0.0

    def test_reflexive_and_antisymmetric(self):
        """Test phi <=_B phi with margin 0, and orders holding both ways force a sup-distance within tol."""
        cone = ConeSpec((1.0, 0.3))
        tol = 1e-9
        members = [random_cone_element(rng, cone, (1.0, 0.5), STEP) for rng in spawn_generators(4, 5)]
        for phi in members:
            assert leq_B(phi, phi, cone, tol).margin == 0.0
            nearby = axpy(1.0 + 1e-12, phi)
            pairs = [(phi, nearby)] + [(phi, psi) for psi in members if psi is not phi]
            for a, b in pairs:
                if leq_B(a, b, cone, tol).holds and leq_B(b, a, cone, tol).holds:
                    assert axpy(-1.0, a, b).norm("sup") <= tol
            assert leq_B(phi, nearby, cone, tol).holds and leq_B(nearby, phi, cone, tol).holds

    def test_dimension_mismatch(self, cone):
        """Test segments and cones of different dimension."""
        with pytest.raises(ConeError, match="dimension"):
            cone_contains(constant_history([1.0, 1.0], [1.0, 1.0], STEP), cone)


class TestPartMetric:
    """Tests for the part metric."""

    def test_identical(self, cone):
        """Test distance to itself is zero."""
        phi = constant_history([1.0], [1.0], STEP)
        assert part_metric(phi, phi, cone) == 0.0

    def test_constants(self, cone):
        """Test p(1, 2) = ln 2."""
        phi = constant_history([1.0], [1.0], STEP)
        psi = constant_history([2.0], [1.0], STEP)
        assert part_metric(phi, psi, cone) == pytest.approx(math.log(2.0), abs=2e-6)

    def test_symmetric_and_triangle(self, cone):
        """Test symmetry and the triangle inequality."""
        a = constant_history([1.0], [1.0], STEP)
        b = segment(lambda s: 1.5 + 0.5 * s, lambda s: 0.5 + 0 * s)
        c = segment(lambda s: 3.0 + 0.2 * np.sin(4 * s), lambda s: 0.8 * np.cos(4 * s))
        ab, ba = part_metric(a, b, cone), part_metric(b, a, cone)
        assert ab == pytest.approx(ba, abs=2e-6)
        assert part_metric(a, c, cone) <= ab + part_metric(b, c, cone) + 4e-6

    def test_boundary_rejected(self, cone):
        """Test boundary points have no finite distance."""
        phi = segment(lambda s: np.exp(-s), lambda s: -np.exp(-s))
        with pytest.raises(ConeError, match="interior"):
            part_metric(phi, constant_history([1.0], [1.0], STEP), cone)

    def test_norm_bound_factor(self):
        """Test the bound vanishes at p = 0."""
        assert norm_bound(0.0) == 0.0
        assert norm_bound(math.log(2.0)) == pytest.approx(2.5)

    def test_norm_bound_holds(self, cone):
        """Test the Lipschitz distance is bounded by the part metric."""
        phi = constant_history([1.0], [1.0], STEP)
        psi = constant_history([2.0], [1.0], STEP)
        lhs, rhs = check_norm_bound(phi, psi, cone)
        assert lhs == pytest.approx(1.0)
        assert lhs <= rhs
