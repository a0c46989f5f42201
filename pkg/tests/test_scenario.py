"""Tests for scenario files."""

import math
from pathlib import Path

import numpy as np
import pytest

from expord.cli.scenario import build_history, expression, load_scenario, loads_scenario, parse_scenario
from expord.core.exceptions import ScenarioError

SCENARIOS = Path(__file__).parent.parent / "scenarios"

MINIMAL = """
[model]
delays = [0.3]
d = [1.0]
beta = [2.0]
c = [1.0]
"""


class TestLoadScenario:
    """Tests for the bundled scenarios."""

    def test_constant_scalar(self):
        """Test the scalar scenario with every table."""
        scenario = load_scenario(SCENARIOS / "constant_scalar.toml")
        assert scenario.stem == "constant_scalar"
        assert scenario.model.m == 1
        assert scenario.policy == "strict"
        assert len(scenario.verification.claims) == 6
        assert scenario.verification.subequilibrium.values == (0.1,)
        assert scenario.simulation.histories[2] == ("0.5 + 0.4*sin(7*s)",)
        assert scenario.attractor.tolerance == 1e-4

    def test_two_patch(self):
        """Test quasi-periodic coefficients and migration."""
        scenario = load_scenario(SCENARIOS / "quasi_periodic_two_patch.toml")
        model = scenario.model
        assert model.delays == (0.5, 0.4)
        assert model.migration_pairs == ((0, 1), (1, 0))
        assert model.a[0][1].frequencies == pytest.approx((math.sqrt(2.0),))
        assert scenario.scan.T_scan == 600.0

    def test_big_oscillation_policy(self):
        """Test the relaxed policy is read."""
        assert load_scenario(SCENARIOS / "big_oscillation.toml").policy == "relaxed"

    def test_round_trip(self):
        """Test to_dict parses back to an equal scenario."""
        scenario = load_scenario(SCENARIOS / "constant_scalar.toml")
        assert parse_scenario(scenario.to_dict()) == scenario

    def test_missing_file(self, tmp_path):
        """Test unreadable files."""
        with pytest.raises(ScenarioError, match="Cannot read"):
            load_scenario(tmp_path / "missing.toml")

    def test_stem_without_source(self):
        """Test the name is used when there is no file."""
        assert loads_scenario('name = "demo"\n' + MINIMAL).stem == "demo"


class TestValidation:
    """Tests for rejected scenarios."""

    def test_malformed_toml(self):
        """Test decode errors carry line and column."""
        with pytest.raises(ScenarioError) as excinfo:
            loads_scenario("[model]\ndelays = ]\n")
        assert excinfo.value.line is not None
        assert "line" in str(excinfo.value)

    def test_unknown_key(self):
        """Test unknown keys are rejected with their table."""
        with pytest.raises(ScenarioError, match="Unknown key") as excinfo:
            loads_scenario(MINIMAL + "delta = 1.0\n")
        assert excinfo.value.key == "model"

    def test_unknown_section(self):
        """Test unknown top-level tables."""
        with pytest.raises(ScenarioError, match="Unknown key"):
            loads_scenario(MINIMAL + "[plot]\nx = 1\n")

    def test_missing_model(self):
        """Test the model table is required."""
        with pytest.raises(ScenarioError, match="model"):
            loads_scenario('name = "x"\n')

    def test_wrong_length(self):
        """Test one coefficient per delay."""
        with pytest.raises(ScenarioError, match="Expected 1 entries") as excinfo:
            loads_scenario(MINIMAL.replace("d = [1.0]", "d = [1.0, 2.0]"))
        assert excinfo.value.key == "model.d"

    def test_bad_coefficient(self):
        """Test malformed coefficient tables."""
        with pytest.raises(ScenarioError, match="frequency"):
            loads_scenario(MINIMAL.replace("d = [1.0]", "d = [{ const = 1.0, harmonics = [{ amp = 1.0, freq = -2.0 }] }]"))

    def test_nonzero_diagonal(self):
        """Test model errors become scenario errors."""
        with pytest.raises(ScenarioError, match="diagonal"):
            loads_scenario(MINIMAL + "a = [[0.5]]\n")

    def test_unknown_claim(self):
        """Test verification claims are checked."""
        with pytest.raises(ScenarioError, match="Unknown claim"):
            loads_scenario(MINIMAL + '[verification]\nclaims = ["chaos"]\n')

    def test_bad_policy(self):
        """Test the policy must be strict or relaxed."""
        with pytest.raises(ScenarioError, match="policy"):
            loads_scenario('policy = "lenient"\n' + MINIMAL)

    def test_cone_length(self):
        """Test explicit cone rates need one per patch."""
        with pytest.raises(ScenarioError, match="Expected 1 entries"):
            loads_scenario(MINIMAL + "[cone]\nmu = [1.0, 2.0]\n")

    def test_negative_horizon(self):
        """Test numbers are range-checked."""
        with pytest.raises(ScenarioError, match="nonnegative"):
            loads_scenario(MINIMAL + "[simulation]\nT = -1.0\n")

    def test_bad_history_expression(self):
        """Test histories may only use s."""
        with pytest.raises(ScenarioError, match="Unknown symbol"):
            loads_scenario(MINIMAL + '[simulation]\nT = 1.0\nhistories = [["x + s"]]\n')


class TestHistories:
    """Tests for history literals."""

    def test_expression(self):
        """Test expressions in s."""
        assert float(expression("2*s + 1").subs("s", 1.0)) == 3.0

    def test_build_history(self):
        """Test numbers and expressions with exact derivatives."""
        seg = build_history([0.5, "1 + 0.4*sin(7*s)"], (0.3, 0.3), 0.006)
        np.testing.assert_allclose(seg.values[0], 0.5)
        np.testing.assert_allclose(seg.derivs[0], 0.0)
        g = seg.grids[1]
        np.testing.assert_allclose(seg.values[1], 1 + 0.4 * np.sin(7 * g))
        np.testing.assert_allclose(seg.derivs[1], 2.8 * np.cos(7 * g))
