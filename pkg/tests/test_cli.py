"""Tests for the command-line interface."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from expord import __version__
from expord.cli.commands import cli, run_scenario
from expord.core.exceptions import ScenarioError

SCENARIOS = Path(__file__).parent.parent / "scenarios"

TINY = """
name = "tiny"

[model]
delays = [0.3]
d = [1.0]
beta = [2.0]
c = [1.0]

[simulation]
T = 1.2
histories = [[0.5], ["1 + 0.2*sin(3*s)"]]

[verification]
claims = ["monotone", "cone_entry", "persistence", "subequilibrium"]
samples = 2
T = 1.2
transient = 0.6
subequilibrium = { values = [0.1], sign = "sub" }

[attractor]
initials = 2
T = 30.0
transient = 20.0
"""


@pytest.fixture
def runner():
    """Click test runner."""
    return CliRunner()


@pytest.fixture
def tiny(tmp_path):
    """A small scalar scenario with every table."""
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return path


def invoke(runner, *args):
    return runner.invoke(cli, [str(a) for a in args])


class TestCheck:
    """Tests for the check command."""

    def test_constant_scalar_passes(self, runner, tmp_path):
        """Test exit 0 and the per-claim artifacts."""
        out = tmp_path / "out"
        result = invoke(runner, "check", SCENARIOS / "constant_scalar.toml", "--out", out)
        assert result.exit_code == 0, result.output
        assert "✓ monotone: holds-strict" in result.output
        for claim in ("hypotheses", "cone", "monotone", "relaxed", "superequilibrium", "special_solutions"):
            assert (out / f"constant_scalar.check.{claim}.json").exists()
        summary = json.loads((out / "constant_scalar.check.summary.json").read_text())
        assert summary["exit_code"] == 0
        assert summary["policy"] == "strict"
        assert (out / "constant_scalar.check.summary.md").exists()

    def test_two_patch_passes(self, runner, tmp_path):
        """Test the quasi-periodic two-patch scenario."""
        result = invoke(runner, "check", SCENARIOS / "quasi_periodic_two_patch.toml", "--out", tmp_path)
        assert result.exit_code == 0, result.output

    def test_strong_feedback_fails(self, runner, tmp_path):
        """Test exit 1 when r beta e^{dr} > e."""
        result = invoke(runner, "check", SCENARIOS / "strong_feedback.toml", "--out", tmp_path)
        assert result.exit_code == 1
        assert "✗ monotone: fails" in result.output

    @pytest.mark.parametrize("name", ["negative_decay", "migration_imbalance"])
    def test_hypotheses_fail(self, runner, tmp_path, name):
        """Test exit 1 when a hypothesis fails."""
        result = invoke(runner, "check", SCENARIOS / f"{name}.toml", "--out", tmp_path)
        assert result.exit_code == 1
        assert "✗ hypotheses: fails" in result.output

    def test_relaxed_policy(self, runner, tmp_path):
        """Test the big oscillation passes only under the relaxed policy."""
        path = SCENARIOS / "big_oscillation.toml"
        relaxed = invoke(runner, "check", path, "--out", tmp_path / "relaxed")
        strict = invoke(runner, "check", path, "--out", tmp_path / "strict", "--policy", "strict")
        assert relaxed.exit_code == 0, relaxed.output
        assert strict.exit_code == 1
        assert (tmp_path / "relaxed" / "big_oscillation.check.transform.json").exists()
        assert not (tmp_path / "strict" / "big_oscillation.check.transform.json").exists()

    def test_reruns_are_identical(self, runner, tmp_path):
        """Test artifacts are byte-identical across runs."""
        path = SCENARIOS / "constant_scalar.toml"
        invoke(runner, "check", path, "--out", tmp_path / "a")
        invoke(runner, "check", path, "--out", tmp_path / "b")
        for artifact in sorted((tmp_path / "a").iterdir()):
            assert artifact.read_bytes() == (tmp_path / "b" / artifact.name).read_bytes()


class TestOtherCommands:
    """Tests for simulate, verify and attractor."""

    def test_simulate(self, runner, tiny, tmp_path):
        """Test one CSV per history."""
        result = invoke(runner, "simulate", tiny, "--out", tmp_path)
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "tiny.simulate.trajectory_2.csv").read_text().splitlines()
        assert lines[0] == "t,y_1,dy_1"
        assert len(lines) == 1 + 201

    def test_simulate_final_segment(self, runner, tiny, tmp_path):
        """Test the final segment y_T is written with one row per grid node and ends at the last state."""
        result = invoke(runner, "simulate", tiny, "--out", tmp_path)
        assert result.exit_code == 0, result.output
        segment = (tmp_path / "tiny.simulate.segment_1.csv").read_text().splitlines()
        trajectory = (tmp_path / "tiny.simulate.trajectory_1.csv").read_text().splitlines()
        assert segment[0] == "component,s,value,deriv"
        assert len(segment) == 1 + 51
        last = segment[-1].split(",")
        assert last[0] == "1"
        assert float(last[1]) == 0.0
        assert float(last[2]) == float(trajectory[-1].split(",")[1])

    def test_verify(self, runner, tiny, tmp_path):
        """Test the configured claims pass."""
        result = invoke(runner, "verify", tiny, "--out", tmp_path)
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "tiny.verify.monotone.json").read_text())
        assert report["sample_count"] == 2
        assert report["passed"] is True

    def test_verify_workers_do_not_change_results(self, runner, tiny, tmp_path):
        """Test the worker count leaves artifacts unchanged."""
        invoke(runner, "verify", tiny, "--out", tmp_path / "one", "--seed", "4")
        invoke(runner, "verify", tiny, "--out", tmp_path / "two", "--seed", "4", "-w", "2")
        name = "tiny.verify.cone_entry.json"
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_attractor(self, runner, tiny, tmp_path):
        """Test trajectories collapse for the scalar model."""
        result = invoke(runner, "attractor", tiny, "--out", tmp_path)
        assert result.exit_code == 0, result.output
        header = (tmp_path / "tiny.attractor.attractor.csv").read_text().splitlines()[0]
        assert header == "t,b_1,spread"

    def test_missing_table(self, runner, tmp_path):
        """Test exit 2 when the command's table is absent."""
        result = invoke(runner, "simulate", SCENARIOS / "negative_decay.toml", "--out", tmp_path)
        assert result.exit_code == 2
        assert "✗ Error" in result.output


class TestErrors:
    """Tests for usage errors."""

    def test_malformed_scenario(self, runner, tmp_path):
        """Test exit 2 on invalid TOML."""
        path = tmp_path / "bad.toml"
        path.write_text("[model\n")
        result = invoke(runner, "check", path, "--out", tmp_path)
        assert result.exit_code == 2
        assert "✗ Error" in result.output

    def test_missing_file(self, runner, tmp_path):
        """Test click rejects a missing scenario path."""
        result = invoke(runner, "check", tmp_path / "missing.toml")
        assert result.exit_code == 2

    def test_version(self, runner):
        """Test --version."""
        result = invoke(runner, "--version")
        assert __version__ in result.output

    def test_unknown_command(self, tiny):
        """Test run_scenario validates the command name."""
        with pytest.raises(ScenarioError, match="Unknown command"):
            run_scenario(tiny, "plot")
