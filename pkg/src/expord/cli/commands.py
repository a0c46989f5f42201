"""CLI commands for expord."""

import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import click

from expord import __version__
from expord.analysis.runner import map_samples
from expord.analysis.sampling import grid_steps, random_cone_element, spawn_generators
from expord.analysis.verification import (
    PartMetricTrace,
    attractor_estimate,
    check_subequilibrium,
    part_metric_trace,
    persistence_floor,
    verify_cone_entry,
    verify_monotone,
    verify_sublinear,
)
from expord.cli.reports import ReportWriter, SummaryEntry, emit_report
from expord.cli.scenario import DEFAULT_OUTPUT, Scenario, build_history, load_scenario
from expord.core.cone import ConeSpec
from expord.core.exceptions import ExpordError, ModelError, ScenarioError
from expord.core.integrator import default_step, integrate_many, segment_at
from expord.core.models import Verdict, VerificationReport
from expord.core.nicholson import (
    check_monotone,
    check_relaxed,
    cone_from_model,
    special_solution_conditions,
    superequilibrium_radius,
    transform_mean,
    validate_model,
)

EXIT_USAGE = 2
COMMANDS = ("check", "simulate", "verify", "attractor")

logger = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    """Exit status and artifacts of one command on one scenario."""

    exit_code: int
    entries: list[SummaryEntry] = field(default_factory=list)
    paths: list[Path] = field(default_factory=list)


def _scan(scenario: Scenario) -> dict[str, float | None]:
    return {"T_scan": scenario.scan.T_scan, "step": scenario.scan.step}


def _step(scenario: Scenario) -> float:
    if scenario.simulation is not None and scenario.simulation.step is not None:
        return scenario.simulation.step
    return default_step(scenario.model)


def _cone(scenario: Scenario) -> ConeSpec:
    if scenario.cone is not None:
        return ConeSpec(scenario.cone)
    cone, report = cone_from_model(scenario.model)
    if cone is None:
        raise ModelError(f"No exponential cone for this model: {report.patches}")
    return cone


def _optional_cone(scenario: Scenario) -> ConeSpec | None:
    if scenario.cone is not None:
        return ConeSpec(scenario.cone)
    return cone_from_model(scenario.model)[0]


def run_check(scenario: Scenario, policy: str) -> tuple[list[SummaryEntry], dict[str, Any]]:
    """Hypotheses, cone, monotonicity conditions, super-equilibrium radius and special solutions."""
    model, scan = scenario.model, _scan(scenario)
    reports: dict[str, Any] = {}

    hypotheses = validate_model(model, **scan)
    _, cone_report = cone_from_model(model)
    monotone = check_monotone(model, **scan)
    relaxed = check_relaxed(model, **scan)
    reports.update(hypotheses=hypotheses, cone=cone_report, monotone=monotone, relaxed=relaxed)

    hypotheses_verdict = hypotheses.verdict
    monotone_verdict = monotone.verdict
    radius_model = model
    if policy == "relaxed":
        transform = transform_mean(model)
        transformed_hypotheses = validate_model(transform.model, **scan)
        transformed_monotone = check_monotone(transform.model, **scan)
        reports.update(
            transform=transform,
            **{"hypotheses-transformed": transformed_hypotheses, "monotone-transformed": transformed_monotone},
        )
        hypotheses_verdict = Verdict.best([hypotheses.verdict, transformed_hypotheses.verdict])
        monotone_verdict = Verdict.best([monotone.verdict, relaxed.verdict, transformed_monotone.verdict])
        if not hypotheses.verdict.holds:
            radius_model = transform.model

    try:
        radius = superequilibrium_radius(radius_model)
        reports["superequilibrium"] = radius
        radius_entry = SummaryEntry("superequilibrium", Verdict.HOLDS_STRICT, False, f"R0={radius.radius:.6g}")
    except ModelError as e:
        reports["superequilibrium"] = {"error": str(e)}
        radius_entry = SummaryEntry("superequilibrium", Verdict.FAILS, False, str(e))

    entries = [
        SummaryEntry("hypotheses", hypotheses_verdict, True, _conditions(hypotheses.conditions)),
        SummaryEntry("cone", cone_report.verdict, False),
        SummaryEntry("monotone", monotone_verdict, True, _conditions(monotone.conditions)),
        SummaryEntry("relaxed", relaxed.verdict, False),
        radius_entry,
    ]
    if model.m == 1:
        special = special_solution_conditions(model, **scan)
        reports["special_solutions"] = special
        entries.append(SummaryEntry("special_solutions", special.verdict, False, _conditions(special.conditions)))

    return entries, reports


def _conditions(conditions: dict[str, Verdict]) -> str:
    return ", ".join(f"{name}: {v.value}" for name, v in conditions.items())


def run_simulate(scenario: Scenario, writer: ReportWriter) -> tuple[list[SummaryEntry], dict[str, Any]]:
    """Integrate every configured history and export the trajectories and their final segments."""
    if scenario.simulation is None:
        raise ScenarioError("The simulate command needs a [simulation] table")
    model, sim = scenario.model, scenario.simulation
    h = _step(scenario)
    steps = grid_steps(model.delays, h)
    finals = []
    histories = [build_history(literals, model.delays, steps) for literals in sim.histories]
    trajectories = integrate_many(model, histories, sim.T, h) if histories else []
    for k, traj in enumerate(trajectories, start=1):
        writer.write_csv(f"trajectory_{k}", traj.header, traj.rows())
        final = segment_at(traj, traj.horizon)
        writer.write_csv(f"segment_{k}", final.header, final.rows())
        finals.append({"history": k, "final_time": traj.times[-1], "final_state": traj.states[-1]})
    entries = [SummaryEntry("simulate", Verdict.HOLDS_STRICT, True, f"{len(sim.histories)} trajectories")]
    return entries, {"trajectories": {"step": h, "T": sim.T, "runs": finals}}


def _part_metric(
    scenario: Scenario, cone: ConeSpec, seed: int, workers: int
) -> tuple[VerificationReport, list[list[float]]]:
    model, spec = scenario.model, scenario.verification
    h = _step(scenario)
    steps = grid_steps(model.delays, h)

    def one(rng) -> PartMetricTrace:
        phi = random_cone_element(rng, cone, model.delays, steps, interior=True)
        psi = random_cone_element(rng, cone, model.delays, steps, interior=True)
        return part_metric_trace(model, cone, phi, psi, spec.T, h)

    traces = map_samples(one, spawn_generators(seed, spec.samples), workers)
    rows = [[k, float(t), float(p)] for k, trace in enumerate(traces, start=1) for t, p in zip(trace.times, trace.values)]
    report = VerificationReport(
        "part_metric",
        spec.T,
        [trace.report.passed for trace in traces],
        [trace.report.worst_margin for trace in traces],
        {
            "seed": seed,
            "step": h,
            "aborted_at": [trace.report.metadata["aborted_at"] for trace in traces],
            "sample_times": "0, 2r, 3r, ...",
        },
    )
    return report, rows


def run_verify(
    scenario: Scenario, writer: ReportWriter, seed: int | None, workers: int
) -> tuple[list[SummaryEntry], dict[str, Any]]:
    """Run the configured verification claims."""
    if scenario.verification is None:
        raise ScenarioError("The verify command needs a [verification] table")
    model, spec = scenario.model, scenario.verification
    seed = spec.seed if seed is None else seed
    h = _step(scenario)
    entries, reports = [], {}
    cone = _cone(scenario) if set(spec.claims) - {"subequilibrium", "persistence"} else None

    for claim in spec.claims:
        if claim == "monotone":
            report = verify_monotone(model, cone, spec.samples, spec.T, seed, h, spec.tolerance, workers)
        elif claim == "cone_entry":
            report = verify_cone_entry(model, cone, spec.samples, spec.T, seed, h, spec.tolerance, workers)
        elif claim == "sublinear":
            rng = spawn_generators(seed, 1)[0]
            psi = random_cone_element(rng, cone, model.delays, grid_steps(model.delays, h), interior=True)
            report = verify_sublinear(model, cone, psi, spec.lambdas, spec.T, h, spec.tolerance, workers)
        elif claim == "part_metric":
            report, rows = _part_metric(scenario, cone, seed, workers)
            writer.write_csv("part_metric", ["pair", "t", "p"], rows)
        elif claim == "persistence":
            persistence_cone = cone if cone is not None else _optional_cone(scenario)
            _, report = persistence_floor(
                model, spec.samples, spec.transient, spec.T, seed, h, cone=persistence_cone, workers=workers
            )
        else:
            sub = spec.subequilibrium
            if sub is None:
                raise ScenarioError("Missing [verification.subequilibrium]", key="verification")
            report = check_subequilibrium(model, sub.values, sign=sub.sign, **_scan(scenario))
        reports[claim] = report
        entries.append(SummaryEntry(claim, report.verdict, True, f"worst margin {report.worst_margin:.3e}"))

    return entries, reports


def run_attractor(
    scenario: Scenario, writer: ReportWriter, seed: int | None, workers: int
) -> tuple[list[SummaryEntry], dict[str, Any]]:
    """Estimate the attracting solution and its spread."""
    if scenario.attractor is None:
        raise ScenarioError("The attractor command needs an [attractor] table")
    spec = scenario.attractor
    seed = spec.seed if seed is None else seed
    cone = ConeSpec(scenario.cone) if scenario.cone is not None else None
    estimate = attractor_estimate(
        scenario.model, spec.initials, spec.transient, spec.T, seed, _step(scenario), spec.tolerance, cone, workers
    )
    m = scenario.model.m
    header = ["t"] + [f"b_{i + 1}" for i in range(m)] + ["spread"]
    rows = (
        [float(t)] + [float(v) for v in b] + [float(s)]
        for t, b, s in zip(estimate.times, estimate.b, estimate.spread)
    )
    writer.write_csv("attractor", header, rows)
    detail = f"tail spread {estimate.tail_spread:.3e}, floor {estimate.floor:.4g}"
    return [SummaryEntry("attractor", estimate.verdict, True, detail)], {"attractor": estimate}


def run_scenario(
    path: Path | str,
    command: str,
    out: Path | str | None = None,
    seed: int | None = None,
    policy: str | None = None,
    workers: int = 1,
) -> RunOutcome:
    """Run one command on a scenario file and write its artifacts."""
    if command not in COMMANDS:
        raise ScenarioError(f"Unknown command {command!r}, expected one of {list(COMMANDS)}")
    scenario = load_scenario(path)
    if policy is not None:
        scenario = replace(scenario, policy=policy)
    out_dir = Path(out) if out is not None else Path(scenario.output.directory or DEFAULT_OUTPUT)
    writer = ReportWriter(out_dir, scenario.stem, command, scenario.output.formats)

    if command == "check":
        entries, reports = run_check(scenario, scenario.policy)
    elif command == "simulate":
        entries, reports = run_simulate(scenario, writer)
    elif command == "verify":
        entries, reports = run_verify(scenario, writer, seed, workers)
    else:
        entries, reports = run_attractor(scenario, writer, seed, workers)

    code = emit_report(writer, reports, entries, {"policy": scenario.policy, "seed": seed})
    logger.info(f"{command} on {scenario.stem}: exit {code}, {len(writer.written)} artifact(s)")
    return RunOutcome(code, entries, list(writer.written))


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


@click.group()
@click.version_option(version=__version__, prog_name="expord")
@click.option("-v", "--verbose", count=True, help="Increase log verbosity (repeatable)")
def cli(verbose: int):
    """Exponential-ordering checks and simulations for almost periodic Nicholson systems."""
    _configure_logging(verbose)


def scenario_command(name: str, help_text: str):
    """Register a command taking SCENARIO with the shared options."""

    @cli.command(name=name, help=help_text)
    @click.argument("scenario", type=click.Path(exists=True, dir_okay=False, path_type=Path))
    @click.option(
        "--out",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help=f"Output directory (default: [output].directory or ./{DEFAULT_OUTPUT})",
    )
    @click.option("--seed", type=int, default=None, help="Override the scenario seed")
    @click.option(
        "--policy",
        type=click.Choice(["strict", "relaxed"]),
        default=None,
        help="Which monotonicity condition is required (default: scenario policy)",
    )
    @click.option("-w", "--workers", type=int, default=1, help="Number of concurrent sample workers (default: 1)")
    def command(scenario: Path, out: Path | None, seed: int | None, policy: str | None, workers: int):
        try:
            outcome = run_scenario(scenario, name, out, seed, policy, workers)
        except ScenarioError as e:
            click.echo(f"✗ Error: {e}", err=True)
            raise SystemExit(EXIT_USAGE)
        except ExpordError as e:
            click.echo(f"✗ Error: {e}", err=True)
            raise SystemExit(1)

        for entry in outcome.entries:
            mark = "✓" if entry.verdict.holds else "✗"
            suffix = "" if entry.required else " (informational)"
            click.echo(f"{mark} {entry.claim}: {entry.verdict.value}{suffix}")
        click.echo(f"Artifacts written: {len(outcome.paths)}")
        raise SystemExit(outcome.exit_code)

    return command


check = scenario_command(
    "check",
    """Check hypotheses and monotonicity conditions of a scenario's model.

    Example:
        expord check scenarios/constant_scalar.toml --out ./out/
    """,
)
simulate = scenario_command(
    "simulate",
    """Integrate the scenario's histories and export trajectory CSVs.

    Example:
        expord simulate scenarios/constant_scalar.toml
    """,
)
verify = scenario_command(
    "verify",
    """Run the scenario's empirical verifications.

    Example:
        expord verify scenarios/constant_scalar.toml --seed 7 --workers 4
    """,
)
attractor = scenario_command(
    "attractor",
    """Estimate the attracting almost periodic solution.

    Example:
        expord attractor scenarios/quasi_periodic_two_patch.toml
    """,
)


__all__ = ["cli", "run_scenario", "RunOutcome"]
