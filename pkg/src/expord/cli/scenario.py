"""Scenario files: TOML description of a model and the runs to perform on it."""

import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import sympy

from expord.core.coeffs import QuasiPeriodicCoefficient
from expord.core.exceptions import CoefficientError, ExpordError, ScenarioError
from expord.core.fnspace import HistorySegment, history_from_functions
from expord.core.nicholson import NicholsonModel

POLICIES = ("strict", "relaxed")
CLAIMS = ("monotone", "cone_entry", "sublinear", "part_metric", "persistence", "subequilibrium")
FORMATS = ("json", "csv")
DEFAULT_OUTPUT = "expord-out"

_SECTIONS = {"name", "policy", "model", "cone", "scan", "simulation", "verification", "attractor", "output"}
_MODEL_KEYS = {"delays", "offset", "d", "beta", "c", "a"}
_SIMULATION_KEYS = {"T", "step", "histories"}
_VERIFICATION_KEYS = {"claims", "samples", "seed", "T", "transient", "tolerance", "lambdas", "subequilibrium"}
_ATTRACTOR_KEYS = {"initials", "T", "transient", "tolerance", "seed"}

S = sympy.Symbol("s")


@dataclass(frozen=True)
class ScanSpec:
    """Window for suprema over the real line (None selects the defaults)."""

    T_scan: float | None = None
    step: float | None = None


@dataclass(frozen=True)
class SimulationSpec:
    """Horizon, step and initial histories for `simulate`."""

    T: float
    step: float | None = None
    histories: tuple[tuple[float | str, ...], ...] = ()


@dataclass(frozen=True)
class SubequilibriumSpec:
    """Constant state to test as a sub- or super-equilibrium."""

    values: tuple[float, ...]
    sign: str = "sub"


@dataclass(frozen=True)
class VerificationSpec:
    """Claims to verify and their sampling parameters."""

    claims: tuple[str, ...] = ()
    samples: int = 10
    seed: int = 0
    T: float = 30.0
    transient: float | None = None
    tolerance: float = 1e-9
    lambdas: tuple[float, ...] = (0.25, 0.5, 0.9)
    subequilibrium: SubequilibriumSpec | None = None


@dataclass(frozen=True)
class AttractorSpec:
    """Parameters of the attractor estimate."""

    initials: int = 10
    T: float = 500.0
    transient: float | None = None
    tolerance: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class OutputSpec:
    """Artifact directory and formats."""

    directory: str | None = None
    formats: tuple[str, ...] = FORMATS


@dataclass(frozen=True)
class Scenario:
    """A parsed scenario file."""

    model: NicholsonModel
    name: str | None = None
    policy: str = "strict"
    cone: tuple[float, ...] | None = None
    scan: ScanSpec = field(default_factory=ScanSpec)
    simulation: SimulationSpec | None = None
    verification: VerificationSpec | None = None
    attractor: AttractorSpec | None = None
    output: OutputSpec = field(default_factory=OutputSpec)
    source: Path | None = field(default=None, compare=False)

    @property
    def stem(self) -> str:
        """Artifact name prefix."""
        if self.source is not None:
            return self.source.stem
        return self.name or "scenario"

    def to_dict(self) -> dict[str, Any]:
        """TOML-compatible form; parse_scenario(to_dict()) gives an equal scenario."""
        data: dict[str, Any] = {"policy": self.policy, "model": self.model.to_dict()}
        if self.name is not None:
            data["name"] = self.name
        if self.cone is not None:
            data["cone"] = {"mu": list(self.cone)}
        scan = {k: v for k, v in (("T_scan", self.scan.T_scan), ("step", self.scan.step)) if v is not None}
        if scan:
            data["scan"] = scan
        if self.simulation is not None:
            sim: dict[str, Any] = {"T": self.simulation.T, "histories": [list(h) for h in self.simulation.histories]}
            if self.simulation.step is not None:
                sim["step"] = self.simulation.step
            data["simulation"] = sim
        if self.verification is not None:
            v = self.verification
            ver: dict[str, Any] = {
                "claims": list(v.claims),
                "samples": v.samples,
                "seed": v.seed,
                "T": v.T,
                "tolerance": v.tolerance,
                "lambdas": list(v.lambdas),
            }
            if v.transient is not None:
                ver["transient"] = v.transient
            if v.subequilibrium is not None:
                ver["subequilibrium"] = {"values": list(v.subequilibrium.values), "sign": v.subequilibrium.sign}
            data["verification"] = ver
        if self.attractor is not None:
            a = self.attractor
            att: dict[str, Any] = {"initials": a.initials, "T": a.T, "tolerance": a.tolerance, "seed": a.seed}
            if a.transient is not None:
                att["transient"] = a.transient
            data["attractor"] = att
        out: dict[str, Any] = {"formats": list(self.output.formats)}
        if self.output.directory is not None:
            out["directory"] = self.output.directory
        data["output"] = out
        return data


def _check_keys(table: Any, allowed: set[str], key: str) -> Mapping[str, Any]:
    if not isinstance(table, Mapping):
        raise ScenarioError("Expected a table", key=key)
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ScenarioError(f"Unknown key(s) {unknown}", key=key or "<root>")
    return table


def _number(value: Any, key: str, positive: bool = False, nonnegative: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"Expected a number, got {value!r}", key=key)
    value = float(value)
    if not np.isfinite(value):
        raise ScenarioError("Expected a finite number", key=key)
    if positive and not value > 0:
        raise ScenarioError(f"Expected a positive number, got {value}", key=key)
    if nonnegative and value < 0:
        raise ScenarioError(f"Expected a nonnegative number, got {value}", key=key)
    return value


def _integer(value: Any, key: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"Expected an integer, got {value!r}", key=key)
    if value < minimum:
        raise ScenarioError(f"Expected an integer >= {minimum}, got {value}", key=key)
    return value


def _list(value: Any, key: str, length: int | None = None) -> list[Any]:
    if not isinstance(value, list):
        raise ScenarioError(f"Expected an array, got {value!r}", key=key)
    if length is not None and len(value) != length:
        raise ScenarioError(f"Expected {length} entries, got {len(value)}", key=key)
    return value


def _coefficient(literal: Any, key: str) -> QuasiPeriodicCoefficient:
    try:
        return QuasiPeriodicCoefficient.from_literal(literal)
    except CoefficientError as e:
        raise ScenarioError(str(e), key=key) from e


def _parse_model(table: Any) -> NicholsonModel:
    table = _check_keys(table, _MODEL_KEYS, "model")
    for required in ("delays", "d", "beta", "c"):
        if required not in table:
            raise ScenarioError(f"Missing '{required}'", key="model")
    delays = [_number(r, f"model.delays[{i}]", positive=True) for i, r in enumerate(_list(table["delays"], "model.delays"))]
    m = len(delays)
    if m == 0:
        raise ScenarioError("At least one patch is required", key="model.delays")
    coeffs = {
        name: tuple(_coefficient(x, f"model.{name}[{i}]") for i, x in enumerate(_list(table[name], f"model.{name}", m)))
        for name in ("d", "beta", "c")
    }
    a = None
    if "a" in table:
        rows = _list(table["a"], "model.a", m)
        a = tuple(
            tuple(_coefficient(x, f"model.a[{i}][{j}]") for j, x in enumerate(_list(row, f"model.a[{i}]", m)))
            for i, row in enumerate(rows)
        )
    offset = _number(table.get("offset", 0.0), "model.offset")
    try:
        return NicholsonModel(tuple(delays), coeffs["d"], coeffs["beta"], coeffs["c"], a, offset)
    except ExpordError as e:
        raise ScenarioError(str(e), key="model") from e


def _history_literal(value: Any, key: str) -> float | str:
    if isinstance(value, str):
        expression(value, key)
        return value
    return _number(value, key)


def _parse_simulation(table: Any, m: int) -> SimulationSpec:
    table = _check_keys(table, _SIMULATION_KEYS, "simulation")
    if "T" not in table:
        raise ScenarioError("Missing 'T'", key="simulation")
    histories = tuple(
        tuple(_history_literal(x, f"simulation.histories[{k}][{i}]") for i, x in enumerate(_list(h, f"simulation.histories[{k}]", m)))
        for k, h in enumerate(_list(table.get("histories", []), "simulation.histories"))
    )
    step = _number(table["step"], "simulation.step", positive=True) if "step" in table else None
    return SimulationSpec(_number(table["T"], "simulation.T", nonnegative=True), step, histories)


def _parse_verification(table: Any, m: int) -> VerificationSpec:
    table = _check_keys(table, _VERIFICATION_KEYS, "verification")
    claims = tuple(_list(table.get("claims", []), "verification.claims"))
    for claim in claims:
        if claim not in CLAIMS:
            raise ScenarioError(f"Unknown claim {claim!r}, expected one of {list(CLAIMS)}", key="verification.claims")
    sub = None
    if "subequilibrium" in table:
        st = _check_keys(table["subequilibrium"], {"values", "sign"}, "verification.subequilibrium")
        values = tuple(
            _number(x, f"verification.subequilibrium.values[{i}]", nonnegative=True)
            for i, x in enumerate(_list(st.get("values"), "verification.subequilibrium.values", m))
        )
        sign = st.get("sign", "sub")
        if sign not in ("sub", "super"):
            raise ScenarioError(f"sign must be 'sub' or 'super', got {sign!r}", key="verification.subequilibrium.sign")
        sub = SubequilibriumSpec(values, sign)
    lambdas = tuple(
        _number(x, f"verification.lambdas[{i}]", nonnegative=True)
        for i, x in enumerate(_list(table.get("lambdas", [0.25, 0.5, 0.9]), "verification.lambdas"))
    )
    defaults = VerificationSpec()
    return VerificationSpec(
        claims=claims,
        samples=_integer(table.get("samples", defaults.samples), "verification.samples", 1),
        seed=_integer(table.get("seed", defaults.seed), "verification.seed"),
        T=_number(table.get("T", defaults.T), "verification.T", positive=True),
        transient=_number(table["transient"], "verification.transient", nonnegative=True) if "transient" in table else None,
        tolerance=_number(table.get("tolerance", defaults.tolerance), "verification.tolerance", nonnegative=True),
        lambdas=lambdas,
        subequilibrium=sub,
    )


def _parse_attractor(table: Any) -> AttractorSpec:
    table = _check_keys(table, _ATTRACTOR_KEYS, "attractor")
    defaults = AttractorSpec()
    return AttractorSpec(
        initials=_integer(table.get("initials", defaults.initials), "attractor.initials", 1),
        T=_number(table.get("T", defaults.T), "attractor.T", positive=True),
        transient=_number(table["transient"], "attractor.transient", nonnegative=True) if "transient" in table else None,
        tolerance=_number(table.get("tolerance", defaults.tolerance), "attractor.tolerance", positive=True),
        seed=_integer(table.get("seed", defaults.seed), "attractor.seed"),
    )


def _parse_output(table: Any) -> OutputSpec:
    table = _check_keys(table, {"directory", "formats"}, "output")
    directory = table.get("directory")
    if directory is not None and not isinstance(directory, str):
        raise ScenarioError("Expected a string", key="output.directory")
    formats = tuple(_list(table.get("formats", list(FORMATS)), "output.formats"))
    for fmt in formats:
        if fmt not in FORMATS:
            raise ScenarioError(f"Unknown format {fmt!r}", key="output.formats")
    return OutputSpec(directory, formats)


def parse_scenario(data: Mapping[str, Any], source: Path | None = None) -> Scenario:
    """Validate a decoded scenario document; unknown keys are rejected at every level."""
    data = _check_keys(data, _SECTIONS, "")
    if "model" not in data:
        raise ScenarioError("Missing [model] table")
    model = _parse_model(data["model"])

    policy = data.get("policy", "strict")
    if policy not in POLICIES:
        raise ScenarioError(f"policy must be one of {list(POLICIES)}, got {policy!r}", key="policy")
    name = data.get("name")
    if name is not None and not isinstance(name, str):
        raise ScenarioError("Expected a string", key="name")

    cone = None
    if "cone" in data:
        table = _check_keys(data["cone"], {"mu"}, "cone")
        cone = tuple(
            _number(x, f"cone.mu[{i}]", nonnegative=True) for i, x in enumerate(_list(table.get("mu"), "cone.mu", model.m))
        )
    scan = ScanSpec()
    if "scan" in data:
        table = _check_keys(data["scan"], {"T_scan", "step"}, "scan")
        scan = ScanSpec(
            _number(table["T_scan"], "scan.T_scan", positive=True) if "T_scan" in table else None,
            _number(table["step"], "scan.step", positive=True) if "step" in table else None,
        )

    return Scenario(
        model=model,
        name=name,
        policy=policy,
        cone=cone,
        scan=scan,
        simulation=_parse_simulation(data["simulation"], model.m) if "simulation" in data else None,
        verification=_parse_verification(data["verification"], model.m) if "verification" in data else None,
        attractor=_parse_attractor(data["attractor"]) if "attractor" in data else None,
        output=_parse_output(data.get("output", {})),
        source=source,
    )


def _decode_position(error: tomllib.TOMLDecodeError) -> tuple[int | None, int | None]:
    match = re.search(r"line (\d+), column (\d+)", str(error))
    if match is None:
        return None, None
    return int(match.group(1)), int(match.group(2))


def loads_scenario(text: str, source: Path | None = None) -> Scenario:
    """Parse scenario text."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line, column = _decode_position(e)
        raise ScenarioError(f"Malformed scenario: {e}", line=line, column=column) from e
    return parse_scenario(data, source)


def load_scenario(path: Path | str) -> Scenario:
    """Read and parse a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ScenarioError(f"Cannot read scenario {path}: {e}") from e
    return loads_scenario(text, path)


def expression(text: str, key: str = "history") -> sympy.Expr:
    """Parse an expression in the variable s."""
    try:
        expr = sympy.sympify(text, locals={"s": S})
    except (sympy.SympifyError, SyntaxError, TypeError) as e:
        raise ScenarioError(f"Invalid expression {text!r}: {e}", key=key) from e
    if not isinstance(expr, sympy.Expr):
        raise ScenarioError(f"Not an expression: {text!r}", key=key)
    extra = expr.free_symbols - {S}
    if extra:
        raise ScenarioError(f"Unknown symbol(s) {sorted(str(x) for x in extra)} in {text!r}", key=key)
    return expr


def build_history(literals: Sequence[float | str], delays: Sequence[float], step: float | Sequence[float]) -> HistorySegment:
    """History segment from per-patch literals (numbers or expressions in s) with exact derivatives."""
    functions, derivatives = [], []
    for literal in literals:
        expr = sympy.Float(literal) if isinstance(literal, (int, float)) else expression(literal)
        functions.append(sympy.lambdify(S, expr, "numpy"))
        derivatives.append(sympy.lambdify(S, sympy.diff(expr, S), "numpy"))
    return history_from_functions(functions, delays, step, derivatives)
