"""Deterministic report artifacts: JSON per claim, CSV series and a run summary."""

import csv
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from jinja2 import Environment, PackageLoader, select_autoescape

from expord.core.exceptions import ReportError
from expord.core.models import Verdict, to_plain


def artifact_name(stem: str, command: str, claim: str, extension: str) -> str:
    """<stem>.<command>.<claim>.<extension>"""
    return f"{stem}.{command}.{claim}.{extension}"


def dumps(payload: Any) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(to_plain(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


@dataclass
class SummaryEntry:
    """One claim of a run with its verdict."""

    claim: str
    verdict: Verdict
    required: bool = True
    detail: str = ""


@dataclass
class ReportWriter:
    """Writes the artifacts of one command run on one scenario."""

    out_dir: Path
    stem: str
    command: str
    formats: Sequence[str] = ("json", "csv")
    written: list[Path] = field(default_factory=list)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ReportError(f"Cannot create output directory {self.out_dir}: {e}") from e

    def path(self, claim: str, extension: str) -> Path:
        """Artifact path for a claim."""
        return self.out_dir / artifact_name(self.stem, self.command, claim, extension)

    def _write_text(self, path: Path, text: str) -> Path:
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        except OSError as e:
            raise ReportError(f"Cannot write {path}: {e}") from e
        self.written.append(path)
        return path

    def write_json(self, claim: str, payload: Any) -> Path | None:
        """Write a report (anything with to_dict, or plain data) as JSON."""
        if "json" not in self.formats:
            return None
        if hasattr(payload, "to_dict"):
            payload = payload.to_dict()
        return self._write_text(self.path(claim, "json"), dumps(payload))

    def write_csv(self, claim: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path | None:
        """Write a series with a fixed header; floats use repr for exact round trips."""
        if "csv" not in self.formats:
            return None
        path = self.path(claim, "csv")
        try:
            with open(path, "w", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
        except OSError as e:
            raise ReportError(f"Cannot write {path}: {e}") from e
        self.written.append(path)
        return path

    def write_summary(self, entries: Sequence[SummaryEntry], exit_code: int, context: Mapping[str, Any]) -> list[Path]:
        """Summary JSON (always) and its Markdown rendering."""
        payload = {
            "scenario": self.stem,
            "command": self.command,
            "exit_code": exit_code,
            "claims": {e.claim: {"verdict": e.verdict, "required": e.required, "detail": e.detail} for e in entries},
            "artifacts": sorted(p.name for p in self.written),
            **context,
        }
        paths = [self._write_text(self.path("summary", "json"), dumps(payload))]
        paths.append(self._write_text(self.path("summary", "md"), render_summary(payload)))
        return paths


_env = Environment(
    loader=PackageLoader("expord", "templates"),
    autoescape=select_autoescape(["html", "xml"]),
    keep_trailing_newline=True,
)


def render_summary(payload: Mapping[str, Any]) -> str:
    """Markdown summary of a run."""
    template = _env.get_template("summary.md.j2")
    return template.render(summary=to_plain(payload))


def exit_code_for(verdicts: Iterable[Verdict]) -> int:
    """0 when everything holds, 1 on any failure, 3 when only scans are inconclusive."""
    verdicts = list(verdicts)
    if any(v is Verdict.FAILS for v in verdicts):
        return 1
    if any(v is Verdict.INDETERMINATE for v in verdicts):
        return 3
    return 0


def emit_report(
    writer: ReportWriter,
    reports: Mapping[str, Any],
    entries: Sequence[SummaryEntry],
    context: Mapping[str, Any] | None = None,
) -> int:
    """Write every report as JSON plus the summary; returns the exit code."""
    for claim in sorted(reports):
        writer.write_json(claim, reports[claim])
    code = exit_code_for(e.verdict for e in entries if e.required)
    writer.write_summary(entries, code, context or {})
    return code
