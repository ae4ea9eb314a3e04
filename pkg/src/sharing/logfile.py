"""Session-log and report files with a YAML front-matter run manifest.

Layout::

    ---
    format: sharing-session-log
    format_version: 1
    tool_version: 0.1.0
    command: [simulate, --config, configs/default.toml, --n, '1000', ...]
    timestamp: '2026-01-01T00:00:00+00:00'
    seed: {seed: 7, stream_id: 0}
    config: {...}
    ---
    trajectory_id,position,variant,reward
    0,0,1,1
    0,1,0,0

The front-matter block and the header row are both optional when reading.
Everything after the front-matter is the *data section*; it depends only on
the inputs, never on the time of the run.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

import polars as pl
import yaml

from sharing import __version__
from sharing.core import SESSION_COLUMNS, Dataset, ProductionPolicy, first_violation
from sharing.errors import LogFormatError, MissingInputError
from sharing.estimators import EstimatorKind
from sharing.experiment import Pair, SweepResult

logger = logging.getLogger(__name__)

SESSION_LOG_FORMAT = "sharing-session-log"
ESTIMATE_REPORT_FORMAT = "sharing-estimate-report"
SWEEP_FORMAT = "sharing-sweep"
FORMAT_VERSION = 1
PLOT_DATA_FILE = "plot_data.csv"
MANIFEST_FILE = "manifest.yaml"

# YAML front-matter block
_FRONTMATTER_RE = re.compile(r"^---[ \t]*\n(?:---[ \t]*\n|(.*?)\n---[ \t]*\n)", re.DOTALL)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """What produced a file, in enough detail to regenerate its data section."""

    format: str
    command: list[str] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    seed: dict[str, int] = field(default_factory=dict)
    tool_version: str = __version__
    format_version: int = FORMAT_VERSION
    timestamp: str = ""

    @classmethod
    def capture(
        cls,
        format: str,
        command: list[str],
        config: dict[str, Any] | None = None,
        seed: dict[str, int] | None = None,
    ) -> "RunManifest":
        return cls(
            format=format,
            command=list(command),
            config=dict(config or {}),
            seed=dict(seed or {}),
            timestamp=datetime.now(UTC).isoformat(timespec="seconds"),
        )

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunManifest":
        return cls(
            format=str(data.get("format", "")),
            command=[str(part) for part in data.get("command") or []],
            config=dict(data.get("config") or {}),
            seed=dict(data.get("seed") or {}),
            tool_version=str(data.get("tool_version", "")),
            format_version=int(data.get("format_version", FORMAT_VERSION)),
            timestamp=str(data.get("timestamp", "")),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": self.format,
            "format_version": self.format_version,
            "tool_version": self.tool_version,
            "command": self.command,
            "timestamp": self.timestamp,
            "seed": self.seed,
            "config": self.config,
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, allow_unicode=True)


def write_manifest(path: Path, manifest: RunManifest) -> None:
    Path(path).write_text(manifest.to_yaml(), encoding="utf-8")


def read_manifest(path: Path) -> RunManifest:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"manifest not found: {path}")
    return RunManifest.from_dict(yaml.safe_load(path.read_text(encoding="utf-8")) or {})


# ---------------------------------------------------------------------------
# Front-matter split
# ---------------------------------------------------------------------------


def split_frontmatter(content: str) -> tuple[dict[str, Any], str, int]:
    """Split YAML front-matter from the data section.

    Returns ``(metadata, data_section, lines_consumed)``; metadata is empty
    when there is no front-matter block or it is not valid YAML.
    """
    match = _FRONTMATTER_RE.match(content)
    if not match:
        return {}, content, 0
    consumed = content.count("\n", 0, match.end())
    try:
        meta = yaml.safe_load(match.group(1) or "") or {}
    except yaml.YAMLError as exc:
        logger.warning("ignoring unreadable front-matter: %s", exc)
        meta = {}
    if not isinstance(meta, dict):
        meta = {}
    return meta, content[match.end() :], consumed


def write_with_manifest(path: Path, frame: pl.DataFrame, manifest: RunManifest) -> None:
    """Write ``---\\n<manifest>---\\n`` followed by *frame* as CSV with a header row."""
    body = frame.write_csv()
    Path(path).write_text(f"---\n{manifest.to_yaml()}---\n{body}", encoding="utf-8")


def read_data_section(path: Path) -> str:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"file not found: {path}")
    _, body, _ = split_frontmatter(path.read_text(encoding="utf-8"))
    return body


# ---------------------------------------------------------------------------
# Session logs
# ---------------------------------------------------------------------------


def write_session_log(path: Path, dataset: Dataset, manifest: RunManifest) -> None:
    write_with_manifest(path, dataset.to_frame(), manifest)


def parse_session_rows(body: str, *, first_line_no: int = 1) -> pl.DataFrame:
    """Parse the data section into typed columns plus the source ``line_no``.

    Blank lines are skipped; a leading header row is optional.
    """
    lines = body.splitlines()
    frame = (
        pl.DataFrame({"raw": lines}, schema={"raw": pl.String})
        .with_row_index("line_no", offset=first_line_no)
        .filter(pl.col("raw").str.strip_chars() != "")
    )
    if frame.height and frame["raw"][0].strip().startswith(SESSION_COLUMNS[0]):
        header = [part.strip() for part in frame["raw"][0].split(",")]
        if header != list(SESSION_COLUMNS):
            raise LogFormatError(
                f"header must be {','.join(SESSION_COLUMNS)}, got {','.join(header)}",
                line_no=int(frame["line_no"][0]),
            )
        frame = frame.slice(1)

    fields = frame.with_columns(pl.col("raw").str.split(",").alias("fields"))
    ragged = fields.filter(pl.col("fields").list.len() != len(SESSION_COLUMNS))
    if ragged.height:
        raise LogFormatError(
            f"expected {len(SESSION_COLUMNS)} comma-separated fields, got {ragged['raw'][0]!r}",
            line_no=int(ragged["line_no"][0]),
        )
    typed = fields.select(
        pl.col("line_no").cast(pl.Int64),
        *[
            pl.col("fields")
            .list.get(k)
            .str.strip_chars()
            .cast(pl.Int64, strict=False)
            .alias(name)
            for k, name in enumerate(SESSION_COLUMNS)
        ],
        pl.col("raw"),
    )
    bad = typed.filter(pl.any_horizontal(pl.col(list(SESSION_COLUMNS)).is_null()))
    if bad.height:
        raise LogFormatError(
            f"fields must be integers, got {bad['raw'][0]!r}", line_no=int(bad["line_no"][0])
        )
    return typed.drop("raw")


def read_session_log(
    path: Path, policy: ProductionPolicy
) -> tuple[Dataset, RunManifest | None]:
    """Parse a session log; *policy* is the logged π_p used for IPS weights."""
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"session log not found: {path}")
    meta, body, consumed = split_frontmatter(path.read_text(encoding="utf-8"))
    rows = parse_session_rows(body, first_line_no=consumed + 1)

    columns = {name: rows[name].to_numpy() for name in SESSION_COLUMNS}
    found = first_violation(*columns.values(), n_variants=policy.n_variants)
    if found is not None:
        row, reason = found
        raise LogFormatError(reason, line_no=int(rows["line_no"][row]))

    manifest = RunManifest.from_dict(meta) if meta else None
    return Dataset(**columns, policy=policy), manifest


# ---------------------------------------------------------------------------
# Sweep tables
# ---------------------------------------------------------------------------


def curve_file_name(kind: EstimatorKind, pair: Pair) -> str:
    return f"curve_{kind.value}_{pair[0]}-{pair[1]}.csv"


def write_sweep_tables(out_dir: Path, result: SweepResult, manifest: RunManifest) -> list[Path]:
    """One curve CSV per (estimator, pair), the combined plot data and ``manifest.yaml``.

    The CSVs depend only on the plan; the manifest also records when and how
    the sweep was run.
    """
    out_dir = Path(out_dir)
    written: list[Path] = []
    for kind in result.plan.estimators:
        for pair in result.plan.pairs:
            path = out_dir / curve_file_name(kind, pair)
            result.curve(kind, pair).write_csv(path)
            written.append(path)
    path = out_dir / PLOT_DATA_FILE
    result.to_frame().write_csv(path)
    written.append(path)
    path = out_dir / MANIFEST_FILE
    write_manifest(path, manifest)
    written.append(path)
    return written
