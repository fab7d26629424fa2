"""Deterministic tabular output.

Tables are written as delimited text with a commented metadata preamble so
that every file is self-describing and byte-identical across reruns of the
same configuration. Column names carry their unit as a suffix (t_s,
slant_a_km, ...); numeric formatting is fixed at 17 significant digits for
reproducibility columns and 6 for display columns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

REPRO_DIGITS = 17
DISPLAY_DIGITS = 6


@dataclass(frozen=True)
class ResultTable:
    """A named grid of values plus the metadata needed to reproduce it."""

    name: str
    columns: tuple[str, ...]
    rows: list[tuple]
    metadata: dict = field(default_factory=dict)
    display_columns: frozenset = frozenset()

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(
                    f"row width {len(row)} != {len(self.columns)} columns"
                )
        unknown = set(self.display_columns) - set(self.columns)
        if unknown:
            raise ValueError(f"display_columns not in table: {sorted(unknown)}")


def _format_value(value, digits: int) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int,)):
        return str(value)
    if isinstance(value, float):
        return f"{value:.{digits - 1}e}"
    return str(value)


def emit(table: ResultTable, path) -> None:
    """Write a table; identical tables give byte-identical files."""
    lines = [f"# table: {table.name}"]
    for key in sorted(table.metadata):
        lines.append(f"# {key}: {json.dumps(table.metadata[key], sort_keys=True)}")
    lines.append(",".join(table.columns))
    digits = [
        DISPLAY_DIGITS if c in table.display_columns else REPRO_DIGITS
        for c in table.columns
    ]
    for row in table.rows:
        lines.append(",".join(_format_value(v, d) for v, d in zip(row, digits)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_table(path) -> ResultTable:
    """Parse a file written by :func:`emit` (round-trips values exactly)."""
    name = ""
    metadata = {}
    columns = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# table: "):
                name = line[len("# table: "):]
            elif line.startswith("# "):
                key, _, raw = line[2:].partition(": ")
                metadata[key] = json.loads(raw)
            elif columns is None:
                columns = tuple(line.split(","))
            else:
                rows.append(tuple(_parse_value(v) for v in line.split(",")))
    if columns is None:
        raise ValueError(f"{path}: no header row")
    return ResultTable(name=name, columns=columns, rows=rows, metadata=metadata)


def emit_events(records, path) -> None:
    """Swap-event log: one JSON record per swap attempt, grouped by trial."""
    with open(path, "w") as fh:
        for rec in records:
            for k in range(rec.n_swaps):
                fh.write(json.dumps({
                    "trial": rec.trial,
                    "t_s": rec.t_s[k],
                    "wait_a_s": rec.wait_a_s[k],
                    "wait_b_s": rec.wait_b_s[k],
                    "fidelity": rec.fidelity[k],
                    "bsm_success": bool(rec.bsm_success[k]),
                }) + "\n")
