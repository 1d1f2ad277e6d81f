"""Tabular results shared by the measurement and experiment layers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

#: marker written in place of a value when a sweep point fails
ERROR_MARKER = "error"


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, complex):
        v = v.real
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.11e}"


@dataclass
class ScanResult:
    scenario: str
    headers: list[str]
    rows: list[tuple] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.headers.index(name)
        return [r[i] for r in self.rows]

    def argmax(self, name: str):
        """Row with the largest numeric value in column ``name``."""
        i = self.headers.index(name)
        numeric = [r for r in self.rows if isinstance(r[i], (int, float)) and not math.isnan(r[i])]
        if not numeric:
            return None
        return max(numeric, key=lambda r: r[i])

    def csv_text(self) -> str:
        lines = [",".join(self.headers)]
        lines += [",".join(format_value(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, directory: str | Path) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / f"{self.scenario}.csv"
        meta_path = directory / f"{self.scenario}.json"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.headers)
            for row in self.rows:
                writer.writerow([format_value(v) for v in row])
        meta_path.write_text(json.dumps(self.metadata, indent=2, sort_keys=True, default=str) + "\n")
        return csv_path, meta_path

    @property
    def n_errors(self) -> int:
        return sum(1 for r in self.rows if ERROR_MARKER in r)
