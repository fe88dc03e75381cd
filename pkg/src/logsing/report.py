"""JSON-lines report rows and the CSV summary.

Payloads are serialized canonically (sorted keys, fixed separators, repr
floats), so identical inputs give byte-identical payload text.  Wall time
lives outside the payload.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

SCHEMA_VERSION = 1


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, enum.Enum):
        return clean(obj.value)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def canonical_json(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def input_hash(inputs: dict) -> str:
    return hashlib.sha256(canonical_json(inputs).encode()).hexdigest()[:16]


@dataclass
class ReportRow:
    command: str
    inputs: dict
    payload: dict
    error_bars: dict = field(default_factory=dict)
    wall_time: float = 0.0
    label: str = ""
    schema_version: int = SCHEMA_VERSION

    @property
    def input_hash(self) -> str:
        return input_hash(self.inputs)

    @property
    def experiment_id(self) -> str:
        tag = f"-{self.label}" if self.label else ""
        return f"{self.command}{tag}-{self.input_hash[:12]}"

    def deterministic_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "experiment_id": self.experiment_id,
            "command": self.command,
            "input_hash": self.input_hash,
            "inputs": self.inputs,
            "payload": self.payload,
            "error_bars": self.error_bars,
        }

    def payload_json(self) -> str:
        """Everything except wall time, canonically serialized."""
        return canonical_json(self.deterministic_dict())

    def to_json(self) -> str:
        d = self.deterministic_dict()
        d["wall_time"] = round(float(self.wall_time), 6)
        return canonical_json(d)


CSV_FIELDS = ("experiment_id", "command", "label", "verdict", "value", "error", "passed", "wall_time")


def summary_fields(row: ReportRow) -> dict:
    p = row.payload
    value = next((p[k] for k in ("value", "gamma", "inequality_margin", "dim", "slope", "max_changes") if k in p), "")
    err = next(iter(row.error_bars.values()), "") if row.error_bars else ""
    return {
        "experiment_id": row.experiment_id,
        "command": row.command,
        "label": row.label,
        "verdict": p.get("kind", p.get("verdict", "")),
        "value": clean(value),
        "error": clean(err),
        "passed": p.get("passed", ""),
        "wall_time": round(float(row.wall_time), 6),
    }


class ReportWriter:
    """Append-only JSON-lines sink with an optional CSV summary."""

    def __init__(self, path: str | None = None, csv_path: str | None = None, stream: IO | None = None):
        self._own = path is not None and path != "-"
        self._out = open(path, "a", encoding="utf-8") if self._own else (stream or sys.stdout)
        self._csv_file = None
        self._csv = None
        if csv_path:
            new = not _nonempty(csv_path)
            self._csv_file = open(csv_path, "a", newline="", encoding="utf-8")
            self._csv = csv.DictWriter(self._csv_file, fieldnames=CSV_FIELDS, lineterminator="\n")
            if new:
                self._csv.writeheader()
        self.rows: list = []

    def write(self, row: ReportRow) -> None:
        self._out.write(row.to_json() + "\n")
        self._out.flush()
        if self._csv:
            self._csv.writerow(summary_fields(row))
        self.rows.append(row)

    def write_all(self, rows: Iterable[ReportRow]) -> None:
        for r in rows:
            self.write(r)

    def close(self) -> None:
        if self._own:
            self._out.close()
        if self._csv_file:
            self._csv_file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _nonempty(path: str) -> bool:
    try:
        with open(path, "rb") as fh:
            return bool(fh.read(1))
    except FileNotFoundError:
        return False


def strip_wall_time(line: str) -> str:
    """Payload part of a report line, for byte comparison between runs."""
    d = json.loads(line)
    d.pop("wall_time", None)
    return canonical_json(d)
