"""File formats: JSONL click datasets, CSV curves, JSON reports.

Every file written here is deterministic for fixed inputs (no
timestamps, stable key order) and carries a schema tag.  The formats
are documented with examples in docs/formats.md.
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import DataError
from .simulate import ClickDataset, DATASET_SCHEMA

__all__ = [
    "write_dataset_jsonl",
    "read_dataset_jsonl",
    "write_dataset_csv",
    "write_json",
    "read_json",
    "write_curve_csv",
    "read_curve_csv",
    "write_manifest",
]

RESULTS_SCHEMA = "photonmem.results/1"
FIT_SCHEMA = "photonmem.fit/1"
MANIFEST_SCHEMA = "photonmem.manifest/1"

# published JSON Schema for fit reports (docs/formats.md)
FIT_REPORT_JSON_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "photonmem fit report",
    "type": "object",
    "required": ["schema", "kind"],
    "properties": {
        "schema": {"const": FIT_SCHEMA},
        "kind": {"type": "string"},
        "params": {"type": "object"},
        "result": {"type": "object"},
        "scheme": {"type": "object"},
        "write_efficiency": {
            "type": "object",
            "required": ["value", "std_err"],
            "properties": {
                "value": {"type": "number"},
                "std_err": {"type": "number"},
            },
        },
        "crossings_us": {
            "type": "object",
            "additionalProperties": {"type": ["number", "null"]},
        },
    },
}


def write_json(path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def write_manifest(path, config_echo: dict, seed: int, extra: dict | None = None) -> None:
    payload = {"schema": MANIFEST_SCHEMA, "config": config_echo, "seed": seed}
    if extra:
        payload.update(extra)
    write_json(path, payload)


# ---------------------------------------------------------------------------
# datasets


def write_dataset_jsonl(data: ClickDataset, path) -> None:
    """One record per line: counts, optional tags, delay, write flag."""
    with open(path, "w") as fh:
        offsets = data.tag_offsets
        for i in range(len(data)):
            rec = {
                "w": int(data.write_clicks[i]),
                "r": int(data.read_clicks[i]),
                "tags": None,
                "delay_us": float(data.delay_us[i]),
                "write": bool(data.write_pulse[i]),
            }
            if data.has_time_tags:
                rec["tags"] = [float(t) for t in data.tag_values[offsets[i] : offsets[i + 1]]]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_dataset_jsonl(path, manifest_path=None) -> ClickDataset:
    w, r, delay, write = [], [], [], []
    tag_values: list[float] = []
    tag_counts: list[int] = []
    tagged = None
    try:
        fh = open(path)
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                w.append(int(rec["w"]))
                r.append(int(rec["r"]))
                delay.append(float(rec["delay_us"]))
                write.append(bool(rec["write"]))
                tags = rec.get("tags")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: bad record on line {lineno}: {exc}") from None
            has = tags is not None
            if tagged is None:
                tagged = has
            elif tagged != has:
                raise DataError(f"{path}: line {lineno}: inconsistent presence of time tags")
            if has:
                tag_values.extend(float(t) for t in tags)
                tag_counts.append(len(tags))
    if not w:
        raise DataError(f"{path}: dataset is empty")
    meta = {"schema": DATASET_SCHEMA}
    if manifest_path is not None and os.path.exists(manifest_path):
        meta.update(read_json(manifest_path))
    else:
        auto = Path(str(path)).with_suffix(".manifest.json")
        if auto.exists():
            meta.update(read_json(auto))
    values = offsets = None
    if tagged:
        values = np.array(tag_values, dtype=np.float64)
        offsets = np.zeros(len(w) + 1, dtype=np.int64)
        np.cumsum(tag_counts, out=offsets[1:])
    return ClickDataset(
        np.array(w), np.array(r), np.array(delay), np.array(write), values, offsets, meta=meta
    )


def write_dataset_csv(data: ClickDataset, path) -> None:
    """Compact counts-only form (no time tags)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["write_clicks", "read_clicks", "delay_us", "write_pulse"])
        for i in range(len(data)):
            writer.writerow(
                [
                    int(data.write_clicks[i]),
                    int(data.read_clicks[i]),
                    float(data.delay_us[i]),
                    int(data.write_pulse[i]),
                ]
            )


# ---------------------------------------------------------------------------
# curves


def write_curve_csv(path, columns: dict[str, np.ndarray]) -> None:
    """Plot-ready CSV; column order follows the supplied mapping."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    if any(len(a) != len(arrays[0]) for a in arrays):
        raise ValueError("curve columns differ in length")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in zip(*arrays):
            writer.writerow([repr(float(v)) for v in row])


def read_curve_csv(path, min_columns: int = 2):
    """Read numeric columns (with an optional header) from a CSV file.

    Returns (header, columns) where columns is a list of float arrays.
    Raises DataError with the offending line number on malformed input.
    """
    rows = []
    header = None
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                if lineno == 1 and header is None:
                    header = [cell.strip() for cell in row]
                    continue
                raise DataError(f"{path}: line {lineno}: non-numeric value in {row!r}") from None
            if len(rows[-1]) < min_columns:
                raise DataError(
                    f"{path}: line {lineno}: expected at least {min_columns} columns"
                )
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DataError(f"{path}: ragged rows (inconsistent column count)")
    cols = [np.array([r[i] for r in rows]) for i in range(width)]
    return header, cols
