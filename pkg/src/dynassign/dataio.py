"""File formats shared by the CLI, backtest, and tests.

- Pool CSV: header row = agent ids; one row of values per historical item.
- Cohort CSV: header `item_id[,batch_id],<agent ids...>`; one row per arrival
  in arrival order.
- Capacities CSV: header `agent,capacity`.
- Values may be outcome scores (direction="max", converted to costs as
  1 - score at ingestion) or raw costs (direction="min", passed through).
- Canonical JSON: sorted keys, compact separators, trailing newline — the
  byte-determinism contract for result documents.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .lap import AgentPool
from .stochastic import HistoricalPool

DIRECTIONS = ("min", "max")


def apply_direction(values: np.ndarray, direction: str) -> np.ndarray:
    if direction not in DIRECTIONS:
        raise ValidationError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    return 1.0 - values if direction == "max" else values


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ValidationError(f"bad number {text!r} in {where}") from exc


def _read_rows(path) -> list[list[str]]:
    # OSError deliberately propagates: unreadable files are I/O failures,
    # not schema problems, and the CLI exit codes tell them apart
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValidationError(f"{path} is empty")
    return rows


def read_pool(path, direction: str = "min") -> HistoricalPool:
    rows = _read_rows(path)
    agents = tuple(h.strip() for h in rows[0])
    values = np.array(
        [[_parse_float(cell, f"{path} row {i + 2}") for cell in row] for i, row in enumerate(rows[1:])]
    )
    if values.ndim != 2 or values.shape[1] != len(agents):
        raise ValidationError(f"{path}: ragged rows or width mismatch")
    return HistoricalPool(agents, apply_direction(values, direction))


def write_pool(path, agents, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(agents)
        for row in np.asarray(values):
            w.writerow([f"{v:.10g}" for v in row])


def read_cohort_csv(path, direction: str = "min"):
    """Returns (item_ids, batch_ids or None, agents, cost matrix)."""
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "item_id":
        raise ValidationError(f"{path}: cohort header must start with item_id")
    has_batch = len(header) > 1 and header[1] == "batch_id"
    first_value = 2 if has_batch else 1
    agents = tuple(header[first_value:])
    if not agents:
        raise ValidationError(f"{path}: cohort has no agent columns")
    items, batches, values = [], [], []
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise ValidationError(f"{path} row {i + 2}: expected {len(header)} cells")
        items.append(row[0].strip())
        if has_batch:
            try:
                batches.append(int(row[1]))
            except ValueError as exc:
                raise ValidationError(f"{path} row {i + 2}: bad batch_id {row[1]!r}") from exc
        values.append([_parse_float(c, f"{path} row {i + 2}") for c in row[first_value:]])
    costs = apply_direction(np.array(values, dtype=np.float64), direction)
    return tuple(items), (tuple(batches) if has_batch else None), agents, costs


def write_cohort_csv(path, item_ids, agents, values, batch_ids=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["item_id"] + (["batch_id"] if batch_ids is not None else []) + list(agents)
        w.writerow(header)
        for i, row in enumerate(np.asarray(values)):
            cells = [item_ids[i]]
            if batch_ids is not None:
                cells.append(batch_ids[i])
            w.writerow(cells + [f"{v:.10g}" for v in row])


def read_capacities(path) -> AgentPool:
    rows = _read_rows(path)
    if [h.strip() for h in rows[0]] != ["agent", "capacity"]:
        raise ValidationError(f"{path}: capacities header must be agent,capacity")
    agents, caps = [], []
    for i, row in enumerate(rows[1:]):
        if len(row) != 2:
            raise ValidationError(f"{path} row {i + 2}: expected 2 cells")
        agents.append(row[0].strip())
        try:
            caps.append(int(row[1]))
        except ValueError as exc:
            raise ValidationError(f"{path} row {i + 2}: bad capacity {row[1]!r}") from exc
    return AgentPool(tuple(agents), tuple(caps))


def write_capacities(path, pool: AgentPool) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["agent", "capacity"])
        for agent, cap in zip(pool.agents, pool.capacity):
            w.writerow([agent, cap])


def read_cost_matrix(path):
    """Plain matrix CSV for `solve`: header = agent ids, rows = items.

    An optional leading `item_id` column names the rows."""
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    named = header and header[0] == "item_id"
    agents = tuple(header[1:] if named else header)
    items, values = [], []
    for i, row in enumerate(rows[1:]):
        if named:
            items.append(row[0].strip())
            cells = row[1:]
        else:
            items.append(f"i{i}")
            cells = row
        values.append([_parse_float(c, f"{path} row {i + 2}") for c in cells])
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != len(agents):
        raise ValidationError(f"{path}: ragged rows or width mismatch")
    return tuple(items), agents, arr


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def sha256_bytes(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())
