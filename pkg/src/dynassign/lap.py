"""Static assignment core: cost matrices, capacitated agent pools, LAP solves.

Agents with capacity z are expanded into z identical unit columns named
``"{agent}::{k}"``; every optimizer in the package runs on the expanded
matrix, so an item is always matched to one capacity unit of one agent.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import _kernels
from .errors import InfeasibleError, ValidationError

_PERM_CACHE: dict[tuple[int, int], np.ndarray] = {}
_BRUTE_FORCE_LIMIT = 1_000_000


def _as_cost_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"cost matrix must be 2-d, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError("cost matrix contains non-finite entries")
    return arr


@dataclass(frozen=True)
class AgentPool:
    """Agent identifiers with their remaining integer capacities."""

    agents: tuple[str, ...]
    capacity: tuple[int, ...]

    def __post_init__(self):
        if len(self.agents) != len(self.capacity):
            raise ValidationError("agents and capacity lengths differ")
        if len(set(self.agents)) != len(self.agents):
            raise ValidationError("duplicate agent ids")
        if any((not isinstance(z, (int, np.integer))) or z < 0 for z in self.capacity):
            raise ValidationError("capacities must be nonnegative integers")

    @property
    def total_capacity(self) -> int:
        return int(sum(self.capacity))

    def spend(self, agent: str) -> "AgentPool":
        """Pool after consuming one unit of `agent`."""
        if agent not in self.agents:
            raise ValidationError(f"unknown agent {agent!r}")
        i = self.agents.index(agent)
        if self.capacity[i] <= 0:
            raise InfeasibleError(f"agent {agent!r} has no remaining capacity")
        cap = list(self.capacity)
        cap[i] -= 1
        return AgentPool(self.agents, tuple(cap))


@dataclass(frozen=True)
class CostMatrix:
    """Items x agents costs; row i is item i's cost at every agent."""

    items: tuple[str, ...]
    agents: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        arr = _as_cost_array(self.values)
        if arr.shape != (len(self.items), len(self.agents)):
            raise ValidationError(
                f"values shape {arr.shape} does not match {len(self.items)} items x {len(self.agents)} agents"
            )
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class Assignment:
    """A solved matching: parallel item/agent/unit tuples plus the total."""

    items: tuple[str, ...]
    agents: tuple[str, ...]
    units: tuple[str, ...]
    total: float

    @property
    def mean(self) -> float:
        return self.total / len(self.items) if self.items else 0.0


def expand_capacity(pool: AgentPool) -> tuple[tuple[str, ...], np.ndarray]:
    """Unit ids and the agent column index backing each unit.

    Units of one agent are consecutive and agents keep their pool order, so
    the lowest-index tie-break of the solver prefers earlier agents and then
    earlier units.
    """
    unit_ids: list[str] = []
    unit_agent: list[int] = []
    for a, (agent, z) in enumerate(zip(pool.agents, pool.capacity)):
        for k in range(z):
            unit_ids.append(f"{agent}::{k}")
            unit_agent.append(a)
    return tuple(unit_ids), np.asarray(unit_agent, dtype=np.int64)


def _expanded_values(costs: CostMatrix, pool: AgentPool) -> tuple[np.ndarray, tuple[str, ...], np.ndarray]:
    if costs.agents != pool.agents:
        raise ValidationError("cost matrix agents do not match pool agents")
    unit_ids, unit_agent = expand_capacity(pool)
    if len(costs.items) > len(unit_ids):
        raise InfeasibleError(
            f"{len(costs.items)} items exceed total capacity {len(unit_ids)}"
        )
    return np.ascontiguousarray(costs.values[:, unit_agent]), unit_ids, unit_agent


def solve_dense(values: np.ndarray) -> tuple[np.ndarray, float]:
    """LAP on a raw rows<=cols matrix; returns (column per row, total)."""
    arr = _as_cost_array(values)
    n, m = arr.shape
    if n > m:
        raise InfeasibleError(f"{n} rows exceed {m} columns")
    col_of_row = np.empty(n, np.int64)
    row_of_col = np.empty(m, np.int64)
    v = np.empty(m)
    total = _kernels.jv_solve(np.ascontiguousarray(arr), col_of_row, row_of_col, v)
    return col_of_row, float(total)


def solve(costs: CostMatrix, pool: AgentPool) -> Assignment:
    """Minimum-total assignment of all items onto the pool's capacity units."""
    values, unit_ids, unit_agent = _expanded_values(costs, pool)
    col_of_row, total = solve_dense(values)
    return Assignment(
        items=costs.items,
        agents=tuple(pool.agents[unit_agent[c]] for c in col_of_row),
        units=tuple(unit_ids[c] for c in col_of_row),
        total=total,
    )


def _perm_array(n_units: int, n_items: int) -> np.ndarray:
    key = (n_units, n_items)
    cached = _PERM_CACHE.get(key)
    if cached is None:
        cached = np.array(list(permutations(range(n_units), n_items)), dtype=np.int64)
        _PERM_CACHE[key] = cached
    return cached


def brute_force_total(values: np.ndarray) -> float:
    """Reference optimum by full enumeration of unit permutations."""
    arr = _as_cost_array(values)
    n, m = arr.shape
    if n > m:
        raise InfeasibleError(f"{n} rows exceed {m} columns")
    if n == 0:
        return 0.0
    count = 1
    for k in range(m, m - n, -1):
        count *= k
    if count > _BRUTE_FORCE_LIMIT:
        raise ValidationError(f"{count} permutations exceed brute-force limit")
    perms = _perm_array(m, n)
    totals = arr[np.arange(n)[None, :], perms].sum(axis=1)
    return float(totals.min())


def brute_force_solve(costs: CostMatrix, pool: AgentPool) -> Assignment:
    """Enumeration counterpart of solve(); first minimum in lexicographic
    unit order wins, mirroring the solver's lowest-index preference."""
    values, unit_ids, unit_agent = _expanded_values(costs, pool)
    n, m = values.shape
    if n == 0:
        return Assignment((), (), (), 0.0)
    count = 1
    for k in range(m, m - n, -1):
        count *= k
    if count > _BRUTE_FORCE_LIMIT:
        raise ValidationError(f"{count} permutations exceed brute-force limit")
    perms = _perm_array(m, n)
    totals = values[np.arange(n)[None, :], perms].sum(axis=1)
    best = perms[int(totals.argmin())]
    return Assignment(
        items=costs.items,
        agents=tuple(pool.agents[unit_agent[c]] for c in best),
        units=tuple(unit_ids[c] for c in best),
        total=float(totals.min()),
    )
