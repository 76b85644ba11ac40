"""Historical pools, empirical quantiles, and reproducible future draws.

Randomness contract: every simulated future is derived from
``SeedSequence(master_seed, spawn_key=(item_index, draw))``, so draw r for
item i is the same no matter how many draws run, in what order, or on how
many threads. Mechanism-level master seeds are themselves derived from the
run seed via ``spawn_key=(mechanism_index,)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ValidationError

ENUMERATION_LIMIT = 1_000_000


@dataclass(frozen=True)
class HistoricalPool:
    """Past cost vectors (rows) over a fixed agent list (columns)."""

    agents: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != len(self.agents):
            raise ValidationError(
                f"pool shape {arr.shape} does not match {len(self.agents)} agents"
            )
        if arr.shape[0] == 0:
            raise ValidationError("historical pool is empty")
        if not np.isfinite(arr).all():
            raise ValidationError("historical pool contains non-finite entries")
        object.__setattr__(self, "values", arr)

    @property
    def size(self) -> int:
        return self.values.shape[0]


class QuantileTable:
    """Per-agent empirical CDF positions over a historical pool.

    quantile(cost, agent) = (# pool vectors with pool cost <= cost) / pool size.
    """

    def __init__(self, pool: HistoricalPool):
        self.agents = pool.agents
        self._sorted = np.sort(pool.values, axis=0)
        self._n = pool.size

    def quantile(self, cost: float, agent_index: int) -> float:
        col = self._sorted[:, agent_index]
        return float(np.searchsorted(col, cost, side="right")) / self._n

    def quantile_vector(self, costs: np.ndarray) -> np.ndarray:
        costs = np.asarray(costs, dtype=np.float64)
        out = np.empty(len(self.agents))
        for j in range(len(self.agents)):
            out[j] = np.searchsorted(self._sorted[:, j], costs[j], side="right")
        return out / self._n

    def quantile_matrix(self, costs: np.ndarray) -> np.ndarray:
        """Row-wise quantile_vector for a (k, n_agents) block."""
        costs = np.asarray(costs, dtype=np.float64)
        out = np.empty_like(costs)
        for j in range(len(self.agents)):
            out[:, j] = np.searchsorted(self._sorted[:, j], costs[:, j], side="right")
        return out / self._n


def mechanism_seed(run_seed: int, mechanism_index: int) -> int:
    """Independent master seed for one mechanism within a shared run."""
    ss = np.random.SeedSequence(run_seed, spawn_key=(mechanism_index,))
    return int(ss.generate_state(1, np.uint64)[0])


def draw_rng(master_seed: int, item_index: int, draw: int) -> np.random.Generator:
    ss = np.random.SeedSequence(master_seed, spawn_key=(item_index, draw))
    return np.random.Generator(np.random.PCG64(ss))


def draw_set(master_seed: int, item_index: int, draw: int, n_future: int, pool_size: int) -> np.ndarray:
    """Pool row indices for one simulated future (sampled with replacement)."""
    if n_future == 0:
        return np.empty(0, dtype=np.int64)
    rng = draw_rng(master_seed, item_index, draw)
    return rng.integers(0, pool_size, size=n_future, dtype=np.int64)


@dataclass(frozen=True)
class DrawStream:
    """All simulated futures for one mechanism run over a fixed pool."""

    master_seed: int
    pool_size: int
    n_draws: int

    def index_matrix(self, item_index: int, n_future: int) -> np.ndarray:
        """(n_draws, n_future) pool row indices; row r is draw r for the item."""
        out = np.empty((self.n_draws, n_future), dtype=np.int64)
        for r in range(self.n_draws):
            out[r] = draw_set(self.master_seed, item_index, r, n_future, self.pool_size)
        return out


def enumerate_index_matrix(pool_size: int, n_future: int) -> np.ndarray:
    """Every possible future as pool row indices, in lexicographic order.

    Used by the exhaustive evaluation mode, where the simulated expectation
    is replaced by the exact uniform average over pool_size ** n_future
    equally likely futures.
    """
    count = pool_size**n_future
    if count > ENUMERATION_LIMIT:
        raise ValidationError(
            f"{pool_size}**{n_future} futures exceed enumeration limit {ENUMERATION_LIMIT}"
        )
    if n_future == 0:
        return np.empty((1, 0), dtype=np.int64)
    return np.fromiter(
        (i for tup in product(range(pool_size), repeat=n_future) for i in tup),
        dtype=np.int64,
        count=count * n_future,
    ).reshape(count, n_future)


def standardize(values: np.ndarray, ddof: int = 1) -> np.ndarray:
    """Z-scores with the sample standard deviation; a flat vector maps to
    all zeros rather than dividing by zero."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return np.zeros_like(arr)
    sd = float(arr.std(ddof=ddof))
    # guard against roundoff sd (e.g. three copies of 0.7) as well as exact 0
    if sd <= 1e-12 * max(1.0, float(np.abs(arr).max())):
        return np.zeros_like(arr)
    return (arr - arr.mean()) / sd
