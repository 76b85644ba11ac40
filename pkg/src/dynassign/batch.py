"""Joint assignment of arrival blocks.

A batch is a block of arrivals revealed together but committed in arrival
order. The exact rule enumerates every feasible joint assignment of the block
(tuples differing only in which identical capacity unit of an agent is used
are collapsed) and prices each tuple by its block cost plus the optimal
completion of the post-batch future per draw; completions depend only on the
multiset of agents the block consumes, so each multiset is solved once and
reused. The approximate rule decides the block one item at a time with the
configured inner mechanism, letting each item see the later block items as
observed future rows on top of its simulated draws.

Either way a batch of one is the plain per-arrival mechanism, draw for draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import _kernels
from .errors import InfeasibleError, ValidationError
from .lap import expand_capacity
from .mechanisms import (
    DynamicState,
    MechanismConfig,
    Recommendation,
    _checked_vector,
    estimate_expected_loss,
    vote_recommendation,
    minrisk_recommendation,
    minrisk_sigma_with_futures,
)
from .stochastic import DrawStream, enumerate_index_matrix

MAX_EXACT_BATCH = 4
MAX_EXACT_UNITS = 8


@dataclass(frozen=True)
class Batch:
    """Cost vectors of a block of simultaneous arrivals (rows in arrival
    order) plus the block's position in the cohort's batch sequence."""

    vectors: np.ndarray
    group: int = 0

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValidationError(f"batch must be a nonempty 2-d block, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("batch contains non-finite entries")
        object.__setattr__(self, "vectors", arr)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


def _check_batch(state: DynamicState, batch: Batch) -> None:
    if batch.vectors.shape[1] != len(state.agents):
        raise ValidationError(
            f"batch width {batch.vectors.shape[1]} does not match {len(state.agents)} agents"
        )
    if batch.size > state.remaining_items:
        raise ValidationError(
            f"batch of {batch.size} exceeds {state.remaining_items} remaining arrivals"
        )
    if state.remaining_items > state.pool.total_capacity:
        raise InfeasibleError(
            f"{state.remaining_items} remaining arrivals exceed capacity {state.pool.total_capacity}"
        )


def _post_batch_indices(
    state: DynamicState, batch_size: int, config: MechanismConfig, master_seed: int, seen: int
) -> np.ndarray:
    n_post = state.remaining_items - batch_size
    if config.exhaustive:
        return enumerate_index_matrix(state.history.size, n_post)
    return DrawStream(master_seed, state.history.size, config.draws).index_matrix(seen, n_post)


def assign_batch_exact(
    state: DynamicState, batch: Batch, config: MechanismConfig, master_seed: int
) -> list[Recommendation]:
    """Enumerate joint assignments of the block; lowest mean conditional
    total wins, ties going to the lexicographically smallest agent tuple.

    Returns one Recommendation per block item: each carries the item's
    marginal scores (best achievable mean total when that item is pinned to
    an agent) and the block's joint expected-loss estimate.
    """
    _check_batch(state, batch)
    if batch.size > MAX_EXACT_BATCH:
        raise ValidationError(f"exact batch limited to {MAX_EXACT_BATCH} items")
    if state.pool.total_capacity > MAX_EXACT_UNITS:
        raise ValidationError(f"exact batch limited to {MAX_EXACT_UNITS} capacity units")
    if batch.size == 1:
        vec = _checked_vector(state, batch.vectors[0])
        idx = _post_batch_indices(state, 1, config, master_seed, state.seen)
        sigma, avail = minrisk_sigma_with_futures(
            state, vec, idx, np.empty((0, len(state.agents)))
        )
        return [minrisk_recommendation(state, sigma, avail)]
    idx = _post_batch_indices(state, batch.size, config, master_seed, state.seen)
    fixed = np.empty((0, len(state.agents)))
    caps = np.asarray(state.pool.capacity)
    avail = [int(a) for a in np.flatnonzero(caps > 0)]

    psi_cache: dict[tuple[int, ...], np.ndarray] = {}

    def _psi(multiset: tuple[int, ...]) -> np.ndarray:
        got = psi_cache.get(multiset)
        if got is None:
            pool = state.pool
            for a in multiset:
                pool = pool.spend(state.agents[a])
            _, unit_agent = expand_capacity(pool)
            got = _kernels.lap_totals_scan(state.history.values, idx, fixed, unit_agent)
            psi_cache[multiset] = got
        return got

    tuples: list[tuple[int, ...]] = []
    columns: list[np.ndarray] = []
    for tup in product(avail, repeat=batch.size):
        counts = np.bincount(tup, minlength=len(caps))
        if (counts > caps).any():
            continue
        block_cost = float(batch.vectors[np.arange(batch.size), list(tup)].sum())
        tuples.append(tup)
        columns.append(block_cost + _psi(tuple(sorted(tup))))
    if not tuples:
        raise InfeasibleError("no feasible joint assignment for the batch")
    conditional = np.column_stack(columns)
    score = conditional.mean(axis=0)
    best = int(np.argmin(score))
    expected_loss = estimate_expected_loss(conditional, best)
    n_draws = idx.shape[0]
    out = []
    for d in range(batch.size):
        marginal: dict[str, float] = {}
        for t, tup in enumerate(tuples):
            agent = state.agents[tup[d]]
            s = float(score[t])
            if agent not in marginal or s < marginal[agent]:
                marginal[agent] = s
        out.append(
            Recommendation(
                chosen_agent=state.agents[tuples[best][d]],
                per_agent_score=marginal,
                expected_loss_estimate=expected_loss,
                draws_used=n_draws,
            )
        )
    return out


def assign_batch_approx(
    state: DynamicState,
    batch: Batch,
    config: MechanismConfig,
    master_seed: int,
) -> list[Recommendation]:
    """Decide the block one item at a time with the inner mechanism named by
    config.kind (min_risk or approx_min_risk), treating the later block items
    as already-observed future rows ahead of each item's simulated draws."""
    _check_batch(state, batch)
    if config.kind not in ("min_risk", "approx_min_risk"):
        raise ValidationError("batch inner mechanism must be min_risk or approx_min_risk")
    out: list[Recommendation] = []
    current = state
    for k in range(batch.size):
        vec = _checked_vector(current, batch.vectors[k])
        fixed = np.ascontiguousarray(batch.vectors[k + 1 :])
        idx = _post_batch_indices(state, batch.size, config, master_seed, current.seen)
        if config.kind == "min_risk":
            sigma, avail = minrisk_sigma_with_futures(current, vec, idx, fixed)
            rec = minrisk_recommendation(current, sigma, avail)
        else:
            rec = vote_recommendation(current, vec, idx, fixed)
        out.append(rec)
        current = current.advance(rec.chosen_agent)
    return out
