"""Sequential assignment mechanisms.

Arrivals are revealed one at a time. A mechanism sees the current arrival's
cost vector, the residual capacity, and a historical pool standing in for the
unknown remainder of the cohort, and must irrevocably pick one agent. The
simulation-based rules replace the unknown future with draws from the pool
(or, in exhaustive mode, with the full enumeration of pool futures) and solve
one static LAP per draw via the shared kernel.

Tie-breaks are deterministic everywhere: score ties go to the agent earliest
in pool order, and the vote-based rule breaks modal ties by the lower mean
assignment total over the winning draws first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InfeasibleError, ValidationError
from .lap import AgentPool, expand_capacity, solve
from .stochastic import (
    DrawStream,
    HistoricalPool,
    QuantileTable,
    enumerate_index_matrix,
    standardize,
)

MECHANISM_KINDS = (
    "greedy",
    "min_risk",
    "approx_min_risk",
    "weighted_cq",
    "sequential_cq",
    "predicted",
)

_DEFAULT_DRAWS = {"min_risk": 1000, "approx_min_risk": 5000}
_SIMULATED_KINDS = ("min_risk", "approx_min_risk")


@dataclass(frozen=True)
class MechanismConfig:
    """How one mechanism is run.

    n_draws of None means the kind's default (1000 for min_risk, 5000 for
    approx_min_risk; the score-based rules use none). lam weights cost against
    quantile in weighted_cq; t is the shortlist length of sequential_cq.
    exhaustive replaces sampling with the exact enumeration of futures and is
    only meaningful for the simulation-based kinds.
    """

    kind: str
    n_draws: int | None = None
    lam: float = 0.2
    t: int = 6
    exhaustive: bool = False

    def __post_init__(self):
        if self.kind not in MECHANISM_KINDS:
            raise ValidationError(f"unknown mechanism kind {self.kind!r}")
        if self.n_draws is not None and self.n_draws < 1:
            raise ValidationError("n_draws must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError("lam must lie in [0, 1]")
        if self.t < 1:
            raise ValidationError("t must be at least 1")
        if self.exhaustive and self.kind not in _SIMULATED_KINDS:
            raise ValidationError("exhaustive mode applies to simulation-based mechanisms")

    @property
    def draws(self) -> int:
        if self.n_draws is not None:
            return self.n_draws
        return _DEFAULT_DRAWS.get(self.kind, 0)


@dataclass(frozen=True)
class DynamicState:
    """Where a sequential episode currently stands."""

    pool: AgentPool
    history: HistoricalPool
    horizon: int
    seen: int = 0

    def __post_init__(self):
        if self.pool.agents != self.history.agents:
            raise ValidationError("capacity pool and historical pool agents differ")
        if self.horizon < 0 or not 0 <= self.seen <= self.horizon:
            raise ValidationError("seen must lie in [0, horizon]")

    @property
    def agents(self) -> tuple[str, ...]:
        return self.pool.agents

    @property
    def remaining_items(self) -> int:
        """Arrivals not yet committed, counting the one being decided."""
        return self.horizon - self.seen

    def advance(self, agent: str) -> "DynamicState":
        """State after committing the current arrival to `agent`."""
        if self.remaining_items < 1:
            raise ValidationError("horizon exhausted")
        return DynamicState(self.pool.spend(agent), self.history, self.horizon, self.seen + 1)


@dataclass(frozen=True)
class Recommendation:
    chosen_agent: str
    per_agent_score: dict[str, float] = field(compare=False)
    expected_loss_estimate: float | None
    draws_used: int


def _checked_vector(state: DynamicState, vector) -> np.ndarray:
    vec = np.asarray(vector, dtype=np.float64)
    if vec.shape != (len(state.agents),):
        raise ValidationError(
            f"cost vector length {vec.shape} does not match {len(state.agents)} agents"
        )
    if not np.isfinite(vec).all():
        raise ValidationError("cost vector contains non-finite entries")
    if state.remaining_items < 1:
        raise ValidationError("no arrivals left in this episode")
    if state.remaining_items > state.pool.total_capacity:
        raise InfeasibleError(
            f"{state.remaining_items} remaining arrivals exceed capacity {state.pool.total_capacity}"
        )
    return vec


def _available(state: DynamicState) -> np.ndarray:
    return np.flatnonzero(np.asarray(state.pool.capacity) > 0)


def _future_indices(state: DynamicState, config: MechanismConfig, master_seed: int) -> np.ndarray:
    n_future = state.remaining_items - 1
    if config.exhaustive:
        return enumerate_index_matrix(state.history.size, n_future)
    stream = DrawStream(master_seed, state.history.size, config.draws)
    return stream.index_matrix(state.seen, n_future)


def estimate_expected_loss(sigma: np.ndarray, chosen: int) -> float:
    """Mean regret of committing to `chosen` now versus the per-draw best.

    The column minimum of sigma in draw r is exactly the oracle total for
    draw r (assigning the arrival optimally alongside its simulated future),
    so no additional solve is needed."""
    return float(sigma[:, chosen].mean() - sigma.min(axis=1).mean())


def assign_greedy(state: DynamicState, vector) -> Recommendation:
    """Myopic rule: cheapest available agent, ignoring the future."""
    vec = _checked_vector(state, vector)
    avail = _available(state)
    costs = vec[avail]
    best = int(avail[int(np.argmin(costs))])
    return Recommendation(
        chosen_agent=state.agents[best],
        per_agent_score={state.agents[a]: float(vec[a]) for a in avail},
        expected_loss_estimate=None,
        draws_used=0,
    )


def _no_fixed(state: DynamicState) -> np.ndarray:
    return np.empty((0, len(state.agents)))


def minrisk_sigma_with_futures(
    state: DynamicState, vec: np.ndarray, idx: np.ndarray, fixed: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional totals sigma[r, a] for every draw r and available agent a.

    sigma[r, a] = arrival cost at a + optimal completion of the future (the
    observed rows in `fixed` plus draw r's simulated rows) on the capacity
    left after spending one unit of a.
    """
    avail = _available(state)
    reduced = np.empty((len(avail), state.pool.total_capacity - 1), dtype=np.int64)
    for k, a in enumerate(avail):
        reduced[k] = expand_capacity(state.pool.spend(state.agents[a]))[1]
    sigma = _kernels.minrisk_sigma_scan(state.history.values, idx, fixed, reduced, vec[avail])
    return sigma, avail


def minrisk_sigma(
    state: DynamicState, vector, config: MechanismConfig, master_seed: int
) -> tuple[np.ndarray, np.ndarray]:
    vec = _checked_vector(state, vector)
    idx = _future_indices(state, config, master_seed)
    return minrisk_sigma_with_futures(state, vec, idx, _no_fixed(state))


def minrisk_recommendation(
    state: DynamicState, sigma: np.ndarray, avail: np.ndarray
) -> Recommendation:
    sigma_bar = sigma.mean(axis=0)
    best_pos = int(np.argmin(sigma_bar))
    return Recommendation(
        chosen_agent=state.agents[int(avail[best_pos])],
        per_agent_score={
            state.agents[int(a)]: float(sigma_bar[k]) for k, a in enumerate(avail)
        },
        expected_loss_estimate=estimate_expected_loss(sigma, best_pos),
        draws_used=sigma.shape[0],
    )


def assign_min_risk(
    state: DynamicState, vector, config: MechanismConfig, master_seed: int
) -> Recommendation:
    """Exact simulation rule: minimize the mean conditional total.

    For each draw the rule prices every available agent by "what the whole
    remaining episode costs if the arrival goes there", then commits to the
    agent with the lowest mean price. The expected-loss estimate is that
    mean price minus the mean per-draw oracle total."""
    sigma, avail = minrisk_sigma(state, vector, config, master_seed)
    return minrisk_recommendation(state, sigma, avail)


def vote_recommendation(
    state: DynamicState, vec: np.ndarray, idx: np.ndarray, fixed: np.ndarray
) -> Recommendation:
    """Shared core of the vote rule: one joint LAP per draw (arrival row plus
    fixed and simulated future rows over all residual units); the agent
    receiving the arrival most often wins. Modal ties go to the agent whose
    winning draws had the lower mean assignment total, then to pool order."""
    _, unit_agent = expand_capacity(state.pool)
    winner, totals = _kernels.approx_vote_scan(state.history.values, idx, fixed, unit_agent, vec)
    counts = np.bincount(winner, minlength=len(state.agents))
    top = int(counts.max())
    tied = np.flatnonzero(counts == top)
    if len(tied) > 1:
        means = np.array([totals[winner == a].mean() for a in tied])
        tied = tied[np.flatnonzero(means == means.min())]
    best = int(tied[0])
    n_draws = idx.shape[0]
    with_units = np.flatnonzero(np.asarray(state.pool.capacity) > 0)
    return Recommendation(
        chosen_agent=state.agents[best],
        per_agent_score={state.agents[int(a)]: float(counts[a]) / n_draws for a in with_units},
        expected_loss_estimate=None,
        draws_used=n_draws,
    )


def assign_approx_min_risk(
    state: DynamicState, vector, config: MechanismConfig, master_seed: int
) -> Recommendation:
    """Vote rule over simulated futures only (no observed lookahead)."""
    vec = _checked_vector(state, vector)
    idx = _future_indices(state, config, master_seed)
    return vote_recommendation(state, vec, idx, _no_fixed(state))


def assign_weighted_cq(
    state: DynamicState, vector, config: MechanismConfig, table: QuantileTable | None = None
) -> Recommendation:
    """Score rule: lam * standardized cost + (1 - lam) * pool quantile, over
    the available agents; lowest score wins.

    With nothing left after this arrival the quantile signal carries no
    information, so the rule collapses to the myopic choice."""
    if state.remaining_items == 1:
        return assign_greedy(state, vector)
    vec = _checked_vector(state, vector)
    avail = _available(state)
    table = table if table is not None else QuantileTable(state.history)
    s = standardize(vec[avail])
    q = table.quantile_vector(vec)[avail]
    f = config.lam * s + (1.0 - config.lam) * q
    best = int(avail[int(np.argmin(f))])
    return Recommendation(
        chosen_agent=state.agents[best],
        per_agent_score={state.agents[int(a)]: float(f[k]) for k, a in enumerate(avail)},
        expected_loss_estimate=None,
        draws_used=0,
    )


def assign_sequential_cq(
    state: DynamicState, vector, config: MechanismConfig, table: QuantileTable | None = None
) -> Recommendation:
    """Shortlist rule: take the t cheapest available agents, then pick the one
    whose cost sits lowest in its own historical distribution.

    Collapses to the myopic choice on the final arrival, like weighted_cq."""
    if state.remaining_items == 1:
        return assign_greedy(state, vector)
    vec = _checked_vector(state, vector)
    avail = _available(state)
    table = table if table is not None else QuantileTable(state.history)
    costs = vec[avail]
    shortlist = avail[np.lexsort((avail, costs))[: config.t]]
    q = table.quantile_vector(vec)[shortlist]
    pick = shortlist[np.lexsort((shortlist, vec[shortlist], q))[0]]
    return Recommendation(
        chosen_agent=state.agents[int(pick)],
        per_agent_score={state.agents[int(a)]: float(q[k]) for k, a in enumerate(shortlist)},
        expected_loss_estimate=None,
        draws_used=0,
    )


static_optimal_assign = solve
"""Hindsight optimum over a full cohort; alias of the static LAP solve."""


def recommend(
    state: DynamicState,
    vector,
    config: MechanismConfig,
    master_seed: int = 0,
    model=None,
    table: QuantileTable | None = None,
) -> Recommendation:
    """Run the configured mechanism on one arrival."""
    if config.kind == "greedy":
        return assign_greedy(state, vector)
    if config.kind == "min_risk":
        return assign_min_risk(state, vector, config, master_seed)
    if config.kind == "approx_min_risk":
        return assign_approx_min_risk(state, vector, config, master_seed)
    if config.kind == "weighted_cq":
        return assign_weighted_cq(state, vector, config, table)
    if config.kind == "sequential_cq":
        return assign_sequential_cq(state, vector, config, table)
    if config.kind == "predicted":
        if model is None:
            raise ValidationError("predicted mechanism needs a trained model")
        from .predictor import assign_predicted

        vec = _checked_vector(state, vector)
        table = table if table is not None else QuantileTable(state.history)
        return assign_predicted(state, vec, table.quantile_vector(vec), model)
    raise ValidationError(f"unknown mechanism kind {config.kind!r}")
