"""Synthetic stationary instances for experiments and the acceptance suite.

Outcome scores mix an agent effect, an item effect, an item-agent interaction
through latent traits, and noise:

    score[i, j] = sigmoid(alpha_j + beta_i + interaction * <x_i, w_j> + noise_sd * eps_ij)

Costs are 1 - score. The interaction term is what makes assignment matter:
with additive effects alone every feasible matching has the same total. The
historical pool and the arrival cohort are drawn from the same process, which
is the stationarity the simulation mechanisms rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .lap import AgentPool
from .stochastic import HistoricalPool


@dataclass(frozen=True)
class SyntheticSpec:
    n_agents: int
    n_items: int
    pool_size: int
    agent_sd: float = 0.6
    item_sd: float = 0.8
    interaction: float = 1.5
    noise_sd: float = 0.25
    n_traits: int = 3

    def __post_init__(self):
        if min(self.n_agents, self.n_items, self.pool_size, self.n_traits) < 1:
            raise ValidationError("synthetic dimensions must be positive")


@dataclass(frozen=True)
class SyntheticInstance:
    agents: tuple[str, ...]
    capacity: tuple[int, ...]
    pool: HistoricalPool
    cohort_costs: np.ndarray
    cohort_scores: np.ndarray


def even_capacity(n_items: int, n_agents: int) -> tuple[int, ...]:
    """Capacities summing exactly to n_items, as even as possible; earlier
    agents absorb the remainder."""
    base, extra = divmod(n_items, n_agents)
    return tuple(base + (1 if j < extra else 0) for j in range(n_agents))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _score_block(rng, spec: SyntheticSpec, count: int, alpha, w) -> np.ndarray:
    beta = rng.normal(0.0, spec.item_sd, size=count)
    traits = rng.normal(size=(count, spec.n_traits))
    eps = rng.normal(size=(count, spec.n_agents))
    logit = alpha[None, :] + beta[:, None] + spec.interaction * traits @ w.T + spec.noise_sd * eps
    return _sigmoid(logit)


def generate_instance(spec: SyntheticSpec, seed: int) -> SyntheticInstance:
    """Pool and cohort from one draw of the generator; deterministic in seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    alpha = rng.normal(0.0, spec.agent_sd, size=spec.n_agents)
    w = rng.normal(size=(spec.n_agents, spec.n_traits))
    agents = tuple(f"a{j}" for j in range(spec.n_agents))
    pool_scores = _score_block(rng, spec, spec.pool_size, alpha, w)
    cohort_scores = _score_block(rng, spec, spec.n_items, alpha, w)
    return SyntheticInstance(
        agents=agents,
        capacity=even_capacity(spec.n_items, spec.n_agents),
        pool=HistoricalPool(agents, 1.0 - pool_scores),
        cohort_costs=1.0 - cohort_scores,
        cohort_scores=cohort_scores,
    )


def agent_pool(instance: SyntheticInstance) -> AgentPool:
    return AgentPool(instance.agents, instance.capacity)
