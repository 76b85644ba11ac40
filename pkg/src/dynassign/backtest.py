"""Cohort replay: every configured mechanism against the same arrivals.

A backtest fixes the arrival order, the historical pool, and the real
capacities, then lets each mechanism decide the cohort one arrival at a time
(or one batch at a time where batch ids group arrivals). Two baselines are
always run: the hindsight optimum (static LAP over the whole cohort) and the
myopic rule. The result carries per-item traces, summary rows for plotting,
and — when an exact min-risk run is present — the loss accounting that
reconciles the min-risk score with the optimum.

Replays are deterministic: each config gets its own seed namespace derived
from the run seed, so adding or reordering configs never perturbs another
mechanism's draws.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .batch import Batch, assign_batch_approx
from .dataio import canonical_json
from .errors import InfeasibleError, ValidationError
from .lap import AgentPool, CostMatrix, solve
from .mechanisms import (
    DynamicState,
    MechanismConfig,
    Recommendation,
    recommend,
)
from .stochastic import HistoricalPool, QuantileTable, mechanism_seed

RESULT_SCHEMA = "v1"
PLOT_HEADER = ("mechanism", "parameter", "mean_score", "ci_half_width")
_SIMULATED = ("min_risk", "approx_min_risk")
_BASELINE_NAMES = ("static_optimal", "greedy")
_DEFAULT_ENSEMBLE_MEMBERS = 10


@dataclass(frozen=True)
class Cohort:
    """Arrival sequence: item ids, their cost vectors, optional batch ids.

    Costs are already in minimization direction (ingestion converts scores).
    Consecutive equal batch ids form a simultaneous block; everything else is
    strictly sequential.
    """

    items: tuple[str, ...]
    agents: tuple[str, ...]
    costs: np.ndarray
    batch_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        arr = np.asarray(self.costs, dtype=np.float64)
        object.__setattr__(self, "costs", arr)
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "agents", tuple(self.agents))
        if self.batch_ids is not None:
            object.__setattr__(self, "batch_ids", tuple(self.batch_ids))
        if arr.ndim != 2 or arr.shape != (len(self.items), len(self.agents)):
            raise ValidationError(
                f"cost block {arr.shape} does not match {len(self.items)} items x "
                f"{len(self.agents)} agents"
            )
        if not np.isfinite(arr).all():
            raise ValidationError("cohort contains non-finite costs")
        if self.batch_ids is not None and len(self.batch_ids) != len(self.items):
            raise ValidationError("batch_ids length does not match items")

    @property
    def size(self) -> int:
        return len(self.items)

    def blocks(self) -> list[tuple[int, int]]:
        """Half-open [start, end) ranges of simultaneous arrivals, in order."""
        if self.batch_ids is None:
            return [(i, i + 1) for i in range(self.size)]
        out: list[tuple[int, int]] = []
        start = 0
        for i in range(1, self.size):
            if self.batch_ids[i] != self.batch_ids[i - 1]:
                out.append((start, i))
                start = i
        if self.size:
            out.append((start, self.size))
        return out


@dataclass(frozen=True)
class MechanismRun:
    """One mechanism's pass over the cohort.

    runtime_s is wall-clock and deliberately excluded from serialized
    documents so identical seeds produce identical bytes.
    """

    name: str
    kind: str
    parameter: str
    chosen: tuple[str, ...]
    total_cost: float
    expected_losses: tuple[float | None, ...]
    trace: tuple[dict, ...] = field(compare=False)
    runtime_s: float = field(compare=False, default=0.0)

    @property
    def mean_score(self) -> float:
        n = len(self.chosen)
        return 1.0 - self.total_cost / n if n else 0.0

    @property
    def total_expected_loss(self) -> float | None:
        if any(v is None for v in self.expected_losses):
            return None
        return float(sum(self.expected_losses))

    def to_document(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "parameter": self.parameter,
            "chosen": list(self.chosen),
            "total_cost": self.total_cost,
            "mean_score": self.mean_score,
            "total_expected_loss": self.total_expected_loss,
        }


@dataclass(frozen=True)
class BacktestResult:
    cohort: Cohort
    agent_pool: AgentPool
    run_seed: int
    optimal: MechanismRun
    greedy: MechanismRun
    runs: tuple[MechanismRun, ...]

    def run(self, name: str) -> MechanismRun:
        for r in (self.optimal, self.greedy, *self.runs):
            if r.name == name:
                return r
        raise KeyError(name)

    def all_runs(self) -> tuple[MechanismRun, ...]:
        return (self.optimal, self.greedy, *self.runs)

    def to_document(self) -> dict:
        doc = {
            "schema": RESULT_SCHEMA,
            "seed": self.run_seed,
            "agents": list(self.agent_pool.agents),
            "capacity": list(self.agent_pool.capacity),
            "items": list(self.cohort.items),
            "batch_ids": list(self.cohort.batch_ids) if self.cohort.batch_ids else None,
            "baselines": {
                "static_optimal": self.optimal.to_document(),
                "greedy": self.greedy.to_document(),
            },
            "runs": [r.to_document() for r in self.runs],
        }
        if any(r.kind == "min_risk" for r in self.runs):
            doc["loss_accounting"] = loss_accounting_report(self)
        return doc

    def to_json(self) -> str:
        return canonical_json(self.to_document())

    def trace_events(self):
        for run in self.all_runs():
            yield from run.trace

    def trace_jsonl(self) -> str:
        return "".join(canonical_json(event) for event in self.trace_events())


def config_parameter(config: MechanismConfig) -> str:
    """Human-readable knob for plot tables: the one parameter that varies."""
    if config.kind in _SIMULATED:
        return "exhaustive" if config.exhaustive else f"m={config.draws}"
    if config.kind == "weighted_cq":
        return f"lam={config.lam:g}"
    if config.kind == "sequential_cq":
        return f"t={config.t}"
    if config.kind == "predicted":
        return f"members={config.n_draws}" if config.n_draws else ""
    return ""


def _unique_names(configs) -> list[str]:
    names: list[str] = []
    for config in configs:
        base = config.kind
        name = base
        k = 2
        while name in names or name in _BASELINE_NAMES:
            name = f"{base}_{k}"
            k += 1
        names.append(name)
    return names


def _trace_event(name, ordinal, cohort, rec: Recommendation, pool: AgentPool) -> dict:
    agent_idx = cohort.agents.index(rec.chosen_agent)
    cost = float(cohort.costs[ordinal, agent_idx])
    event = {
        "mechanism": name,
        "ordinal": ordinal,
        "item": cohort.items[ordinal],
        "agent": rec.chosen_agent,
        "cost": cost,
        "score": 1.0 - cost,
        "per_agent_score": {a: float(s) for a, s in sorted(rec.per_agent_score.items())},
        "expected_loss": rec.expected_loss_estimate,
        "draws": rec.draws_used,
        "remaining_capacity": {a: int(z) for a, z in zip(pool.agents, pool.capacity)},
    }
    if cohort.batch_ids is not None:
        event["batch_id"] = cohort.batch_ids[ordinal]
    return event


def _finish_run(name, kind, parameter, cohort, recs, started) -> MechanismRun:
    chosen = tuple(r.chosen_agent for r in recs)
    total = float(
        sum(cohort.costs[i, cohort.agents.index(a)] for i, a in enumerate(chosen))
    )
    return MechanismRun(
        name=name,
        kind=kind,
        parameter=parameter,
        chosen=chosen,
        total_cost=total,
        expected_losses=tuple(r.expected_loss_estimate for r in recs),
        trace=(),
        runtime_s=time.perf_counter() - started,
    )


def _with_trace(run: MechanismRun, cohort, recs, agent_pool) -> MechanismRun:
    pool = agent_pool
    events = []
    for i, rec in enumerate(recs):
        pool = pool.spend(rec.chosen_agent)
        events.append(_trace_event(run.name, i, cohort, rec, pool))
    return MechanismRun(
        name=run.name,
        kind=run.kind,
        parameter=run.parameter,
        chosen=run.chosen,
        total_cost=run.total_cost,
        expected_losses=run.expected_losses,
        trace=tuple(events),
        runtime_s=run.runtime_s,
    )


def _replay(cohort, history, agent_pool, config, seed, table, model) -> list[Recommendation]:
    state = DynamicState(agent_pool, history, horizon=cohort.size)
    recs: list[Recommendation] = []
    for start, end in cohort.blocks():
        if end - start > 1 and config.kind in _SIMULATED:
            group = cohort.batch_ids[start] if cohort.batch_ids is not None else 0
            batch = Batch(cohort.costs[start:end], group=group)
            block = assign_batch_approx(state, batch, config, seed)
            for rec in block:
                state = state.advance(rec.chosen_agent)
            recs.extend(block)
        else:
            for i in range(start, end):
                rec = recommend(
                    state, cohort.costs[i], config, master_seed=seed, model=model, table=table
                )
                state = state.advance(rec.chosen_agent)
                recs.append(rec)
    return recs


def _optimal_run(cohort, agent_pool) -> MechanismRun:
    started = time.perf_counter()
    assignment = solve(CostMatrix(cohort.items, cohort.agents, cohort.costs), agent_pool)
    recs = [
        Recommendation(
            chosen_agent=agent,
            per_agent_score={},
            expected_loss_estimate=None,
            draws_used=0,
        )
        for agent in assignment.agents
    ]
    run = _finish_run("static_optimal", "static_optimal", "", cohort, recs, started)
    return _with_trace(run, cohort, recs, agent_pool)


def _train_for(config, history, agent_pool, horizon, seed):
    from .predictor import PredictorConfig, train_ensemble

    members = config.n_draws or _DEFAULT_ENSEMBLE_MEMBERS
    return train_ensemble(history, agent_pool, horizon, members, PredictorConfig(), seed)


def run_backtest(
    cohort: Cohort,
    pool: HistoricalPool,
    agent_pool: AgentPool,
    configs,
    run_seed: int = 0,
    models: dict[int, object] | None = None,
) -> BacktestResult:
    """Replay the cohort under the baselines plus every config.

    models maps config index -> trained ensemble for "predicted" configs;
    missing entries are trained on the fly from the pool (n_draws members,
    default 10) under the config's own seed namespace.
    """
    if pool.agents != agent_pool.agents:
        raise ValidationError("historical pool agents do not match capacities")
    if cohort.agents != agent_pool.agents:
        raise ValidationError("cohort agents do not match capacities")
    if cohort.size > agent_pool.total_capacity:
        raise InfeasibleError(
            f"{cohort.size} arrivals exceed total capacity {agent_pool.total_capacity}"
        )
    configs = list(configs)
    names = _unique_names(configs)
    table = QuantileTable(pool)
    models = dict(models or {})

    optimal = _optimal_run(cohort, agent_pool)

    greedy_cfg = MechanismConfig("greedy")
    started = time.perf_counter()
    greedy_recs = _replay(cohort, pool, agent_pool, greedy_cfg, 0, table, None)
    greedy = _with_trace(
        _finish_run("greedy", "greedy", "", cohort, greedy_recs, started),
        cohort,
        greedy_recs,
        agent_pool,
    )

    runs = []
    for index, config in enumerate(configs):
        seed = mechanism_seed(run_seed, index)
        model = models.get(index)
        if config.kind == "predicted" and model is None:
            model = _train_for(config, pool, agent_pool, cohort.size, seed)
        started = time.perf_counter()
        recs = _replay(cohort, pool, agent_pool, config, seed, table, model)
        run = _finish_run(names[index], config.kind, config_parameter(config), cohort, recs, started)
        runs.append(_with_trace(run, cohort, recs, agent_pool))
    return BacktestResult(
        cohort=cohort,
        agent_pool=agent_pool,
        run_seed=run_seed,
        optimal=optimal,
        greedy=greedy,
        runs=tuple(runs),
    )


def loss_accounting_report(result: BacktestResult) -> dict:
    """Reconcile min-risk with the optimum on the mean-score scale.

    The identity behind it: the optimal total cost equals the min-risk total
    cost minus the accumulated expected-loss estimates, in expectation over
    stationary cohorts. Dividing by n and flipping sign moves both sides to
    mean outcome scores, so
        gap = optimal_mean - (minrisk_mean + mean_expected_loss)
    should be statistically indistinguishable from zero.
    """
    run = next((r for r in result.runs if r.kind == "min_risk"), None)
    if run is None:
        raise ValidationError("loss accounting needs a min_risk run among the configs")
    total_loss = run.total_expected_loss
    if total_loss is None:
        raise ValidationError("min_risk run is missing expected-loss estimates")
    n = result.cohort.size
    mean_loss = total_loss / n if n else 0.0
    optimal_mean = result.optimal.mean_score
    minrisk_mean = run.mean_score
    return {
        "optimal_mean_score": optimal_mean,
        "minrisk_mean_score": minrisk_mean,
        "mean_expected_loss": mean_loss,
        "gap": optimal_mean - (minrisk_mean + mean_loss),
    }


def _as_results(results) -> list[BacktestResult]:
    if isinstance(results, BacktestResult):
        return [results]
    out = list(results)
    if not out:
        raise ValidationError("no results to aggregate")
    first = tuple(r.name for r in out[0].runs)
    for res in out[1:]:
        if tuple(r.name for r in res.runs) != first:
            raise ValidationError("replications must share the same configs")
    return out


def plot_rows(results) -> list[tuple[str, str, float, float]]:
    """One row per configured mechanism: mean score across seed replications
    and a normal-theory 95% half-width (0 for a single replication).

    Baselines are not rows; figures draw them as reference lines."""
    reps = _as_results(results)
    rows = []
    for i, run in enumerate(reps[0].runs):
        scores = np.array([res.runs[i].mean_score for res in reps])
        half = 0.0
        if len(scores) > 1:
            half = float(1.96 * scores.std(ddof=1) / np.sqrt(len(scores)))
        rows.append((run.name, run.parameter, float(scores.mean()), half))
    return rows


def emit_plot_data(results, path) -> None:
    """Tidy mechanism/parameter/mean_score/ci_half_width table; floats are
    written with full round-trip precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PLOT_HEADER)
        for name, parameter, mean_score, half in plot_rows(results):
            w.writerow([name, parameter, f"{mean_score:.17g}", f"{half:.17g}"])


def read_plot_data(path) -> list[tuple[str, str, float, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != PLOT_HEADER:
        raise ValidationError(f"{path} is not a plot-data table")
    return [(r[0], r[1], float(r[2]), float(r[3])) for r in rows[1:]]
