"""Prediction-based assignment: lasso-logistic ensembles over simulated optima.

Training simulates whole cohorts from the historical pool, solves each one as
a static LAP, and fits one-vs-rest l1-penalized logistic models per agent on
"which agent did this item get in the optimum". The finished ensemble scores
an arrival by the averaged per-agent probability and the mechanism assigns it
to the highest-scoring agent that still has capacity.

Feature layout (fixed and documented): costs by agent order, then quantiles
by agent order, then all pairwise products of those 2*n' base features with
i < j in lexicographic index order (no self-squares).

Binary serialization (version 1, little-endian, length-prefixed):

    magic b"LLEN" | u32 version | u32 n_agents | u32 n_members | u32 n_features
    per agent: u32 byte length + utf-8 agent id
    per member:
        f64 * n_features  feature means
        f64 * n_features  feature scales
        per agent:
            u8  1 if smoothed-constant fallback else 0
            f64 intercept (logit scale)
            f64 selected penalty (NaN for fallback)
            u32 n_weights + f64 * n_weights (0 for fallback)
            u32 n_cv + (f64 penalty, f64 loss) * n_cv
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ValidationError
from .lap import AgentPool, expand_capacity, solve_dense
from .mechanisms import DynamicState, Recommendation, _available, _checked_vector, assign_greedy
from .stochastic import HistoricalPool, QuantileTable

_MAGIC = b"LLEN"
_VERSION = 1


@dataclass(frozen=True)
class PredictorConfig:
    folds: int = 5
    grid_size: int = 50
    grid_ratio: float = 1e-4
    max_cycles: int = 1000
    tol: float = 1e-7

    def __post_init__(self):
        if self.folds < 2:
            raise ValidationError("folds must be at least 2")
        if self.grid_size < 1 or not 0 < self.grid_ratio <= 1:
            raise ValidationError("bad penalty grid shape")


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """One fitted one-vs-rest model (weights on the standardized scale)."""

    weights: np.ndarray
    intercept: float
    penalty: float
    constant: bool = False
    cv_penalties: np.ndarray = field(default_factory=lambda: np.empty(0))
    cv_losses: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def nonzero(self) -> int:
        return int(np.count_nonzero(self.weights))


@dataclass(frozen=True, eq=False)
class EnsembleMember:
    """All per-agent models fitted on one simulated cohort, with the
    standardization of that cohort's design matrix."""

    feature_mean: np.ndarray
    feature_scale: np.ndarray
    models: tuple[LogisticModel, ...]


@dataclass(frozen=True, eq=False)
class Ensemble:
    agents: tuple[str, ...]
    members: tuple[EnsembleMember, ...]

    @property
    def n_features(self) -> int:
        return len(self.members[0].feature_mean)

    def predict(self, cost_vector, quantile_vector) -> np.ndarray:
        """Averaged per-agent probability that the arrival is item-optimal."""
        x = feature_vector(cost_vector, quantile_vector)
        probs = np.zeros(len(self.agents))
        for member in self.members:
            z = (x - member.feature_mean) / member.feature_scale
            for j, model in enumerate(member.models):
                eta = model.intercept + float(z @ model.weights)
                probs[j] += _sigmoid_scalar(eta)
        return probs / len(self.members)


def _sigmoid_scalar(eta: float) -> float:
    if eta >= 0:
        return 1.0 / (1.0 + math.exp(-eta))
    ex = math.exp(eta)
    return ex / (1.0 + ex)


def feature_vector(cost_vector, quantile_vector) -> np.ndarray:
    """costs ++ quantiles ++ pairwise products of the combined base."""
    c = np.asarray(cost_vector, dtype=np.float64)
    q = np.asarray(quantile_vector, dtype=np.float64)
    if c.shape != q.shape or c.ndim != 1:
        raise ValidationError("cost and quantile vectors must share one length")
    base = np.concatenate([c, q])
    iu, ju = np.triu_indices(len(base), k=1)
    return np.concatenate([base, base[iu] * base[ju]])


def feature_names(agents: tuple[str, ...]) -> list[str]:
    base = [f"c[{a}]" for a in agents] + [f"q[{a}]" for a in agents]
    iu, ju = np.triu_indices(len(base), k=1)
    return base + [f"{base[i]}*{base[j]}" for i, j in zip(iu, ju)]


def feature_matrix(cost_rows: np.ndarray, quantile_rows: np.ndarray) -> np.ndarray:
    base = np.hstack([cost_rows, quantile_rows])
    iu, ju = np.triu_indices(base.shape[1], k=1)
    return np.hstack([base, base[:, iu] * base[:, ju]])


def standardize_features(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column z-scores; flat columns get scale 1 so they stay exactly zero."""
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale <= 1e-12 * np.maximum(1.0, np.abs(x).max(axis=0)), 1.0, scale)
    return (x - mean) / scale, mean, scale


def _constant_model(y: np.ndarray, n_features: int) -> LogisticModel:
    p = (float(y.sum()) + 1.0) / (len(y) + 2.0)
    return LogisticModel(
        weights=np.zeros(n_features),
        intercept=math.log(p / (1.0 - p)),
        penalty=math.nan,
        constant=True,
    )


def penalty_grid_for(z: np.ndarray, y: np.ndarray, size: int, ratio: float) -> np.ndarray:
    """Log-spaced penalties from lambda_max down to lambda_max * ratio.

    lambda_max is the smallest penalty at which the all-zero weight vector is
    a fixed point of the soft-thresholded update; the top of the grid carries
    a relative epsilon so that holds under float arithmetic too.
    """
    ybar = y.mean()
    lam_max = float(np.abs(z.T @ (y - ybar)).max()) / len(y)
    if lam_max <= 0.0:
        lam_max = 1e-3
    lam_max *= 1.0 + 1e-9
    if size == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, lam_max * ratio, size)


def _path_fit(z, y, grid, max_cycles, tol):
    """Warm-started CD down a descending penalty grid; yields per-penalty
    (intercept, weights snapshot)."""
    ybar = float(y.mean())
    intercept = math.log(ybar / (1.0 - ybar))
    w = np.zeros(z.shape[1])
    out = []
    for lam in grid:
        intercept, _ = _kernels.lasso_logistic_cd(z, y, float(lam), w, intercept, max_cycles, tol)
        out.append((intercept, w.copy()))
    return out


def _log_loss(eta: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))


def fit_lasso_logistic(
    features: np.ndarray,
    labels: np.ndarray,
    agent_index: int,
    folds: int = 5,
    penalty_grid: np.ndarray | None = None,
    *,
    min_positive_rate: float = 0.0,
    grid_size: int = 50,
    grid_ratio: float = 1e-4,
    max_cycles: int = 1000,
    tol: float = 1e-7,
) -> tuple[LogisticModel, np.ndarray, np.ndarray]:
    """One-vs-rest fit for one agent; returns (model, feature mean, scale).

    The penalty is chosen by k-fold CV (sample i sits in fold i % k) to
    minimize mean validation log-loss, ties to the larger penalty; the final
    model is refit on all rows down the grid to the selected value. Datasets
    that are single-class for the agent, or whose positive rate falls below
    min_positive_rate, yield the Laplace-smoothed constant fallback.
    """
    x = np.asarray(features, dtype=np.float64)
    y = (np.asarray(labels) == agent_index).astype(np.float64)
    z, mean, scale = standardize_features(x)
    n = len(y)
    rate = float(y.mean())
    if rate == 0.0 or rate == 1.0 or min(rate, 1.0 - rate) < min_positive_rate:
        return _constant_model(y, x.shape[1]), mean, scale
    if penalty_grid is None:
        grid = penalty_grid_for(z, y, grid_size, grid_ratio)
    else:
        grid = np.sort(np.asarray(penalty_grid, dtype=np.float64))[::-1]
    if len(grid) > 1:
        fold_of = np.arange(n) % folds
        losses = np.zeros(len(grid))
        for k in range(folds):
            val = fold_of == k
            if not val.any() or val.all():
                continue
            z_tr, y_tr = np.ascontiguousarray(z[~val]), y[~val]
            if y_tr.min() == y_tr.max():
                p = (float(y_tr.sum()) + 1.0) / (len(y_tr) + 2.0)
                eta = math.log(p / (1.0 - p)) * np.ones(int(val.sum()))
                losses += _log_loss(eta, y[val])
                continue
            path = _path_fit(z_tr, y_tr, grid, max_cycles, tol)
            z_val = z[val]
            for g, (b0, w) in enumerate(path):
                losses[g] += _log_loss(b0 + z_val @ w, y[val])
        best = int(np.argmin(losses))
        selected = grid[: best + 1]
    else:
        best = 0
        selected = grid
        losses = np.zeros(1)
    path = _path_fit(z, y, selected, max_cycles, tol)
    b0, w = path[-1]
    model = LogisticModel(
        weights=w,
        intercept=b0,
        penalty=float(grid[best]),
        cv_penalties=grid.copy(),
        cv_losses=losses / folds,
    )
    return model, mean, scale


def simulate_training_run(
    pool: HistoricalPool, agent_pool: AgentPool, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw an n-item cohort, solve it optimally, label items by their agent.

    Returns (feature matrix, agent-index labels)."""
    if n > agent_pool.total_capacity:
        raise ValidationError(f"cohort of {n} exceeds capacity {agent_pool.total_capacity}")
    idx = rng.integers(0, pool.size, size=n)
    vectors = pool.values[idx]
    table = QuantileTable(pool)
    features = feature_matrix(vectors, table.quantile_matrix(vectors))
    _, unit_agent = expand_capacity(agent_pool)
    cols, _ = solve_dense(np.ascontiguousarray(vectors[:, unit_agent]))
    labels = unit_agent[cols]
    return features, labels


def train_ensemble(
    pool: HistoricalPool,
    agent_pool: AgentPool,
    n: int,
    m: int,
    config: PredictorConfig = PredictorConfig(),
    master_seed: int = 0,
) -> Ensemble:
    """m independent simulate-and-fit members, deterministic in master_seed.

    An agent whose positive rate in a member's cohort is below 1/(10*n')
    gets that member's smoothed-constant fallback instead of a lasso fit."""
    if m < 1:
        raise ValidationError("ensemble needs at least one member")
    agents = agent_pool.agents
    min_rate = 1.0 / (10.0 * len(agents))
    members = []
    for r in range(m):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(r,))))
        features, labels = simulate_training_run(pool, agent_pool, n, rng)
        models = []
        mean = scale = None
        for j in range(len(agents)):
            model, mean, scale = fit_lasso_logistic(
                features,
                labels,
                j,
                folds=config.folds,
                min_positive_rate=min_rate,
                grid_size=config.grid_size,
                grid_ratio=config.grid_ratio,
                max_cycles=config.max_cycles,
                tol=config.tol,
            )
            models.append(model)
        members.append(EnsembleMember(mean, scale, tuple(models)))
    return Ensemble(agents=agents, members=tuple(members))


def predict(ensemble: Ensemble, cost_vector, quantile_vector) -> dict[str, float]:
    probs = ensemble.predict(cost_vector, quantile_vector)
    return {agent: float(p) for agent, p in zip(ensemble.agents, probs)}


def assign_predicted(
    state: DynamicState, cost_vector, quantile_vector, ensemble: Ensemble
) -> Recommendation:
    """Highest averaged probability among agents with remaining capacity.

    On the final arrival there is no future for the ensemble to anticipate,
    so the rule collapses to the myopic choice."""
    if ensemble.agents != state.agents:
        raise ValidationError("ensemble agents do not match state agents")
    if state.remaining_items == 1:
        return assign_greedy(state, cost_vector)
    vec = _checked_vector(state, cost_vector)
    probs = ensemble.predict(vec, quantile_vector)
    avail = _available(state)
    best = int(avail[int(np.argmax(probs[avail]))])
    return Recommendation(
        chosen_agent=state.agents[best],
        per_agent_score={state.agents[int(a)]: float(probs[a]) for a in avail},
        expected_loss_estimate=None,
        draws_used=0,
    )


# --- serialization -----------------------------------------------------------


def _pack_f64s(arr: np.ndarray) -> bytes:
    return np.asarray(arr, dtype="<f8").tobytes()


def dump_ensemble(ensemble: Ensemble) -> bytes:
    p = ensemble.n_features
    out = [
        _MAGIC,
        struct.pack("<III", _VERSION, len(ensemble.agents), len(ensemble.members)),
        struct.pack("<I", p),
    ]
    for agent in ensemble.agents:
        raw = agent.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
    for member in ensemble.members:
        out.append(_pack_f64s(member.feature_mean))
        out.append(_pack_f64s(member.feature_scale))
        for model in member.models:
            out.append(struct.pack("<B", 1 if model.constant else 0))
            out.append(struct.pack("<dd", model.intercept, model.penalty))
            weights = np.empty(0) if model.constant else model.weights
            out.append(struct.pack("<I", len(weights)) + _pack_f64s(weights))
            out.append(struct.pack("<I", len(model.cv_penalties)))
            for lam, loss in zip(model.cv_penalties, model.cv_losses):
                out.append(struct.pack("<dd", lam, loss))
    return b"".join(out)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ValidationError("truncated ensemble payload")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64s(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)


def load_ensemble(raw: bytes) -> Ensemble:
    r = _Reader(raw)
    if r.take(4) != _MAGIC:
        raise ValidationError("not an ensemble payload (bad magic)")
    version = r.u32()
    if version != _VERSION:
        raise ValidationError(f"unsupported ensemble version {version}")
    n_agents, n_members, p = r.u32(), r.u32(), r.u32()
    agents = tuple(r.take(r.u32()).decode("utf-8") for _ in range(n_agents))
    members = []
    for _ in range(n_members):
        mean = r.f64s(p)
        scale = r.f64s(p)
        models = []
        for _ in range(n_agents):
            constant = struct.unpack("<B", r.take(1))[0] == 1
            intercept, penalty = struct.unpack("<dd", r.take(16))
            n_w = r.u32()
            weights = r.f64s(n_w) if n_w else np.zeros(p)
            n_cv = r.u32()
            cv = r.f64s(2 * n_cv).reshape(n_cv, 2) if n_cv else np.empty((0, 2))
            models.append(
                LogisticModel(
                    weights=weights,
                    intercept=intercept,
                    penalty=penalty,
                    constant=constant,
                    cv_penalties=cv[:, 0].copy(),
                    cv_losses=cv[:, 1].copy(),
                )
            )
        members.append(EnsembleMember(mean, scale, tuple(models)))
    if r.pos != len(raw):
        raise ValidationError("trailing bytes after ensemble payload")
    return Ensemble(agents=agents, members=tuple(members))


def save_ensemble(ensemble: Ensemble, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_ensemble(ensemble))


def load_ensemble_file(path) -> Ensemble:
    with open(path, "rb") as fh:
        return load_ensemble(fh.read())


def ensemble_summary(ensemble: Ensemble) -> str:
    """Line-oriented human-readable report: counts, penalties, CV curves."""
    lines = [
        f"lasso-logistic-ensemble v{_VERSION}",
        f"agents={len(ensemble.agents)} members={len(ensemble.members)} features={ensemble.n_features}",
    ]
    for j, agent in enumerate(ensemble.agents):
        models = [member.models[j] for member in ensemble.members]
        n_const = sum(1 for mdl in models if mdl.constant)
        mean_nz = np.mean([mdl.nonzero for mdl in models])
        lines.append(
            f"agent {agent}: models={len(models)} constant={n_const} mean_nonzero={mean_nz:.2f}"
        )
    for r, member in enumerate(ensemble.members):
        for j, agent in enumerate(ensemble.agents):
            mdl = member.models[j]
            kind = "constant" if mdl.constant else "logistic"
            lines.append(
                f"member {r} agent {agent}: kind={kind} penalty={mdl.penalty:.6g} "
                f"nonzero={mdl.nonzero} intercept={mdl.intercept:.6g}"
            )
            if len(mdl.cv_penalties):
                curve = " ".join(
                    f"{lam:.6g}:{loss:.6g}"
                    for lam, loss in zip(mdl.cv_penalties, mdl.cv_losses)
                )
                lines.append(f"member {r} agent {agent} cv: {curve}")
    return "\n".join(lines) + "\n"
