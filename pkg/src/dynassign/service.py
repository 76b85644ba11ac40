"""Live assignment sessions over HTTP.

A session pins down everything an episode needs — agents, capacities, the
historical pool, the mechanism, the declared number of arrivals n, and a seed
— at creation time. Arrivals are then submitted one at a time: `recommend`
answers with the mechanism's choice and its per-agent diagnostics, `commit`
makes an assignment permanent. What-if recommendations are pure reads and
repeatable; nothing is reserved until commit, and the committing operator may
override the recommendation (the journal keeps both).

Durability is an append-only JSON Lines journal per session, one event per
line: {"seq", "kind", "payload", "ts"}. Replaying a journal reconstructs the
exact session state; the state hash (wall-clock excluded) is the recovery
contract checked by the tests.

Recommendation draws derive from (session seed, arrival ordinal), so a
recommendation is reproducible for the audit trail no matter when it is
recomputed.
"""

import json
import os
import threading
import time
import uuid
from pathlib import Path

import numpy as np

from .dataio import canonical_json, sha256_bytes
from .errors import InfeasibleError, ValidationError
from .lap import AgentPool
from .mechanisms import DynamicState, MechanismConfig, recommend
from .stochastic import HistoricalPool

SCHEMA = "v1"
_DEFAULT_ENSEMBLE_MEMBERS = 10


class ApiError(Exception):
    """Error with a wire envelope: {schema, code, message, details}."""

    def __init__(self, code: str, message: str, details: dict | None = None, status: int = 400):
        super().__init__(message)
        self.code = code
        self.message = message
        self.details = details or {}
        self.status = status

    def envelope(self) -> dict:
        return {
            "schema": SCHEMA,
            "code": self.code,
            "message": self.message,
            "details": self.details,
        }


def config_document(config: MechanismConfig) -> dict:
    return {
        "kind": config.kind,
        "n_draws": config.n_draws,
        "lam": config.lam,
        "t": config.t,
        "exhaustive": config.exhaustive,
    }


def config_from_document(doc: dict) -> MechanismConfig:
    return MechanismConfig(
        kind=doc["kind"],
        n_draws=doc.get("n_draws"),
        lam=doc.get("lam", 0.2),
        t=doc.get("t", 6),
        exhaustive=doc.get("exhaustive", False),
    )


class Session:
    """One live episode: capacity ledger + journal, guarded by a lock."""

    def __init__(
        self,
        session_id: str,
        agents,
        capacity,
        pool_values,
        n: int,
        config: MechanismConfig,
        seed: int = 0,
        journal_path=None,
        clock=time.time,
        _genesis: bool = True,
    ):
        agents = tuple(agents)
        capacity = tuple(int(z) for z in capacity)
        values = np.asarray(pool_values, dtype=np.float64)
        if len(agents) != len(capacity):
            raise ApiError("validation", "agents and capacity lengths differ")
        try:
            self.history = HistoricalPool(agents, values)
            AgentPool(agents, capacity)
        except ValidationError as exc:
            raise ApiError("validation", str(exc)) from exc
        if n < 1:
            raise ApiError("validation", f"n must be positive, got {n}")
        if n > sum(capacity):
            raise ApiError(
                "infeasible",
                f"{n} arrivals exceed total capacity {sum(capacity)}",
                {"n": n, "total_capacity": sum(capacity)},
                status=409,
            )
        self.session_id = session_id
        self.agents = agents
        self.capacity_initial = capacity
        self.n = int(n)
        self.config = config
        self.seed = int(seed)
        self.lock = threading.RLock()
        self._remaining = list(capacity)
        self._commits: list[dict] = []
        self._pending: dict[int, dict] = {}
        self._events: list[dict] = []
        self._seq = 0
        self._clock = clock
        self._journal_path = Path(journal_path) if journal_path else None
        self._model = None
        if _genesis:
            self._append(
                "genesis",
                {
                    "schema": SCHEMA,
                    "id": session_id,
                    "seed": self.seed,
                    "n": self.n,
                    "agents": list(agents),
                    "capacity": list(capacity),
                    "pool": values.tolist(),
                    "mechanism": config_document(config),
                },
            )

    # --- journal -------------------------------------------------------------

    def _append(self, kind: str, payload: dict, _write: bool = True) -> dict:
        event = {"seq": self._seq, "kind": kind, "payload": payload, "ts": float(self._clock())}
        self._seq += 1
        self._events.append(event)
        if _write and self._journal_path is not None:
            with open(self._journal_path, "a") as fh:
                fh.write(canonical_json(event))
                fh.flush()
                os.fsync(fh.fileno())
        return event

    def events(self) -> list[dict]:
        with self.lock:
            return [dict(e) for e in self._events]

    # --- state ---------------------------------------------------------------

    @property
    def next_ordinal(self) -> int:
        return len(self._commits)

    @property
    def closed(self) -> bool:
        return len(self._commits) >= self.n

    def _state_core(self) -> dict:
        return {
            "schema": SCHEMA,
            "id": self.session_id,
            "seed": self.seed,
            "n": self.n,
            "agents": list(self.agents),
            "capacity_initial": list(self.capacity_initial),
            "capacity_remaining": list(self._remaining),
            "mechanism": config_document(self.config),
            "commits": [dict(c) for c in self._commits],
            "next_ordinal": self.next_ordinal,
            "closed": self.closed,
        }

    def state_document(self) -> dict:
        with self.lock:
            core = self._state_core()
            core["state_hash"] = sha256_bytes(canonical_json(core).encode())
            return core

    # --- operations ----------------------------------------------------------

    def _ensure_open(self):
        if self.closed:
            raise ApiError(
                "closed",
                f"session {self.session_id} is closed after {self.n} commits",
                status=409,
            )

    def _ensemble(self):
        if self._model is None:
            from .predictor import PredictorConfig, train_ensemble

            members = self.config.n_draws or _DEFAULT_ENSEMBLE_MEMBERS
            self._model = train_ensemble(
                self.history,
                AgentPool(self.agents, self.capacity_initial),
                self.n,
                members,
                PredictorConfig(),
                self.seed,
            )
        return self._model

    def recommend(self, vector, what_if: bool = False) -> dict:
        with self.lock:
            self._ensure_open()
            vec = np.asarray(vector, dtype=np.float64)
            if vec.shape != (len(self.agents),):
                raise ApiError(
                    "validation",
                    f"vector length {vec.size} does not match {len(self.agents)} agents",
                )
            state = DynamicState(
                AgentPool(self.agents, tuple(self._remaining)),
                self.history,
                horizon=self.n,
                seen=self.next_ordinal,
            )
            model = self._ensemble() if self.config.kind == "predicted" else None
            try:
                rec = recommend(state, vec, self.config, master_seed=self.seed, model=model)
            except (ValidationError, InfeasibleError) as exc:
                raise ApiError("validation", str(exc)) from exc
            response = {
                "schema": SCHEMA,
                "id": self.session_id,
                "ordinal": self.next_ordinal,
                "what_if": bool(what_if),
                "chosen_agent": rec.chosen_agent,
                "per_agent_score": {a: float(s) for a, s in sorted(rec.per_agent_score.items())},
                "expected_loss": rec.expected_loss_estimate,
                "draws": rec.draws_used,
            }
            if not what_if:
                self._pending[self.next_ordinal] = {
                    "vector": [float(v) for v in vec],
                    "chosen_agent": rec.chosen_agent,
                }
                self._append(
                    "recommend",
                    {
                        "ordinal": self.next_ordinal,
                        "vector": [float(v) for v in vec],
                        "chosen_agent": rec.chosen_agent,
                        "per_agent_score": response["per_agent_score"],
                        "expected_loss": rec.expected_loss_estimate,
                        "draws": rec.draws_used,
                    },
                )
            return response

    def _apply_commit(self, ordinal: int, agent: str, recommended, vector) -> dict:
        idx = self.agents.index(agent)
        self._remaining[idx] -= 1
        record = {"ordinal": int(ordinal), "agent": agent, "recommended": recommended}
        self._commits.append(record)
        self._pending.pop(ordinal, None)
        return record

    def commit(self, ordinal: int, agent: str) -> dict:
        with self.lock:
            self._ensure_open()
            committed = {c["ordinal"] for c in self._commits}
            if ordinal in committed:
                raise ApiError(
                    "double_commit",
                    f"ordinal {ordinal} was already committed",
                    {"ordinal": ordinal},
                    status=409,
                )
            if ordinal != self.next_ordinal:
                raise ApiError(
                    "stale_ordinal",
                    f"expected ordinal {self.next_ordinal}, got {ordinal}",
                    {"expected": self.next_ordinal, "got": ordinal},
                    status=409,
                )
            if agent not in self.agents:
                raise ApiError("validation", f"unknown agent {agent!r}")
            if self._remaining[self.agents.index(agent)] < 1:
                raise ApiError(
                    "exhausted_agent",
                    f"agent {agent!r} has no remaining capacity",
                    {"agent": agent},
                    status=409,
                )
            pending = self._pending.get(ordinal)
            recommended = pending["chosen_agent"] if pending else None
            vector = pending["vector"] if pending else None
            self._apply_commit(ordinal, agent, recommended, vector)
            self._append(
                "commit",
                {
                    "ordinal": int(ordinal),
                    "agent": agent,
                    "recommended": recommended,
                    "vector": vector,
                },
            )
            doc = self.state_document()
            return {
                "schema": SCHEMA,
                "id": self.session_id,
                "ordinal": int(ordinal),
                "agent": agent,
                "recommended": recommended,
                "override": recommended is not None and agent != recommended,
                "closed": self.closed,
                "capacity_remaining": doc["capacity_remaining"],
                "state_hash": doc["state_hash"],
            }


def read_journal(path) -> list[dict]:
    events = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events


def replay_journal(path, upto_seq: int | None = None, journal_path=None) -> Session:
    """Rebuild a session from its journal; optionally stop after seq upto_seq.

    The rebuilt session mirrors the events it replayed and, when journal_path
    is given, continues appending to that file (crash recovery)."""
    events = read_journal(path)
    if not events or events[0]["kind"] != "genesis":
        raise ApiError("validation", f"{path} does not start with a genesis event")
    if upto_seq is not None:
        events = [e for e in events if e["seq"] <= upto_seq]
    g = events[0]["payload"]
    session = Session(
        session_id=g["id"],
        agents=g["agents"],
        capacity=g["capacity"],
        pool_values=g["pool"],
        n=g["n"],
        config=config_from_document(g["mechanism"]),
        seed=g["seed"],
        journal_path=journal_path,
        _genesis=False,
    )
    session._events.append(events[0])
    session._seq = events[0]["seq"] + 1
    for event in events[1:]:
        if event["seq"] != session._seq:
            raise ApiError(
                "validation",
                f"journal gap: expected seq {session._seq}, found {event['seq']}",
            )
        payload = event["payload"]
        if event["kind"] == "recommend":
            session._pending[payload["ordinal"]] = {
                "vector": payload["vector"],
                "chosen_agent": payload["chosen_agent"],
            }
        elif event["kind"] == "commit":
            session._apply_commit(
                payload["ordinal"], payload["agent"], payload["recommended"], payload["vector"]
            )
        else:
            raise ApiError("validation", f"unknown journal event kind {event['kind']!r}")
        session._events.append(event)
        session._seq = event["seq"] + 1
    return session


class SessionStore:
    """In-memory registry backed by per-session journal files."""

    def __init__(self, journal_dir):
        self.journal_dir = Path(journal_dir)
        self.journal_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def journal_path(self, session_id: str) -> Path:
        return self.journal_dir / f"{session_id}.jsonl"

    def create(self, agents, capacity, pool_values, n, config, seed) -> Session:
        session_id = uuid.uuid4().hex
        session = Session(
            session_id,
            agents,
            capacity,
            pool_values,
            n,
            config,
            seed,
            journal_path=self.journal_path(session_id),
        )
        with self._lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is not None:
            return session
        path = self.journal_path(session_id)
        if path.exists():
            session = replay_journal(path, journal_path=path)
            with self._lock:
                return self._sessions.setdefault(session_id, session)
        raise ApiError("not_found", f"no session {session_id}", status=404)


# --- HTTP layer ---------------------------------------------------------------


def create_app(journal_dir):
    from fastapi import FastAPI, Request
    from fastapi.encoders import jsonable_encoder
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    class MechanismBody(BaseModel):
        kind: str
        n_draws: int | None = None
        lam: float = 0.2
        t: int = 6
        exhaustive: bool = False

    class CreateSessionBody(BaseModel):
        agents: list[str]
        capacity: list[int]
        pool: list[list[float]]
        n: int
        mechanism: MechanismBody
        seed: int = 0

    class RecommendBody(BaseModel):
        vector: list[float]
        what_if: bool = False

    class CommitBody(BaseModel):
        ordinal: int
        agent: str

    app = FastAPI(title="dynassign assignment service")
    store = SessionStore(journal_dir)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.envelope())

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        envelope = ApiError(
            "validation", "request body failed validation", {"errors": jsonable_encoder(exc.errors())}
        ).envelope()
        return JSONResponse(status_code=400, content=envelope)

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        try:
            config = config_from_document(body.mechanism.model_dump())
        except ValidationError as exc:
            raise ApiError("validation", str(exc)) from exc
        session = store.create(body.agents, body.capacity, body.pool, body.n, config, body.seed)
        return session.state_document()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return store.get(session_id).state_document()

    @app.post("/sessions/{session_id}/recommend")
    def recommend_arrival(session_id: str, body: RecommendBody):
        return store.get(session_id).recommend(body.vector, body.what_if)

    @app.post("/sessions/{session_id}/commit")
    def commit_arrival(session_id: str, body: CommitBody):
        return store.get(session_id).commit(body.ordinal, body.agent)

    @app.get("/sessions/{session_id}/trace")
    def get_trace(session_id: str):
        session = store.get(session_id)
        return {"schema": SCHEMA, "id": session_id, "events": session.events()}

    return app


def run_server(journal_dir, host: str = "127.0.0.1", port: int = 8000):
    import uvicorn

    uvicorn.run(create_app(journal_dir), host=host, port=port, log_level="warning")
