"""Live correction sessions over HTTP with a server-push event stream.

Endpoints:
    GET    /scenarios                     list available scenarios
    POST   /sessions                      create a session (auto or stepped)
    POST   /sessions/{id}/corrections     submit a force on one agent
    POST   /sessions/{id}/tick            advance one step (stepped mode)
    GET    /sessions/{id}/events          server-sent events: ticks + updates
    DELETE /sessions/{id}                 finalize, persist the log, close

All mutations of one session are serialized behind a per-session lock, so
the event stream observes exactly the belief sequence that ends up in the
persisted episode log. Snapshots pushed to streams are plain dicts built
under the lock and never mutated afterwards.
"""

from __future__ import annotations

import asyncio
import importlib.resources
import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .engine import EpisodeState, apply_correction, finalize_episode, start_episode
from .optimizer import DStarLibrary
from .rewards import Scenario, load_scenario
from .trajectory import Correction

DEFAULT_TICK_RATE = 5.0


class CreateSessionRequest(BaseModel):
    scenario_id: str
    model: str = "sequence"
    seed: int = 0
    mode: str = "stepped"  # "auto" advances the clock at tick_rate
    tick_rate: float = DEFAULT_TICK_RATE


class CorrectionRequest(BaseModel):
    timestep: int
    agent: int
    force: list[float]


@dataclass
class Session:
    session_id: str
    state: EpisodeState
    scenario: Scenario
    model: str
    mode: str
    tick_rate: float
    created_at: float
    library: DStarLibrary | None
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    subscribers: list[asyncio.Queue] = field(default_factory=list)
    seq: int = 0
    ticker: asyncio.Task | None = None
    closed: bool = False


def _snapshot(session: Session, kind: str) -> dict:
    state = session.state
    return {
        "seq": session.seq,
        "kind": kind,
        "clock": state.clock,
        "horizon": state.scenario.horizon,
        "agent_positions": [list(map(float, p)) for p in state.current_positions()],
        "plan": state.plan.to_json(),
        "deformed": state.last_deformed().to_json(),
        "belief": state.belief.to_json(),
        "corrections": len(state.corrections),
        "done": state.done,
        "timestamp": time.time(),
    }


def _publish(session: Session, kind: str) -> dict:
    session.seq += 1
    snap = _snapshot(session, kind)
    for q in list(session.subscribers):
        q.put_nowait(snap)
    return snap


class SessionService:
    def __init__(self, scenarios: dict[str, Scenario], libraries: dict[str, DStarLibrary]):
        self.scenarios = scenarios
        self.libraries = libraries
        self.sessions: dict[str, Session] = {}
        self.log_dir = Path("episode_logs")

    def get(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no session {session_id}") from None

    async def create(self, req: CreateSessionRequest) -> Session:
        scenario = self.scenarios.get(req.scenario_id)
        if scenario is None:
            raise HTTPException(status_code=404, detail=f"unknown scenario {req.scenario_id!r}")
        library = self.libraries.get(req.scenario_id)
        if req.model == "sequence" and library is None:
            raise HTTPException(
                status_code=412,
                detail=(
                    f"no evidence library for {req.scenario_id!r}; run "
                    f"`corrlearn precompute --scenario <file> --out <dir>/{req.scenario_id}.dstar.json`"
                ),
            )
        if req.mode not in ("auto", "stepped"):
            raise HTTPException(status_code=400, detail=f"unknown mode {req.mode!r}")
        try:
            state = start_episode(scenario, req.model, seed=req.seed)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        session = Session(
            session_id=uuid.uuid4().hex,
            state=state,
            scenario=scenario,
            model=req.model,
            mode=req.mode,
            tick_rate=req.tick_rate,
            created_at=time.time(),
            library=library,
        )
        self.sessions[session.session_id] = session
        if req.mode == "auto":
            session.ticker = asyncio.create_task(self._auto_tick(session))
        return session

    async def _auto_tick(self, session: Session) -> None:
        try:
            while not session.closed and not session.state.done:
                await asyncio.sleep(1.0 / session.tick_rate)
                async with session.lock:
                    if session.closed or session.state.done:
                        break
                    session.state.clock += 1
                    _publish(session, "tick")
        except asyncio.CancelledError:
            pass

    async def tick(self, session_id: str) -> dict:
        session = self.get(session_id)
        async with session.lock:
            if not session.state.done:
                session.state.clock += 1
            return _publish(session, "tick")

    async def correct(self, session_id: str, req: CorrectionRequest) -> dict:
        session = self.get(session_id)
        async with session.lock:
            state = session.state
            if state.done:
                raise HTTPException(status_code=410, detail="episode already over")
            scenario = session.scenario
            force = np.asarray(req.force, dtype=float)
            if force.shape != (2,) or not np.all(np.isfinite(force)):
                raise HTTPException(status_code=400, detail="force must be a finite [fx, fy]")
            if not 0 <= req.agent < scenario.num_agents:
                raise HTTPException(status_code=400, detail=f"agent must be in [0, {scenario.num_agents})")

            bound = scenario.hyperparameters.force_bound
            clamped = False
            norm = float(np.linalg.norm(force))
            if norm > bound:
                force = force * (bound / norm)
                clamped = True

            # live input may refer to a timestep the robot has already passed;
            # re-stamp it to the current clock and keep it inside the horizon
            timestep = req.timestep
            restamped = False
            if timestep <= state.clock:
                timestep = min(max(state.clock, 1), scenario.horizon - 1)
                restamped = timestep != req.timestep
            if not 1 <= timestep <= scenario.horizon - 1:
                raise HTTPException(
                    status_code=400,
                    detail=f"timestep must lie in [1, {scenario.horizon - 1}]",
                )

            if float(np.linalg.norm(force)) > 0.0:
                apply_correction(state, Correction(timestep, req.agent, force), session.library)
                snap = _publish(session, "belief-update")
            else:
                snap = _snapshot(session, "noop")
            return {**snap, "clamped": clamped, "restamped": restamped, "timestep_used": timestep}

    async def end(self, session_id: str) -> dict:
        session = self.get(session_id)
        async with session.lock:
            session.closed = True
            if session.ticker is not None:
                session.ticker.cancel()
            log = finalize_episode(session.state)
            self.log_dir.mkdir(parents=True, exist_ok=True)
            log_path = self.log_dir / f"{session_id}.jsonl"
            log.save(log_path)
            for q in list(session.subscribers):
                q.put_nowait(None)  # end-of-stream marker
        del self.sessions[session_id]
        return {
            "session_id": session_id,
            "log_path": str(log_path),
            "final_belief": log.final_belief,
            "predicted_theta_index": log.predicted_theta_index,
            "true_theta_index": log.true_theta_index,
            "events": len(log.events),
            "warnings": log.warnings,
        }


def _load_bundled_scenarios() -> dict[str, Scenario]:
    scenarios = {}
    data_dir = importlib.resources.files("corrlearn") / "data"
    for entry in data_dir.iterdir():
        if entry.name.endswith(".json"):
            with importlib.resources.as_file(entry) as path:
                sc = load_scenario(path)
                scenarios[sc.scenario_id] = sc
    return scenarios


def create_app(
    scenario_dir: str | None = None,
    library_dir: str | None = None,
    scenarios: dict[str, Scenario] | None = None,
    libraries: dict[str, DStarLibrary] | None = None,
) -> FastAPI:
    """Build the service; scenarios default to the bundled navigation pair.

    Libraries are looked up as <library_dir>/<scenario_id>.dstar.json; without
    one the sequence model is unavailable for that scenario (independent and
    final still work).
    """
    if scenarios is None:
        scenarios = _load_bundled_scenarios()
        if scenario_dir:
            for path in sorted(Path(scenario_dir).glob("*.json")):
                sc = load_scenario(path)
                scenarios[sc.scenario_id] = sc
    if libraries is None:
        libraries = {}
        if library_dir:
            for sid in scenarios:
                candidate = Path(library_dir) / f"{sid}.dstar.json"
                if candidate.exists():
                    libraries[sid] = DStarLibrary.load(candidate)

    service = SessionService(scenarios, libraries)
    app = FastAPI(title="corrlearn session service")
    app.state.service = service

    @app.get("/scenarios")
    async def list_scenarios() -> list[dict]:
        return [
            {
                "scenario_id": sid,
                "num_agents": sc.num_agents,
                "horizon": sc.horizon,
                "theta_labels": list(sc.theta_labels),
                "goal_regions": [
                    {"label": g.label, "center": g.center.tolist(), "radius": g.radius}
                    for g in sc.goal_regions
                ],
                "danger_zones": [
                    {"center": z.center.tolist(), "radius": z.radius} for z in sc.danger_zones
                ],
                "workspace": sc.workspace.tolist(),
                "starts": sc.starts.tolist(),
                "true_theta_index": sc.true_theta_index,
                "sequence_available": sid in service.libraries,
                "force_bound": sc.hyperparameters.force_bound,
            }
            for sid, sc in sorted(service.scenarios.items())
        ]

    @app.post("/sessions")
    async def create_session(req: CreateSessionRequest) -> dict:
        session = await service.create(req)
        return {
            "session_id": session.session_id,
            "mode": session.mode,
            "tick_rate": session.tick_rate,
            "snapshot": _snapshot(session, "created"),
        }

    @app.post("/sessions/{session_id}/corrections")
    async def submit_correction(session_id: str, req: CorrectionRequest) -> dict:
        return await service.correct(session_id, req)

    @app.post("/sessions/{session_id}/tick")
    async def tick(session_id: str) -> dict:
        return await service.tick(session_id)

    @app.get("/sessions/{session_id}/events")
    async def events(session_id: str) -> StreamingResponse:
        session = service.get(session_id)
        queue: asyncio.Queue = asyncio.Queue()
        session.subscribers.append(queue)

        async def stream():
            try:
                # reconnects resume from the latest snapshot, not a replay
                yield f"data: {json.dumps(_snapshot(session, 'snapshot'))}\n\n"
                while True:
                    item = await queue.get()
                    if item is None:
                        break
                    yield f"data: {json.dumps(item)}\n\n"
            finally:
                if queue in session.subscribers:
                    session.subscribers.remove(queue)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.delete("/sessions/{session_id}")
    async def end_session(session_id: str) -> dict:
        return await service.end(session_id)

    return app
