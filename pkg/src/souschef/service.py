"""HTTP session service with event-sourced state.

Each session wraps one planner engine plus its simulation. Every transcript
record is mirrored into a per-session event log with a monotonically
increasing sequence number, and a state snapshot event is appended after each
processed input, so clients can rebuild the full UI either by folding events
or by reading the latest snapshot.

Durability is input replay: the store persists the session config and every
input (chat turns and advance requests) as JSON lines. Because engines are
deterministic for a given backend and seed, replaying the inputs through a
fresh engine after a restart reproduces the same transcript and event log.
"""
from __future__ import annotations

import asyncio
import json
import logging
import uuid
from dataclasses import dataclass
from pathlib import Path

import pydantic

from .behavior_tree import TreePlanner
from .gateway import Gateway, LiveBackend, ReplayBackend
from .observation import R1, R2, USER
from .planner import OnePromptPlanner, PlannerSession, RecipeLibrary, UnknownRecipe
from .policy import CompliantBackend, SloppyBackend
from .runtime import FaultConfig, KitchenWorld, Simulation

log = logging.getLogger(__name__)

PLANNER_KINDS = ("tree", "one-prompt")
BACKEND_KINDS = ("compliant", "sloppy", "replay", "live")


@dataclass
class EngineConfig:
    """JSON-serializable session recipe: enough to rebuild the engine."""

    planner: str = "tree"
    backend: str = "compliant"
    seed: int = 0
    sloppy_p: float = 0.3
    world: dict | None = None  # None means the packaged default kitchen
    faults: dict | None = None
    replay_path: str | None = None
    # when False, chat turns only settle the planner; robot execution is
    # driven explicitly through advance, so clients can observe and interrupt
    # running skills
    auto_run: bool = True

    def __post_init__(self):
        if self.planner not in PLANNER_KINDS:
            raise ValueError(f"unknown planner {self.planner!r}")
        if self.backend not in BACKEND_KINDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "replay" and not self.replay_path:
            raise ValueError("replay backend needs replay_path")

    def to_dict(self) -> dict:
        return {
            "planner": self.planner,
            "backend": self.backend,
            "seed": self.seed,
            "sloppy_p": self.sloppy_p,
            "world": self.world,
            "faults": self.faults,
            "replay_path": self.replay_path,
            "auto_run": self.auto_run,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EngineConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in raw.items() if k in known})


def build_backend(config: EngineConfig, recipes: tuple[str, ...]):
    if config.backend == "compliant":
        return CompliantBackend(recipes)
    if config.backend == "sloppy":
        return SloppyBackend(
            CompliantBackend(recipes), p=config.sloppy_p, seed=config.seed + 1000003
        )
    if config.backend == "replay":
        return ReplayBackend(config.replay_path)
    return LiveBackend()


class SessionEngine:
    """One live session: engine, simulation, event log, and input history."""

    def __init__(self, session_id: str, config: EngineConfig):
        self.session_id = session_id
        self.config = config
        library = RecipeLibrary.packaged()
        gateway = Gateway(build_backend(config, library.names))
        if config.planner == "tree":
            planner = TreePlanner(gateway, library.names)
        else:
            planner = OnePromptPlanner(gateway, library.names)
        self.session = PlannerSession(library, planner=planner)
        world = (
            KitchenWorld.from_dict(config.world)
            if config.world is not None
            else KitchenWorld.default()
        )
        faults = FaultConfig.from_dict(config.faults) if config.faults else FaultConfig()
        self.sim = Simulation(
            self.session, gateway, world=world, faults=faults, seed=config.seed
        )
        self.events: list[dict] = []
        self.inputs: list[dict] = []
        self._mirrored = 0

    # -- event log -----------------------------------------------------------

    def _sync_events(self) -> None:
        while self._mirrored < len(self.session.transcript):
            record = self.session.transcript[self._mirrored]
            self._mirrored += 1
            self.events.append(
                {"seq": len(self.events), "kind": record.get("kind", ""), "payload": record}
            )

    def _snapshot_event(self) -> None:
        payload = self.snapshot()
        # the cursor must count the state event itself so that resuming from
        # any adopted snapshot never replays it
        payload["next_seq"] = len(self.events) + 1
        self.events.append({"seq": len(self.events), "kind": "state", "payload": payload})

    def events_since(self, since: int) -> list[dict]:
        return self.events[since:]

    # -- inputs --------------------------------------------------------------

    def apply_input(self, entry: dict) -> None:
        self.inputs.append(entry)
        if entry["op"] == "chat":
            self.sim.post_user(
                entry["text"], tag=entry.get("tag", ""), meta=entry.get("meta")
            )
            if self.config.auto_run:
                self.sim.run_until_quiet()
            else:
                self.sim.settle_planner()
        elif entry["op"] == "advance":
            for _ in range(int(entry.get("ticks", 1))):
                if self.sim.step():
                    self.sim.settle_planner()
        else:
            raise ValueError(f"unknown input op {entry['op']!r}")
        self._sync_events()
        self._snapshot_event()

    def chat(self, text: str, tag: str = "", meta: dict | None = None) -> dict:
        before = len(self.session.chat)
        entry: dict = {"op": "chat", "text": text}
        if tag:
            entry["tag"] = tag
        if meta:
            entry["meta"] = meta
        self.apply_input(entry)
        replies = [
            msg for speaker, msg in self.session.chat[before:] if speaker != "User"
        ]
        return {"replies": replies, "state": self.snapshot()}

    def advance(self, ticks: int = 1) -> dict:
        before = len(self.events)
        self.apply_input({"op": "advance", "ticks": ticks})
        return {"events": len(self.events) - before, "state": self.snapshot()}

    # -- views ----------------------------------------------------------------

    def snapshot(self) -> dict:
        s = self.session
        return {
            "session_id": self.session_id,
            "recipe": s.dag.recipe_name if s.dag else "",
            "available_subtasks": s.available_subtasks(),
            "queues": {agent: list(s.queues[agent]) for agent in (R2, R1, USER)},
            "current": dict(s.current),
            "status": {agent: s.status[agent].render() for agent in (R2, R1)},
            "completed": list(s.completed),
            "failed": list(s.failed),
            "subtasks": (
                [{"id": n.id, "label": n.label, "done": n.done} for n in s.dag.nodes]
                if s.dag
                else []
            ),
            "chat": [[speaker, text] for speaker, text in s.chat],
            "tick": s.tick_counter,
            "t": self.sim.t,
            "completion": s.completion_fraction(),
            "finished": s.dag.is_finished() if s.dag else False,
            "next_seq": len(self.events),
        }


class SessionStore:
    """In-memory session registry with optional input-replay persistence."""

    def __init__(self, storage_dir: str | Path | None = None):
        self.storage_dir = Path(storage_dir) if storage_dir else None
        self.engines: dict[str, SessionEngine] = {}
        if self.storage_dir is not None:
            self.storage_dir.mkdir(parents=True, exist_ok=True)
            self._recover()

    def _session_dir(self, session_id: str) -> Path:
        return self.storage_dir / session_id

    def create(self, config: EngineConfig, session_id: str | None = None) -> SessionEngine:
        session_id = session_id or uuid.uuid4().hex[:12]
        if session_id in self.engines:
            raise ValueError(f"session {session_id} already exists")
        engine = SessionEngine(session_id, config)
        self.engines[session_id] = engine
        if self.storage_dir is not None:
            directory = self._session_dir(session_id)
            directory.mkdir(parents=True, exist_ok=True)
            (directory / "config.json").write_text(
                json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8"
            )
        return engine

    def get(self, session_id: str) -> SessionEngine | None:
        return self.engines.get(session_id)

    def apply_input(self, session_id: str, entry: dict) -> SessionEngine:
        engine = self.engines[session_id]
        engine.apply_input(entry)
        if self.storage_dir is not None:
            with open(self._session_dir(session_id) / "inputs.jsonl", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return engine

    def _recover(self) -> None:
        for directory in sorted(self.storage_dir.iterdir()):
            config_path = directory / "config.json"
            if not config_path.is_file():
                continue
            config = EngineConfig.from_dict(
                json.loads(config_path.read_text(encoding="utf-8"))
            )
            engine = SessionEngine(directory.name, config)
            inputs_path = directory / "inputs.jsonl"
            if inputs_path.is_file():
                with open(inputs_path, encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            engine.apply_input(json.loads(line))
            self.engines[directory.name] = engine
            log.info("recovered session %s (%d inputs)", directory.name, len(engine.inputs))


# -- HTTP layer -----------------------------------------------------------------


class CreateSessionBody(pydantic.BaseModel):
    planner: str = "tree"
    backend: str = "compliant"
    seed: int = 0
    sloppy_p: float = 0.3
    world: dict | None = None
    faults: dict | None = None
    replay_path: str | None = None
    auto_run: bool = True


class ChatBody(pydantic.BaseModel):
    text: str
    tag: str = ""
    meta: dict | None = None


class AdvanceBody(pydantic.BaseModel):
    ticks: int = 1


def create_app(store: SessionStore | None = None):
    from fastapi import FastAPI, HTTPException
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import StreamingResponse

    store = store if store is not None else SessionStore()
    app = FastAPI(title="souschef session service")
    app.state.store = store
    # the web console is a static page served from another origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def engine_or_404(session_id: str) -> SessionEngine:
        engine = store.get(session_id)
        if engine is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return engine

    @app.get("/health")
    def health():
        return {"ok": True, "sessions": len(store.engines)}

    @app.get("/recipes")
    def recipes():
        return {"recipes": list(RecipeLibrary.packaged().names)}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        try:
            config = EngineConfig(**body.model_dump())
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        engine = store.create(config)
        return {"session_id": engine.session_id, "state": engine.snapshot()}

    @app.get("/sessions")
    def list_sessions():
        return {
            "sessions": [
                {"session_id": sid, "state": engine.snapshot()}
                for sid, engine in store.engines.items()
            ]
        }

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        return engine_or_404(session_id).snapshot()

    @app.get("/sessions/{session_id}/transcript")
    def get_transcript(session_id: str):
        return {"transcript": engine_or_404(session_id).session.transcript}

    @app.post("/sessions/{session_id}/chat")
    def chat(session_id: str, body: ChatBody):
        engine = engine_or_404(session_id)
        if not body.text.strip():
            raise HTTPException(status_code=400, detail="empty message")
        before = len(engine.session.chat)
        entry: dict = {"op": "chat", "text": body.text}
        if body.tag:
            entry["tag"] = body.tag
        if body.meta:
            entry["meta"] = body.meta
        try:
            store.apply_input(session_id, entry)
        except UnknownRecipe as exc:
            raise HTTPException(status_code=409, detail=f"unknown recipe: {exc}")
        replies = [
            msg for speaker, msg in engine.session.chat[before:] if speaker != "User"
        ]
        return {"replies": replies, "state": engine.snapshot()}

    @app.post("/sessions/{session_id}/advance")
    def advance(session_id: str, body: AdvanceBody):
        engine = engine_or_404(session_id)
        if body.ticks < 1:
            raise HTTPException(status_code=400, detail="ticks must be positive")
        before = len(engine.events)
        store.apply_input(session_id, {"op": "advance", "ticks": body.ticks})
        return {"events": len(engine.events) - before, "state": engine.snapshot()}

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, since: int = 0, stream: bool = False, max_events: int = 0):
        engine = engine_or_404(session_id)
        if not stream:
            batch = engine.events_since(since)
            if max_events:
                batch = batch[:max_events]
            return {
                "events": batch,
                "next": since + len(batch),
            }

        async def sse():
            cursor = since
            sent = 0
            while True:
                batch = engine.events_since(cursor)
                for event in batch:
                    payload = json.dumps(event, sort_keys=True)
                    yield f"id: {event['seq']}\nevent: {event['kind']}\ndata: {payload}\n\n"
                    sent += 1
                    if max_events and sent >= max_events:
                        return
                cursor += len(batch)
                await asyncio.sleep(0.05)

        return StreamingResponse(sse(), media_type="text/event-stream")

    return app


def serve(host: str = "127.0.0.1", port: int = 8080, storage_dir: str | None = None) -> None:
    import uvicorn

    app = create_app(SessionStore(storage_dir))
    uvicorn.run(app, host=host, port=port, log_level="info")
