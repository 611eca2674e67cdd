"""HTTP session service and terminal REPL over live interface sessions.

Each session owns one interface state; writes are serialized per session and
appended to a hash-chained event log so any session can be audited by
replaying its log. Ratings (goal success, coherence) append to a JSON Lines
file for later export.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .actions import ActToken, CommandParseError, chat, parse_command
from .interface import (
    DEFAULT_CONFIG,
    EntityNotInResults,
    InterfaceConfig,
    InterfaceState,
    ProtocolError,
    apply_action,
    empty_state,
    render_state,
    state_to_json,
    user_turn,
)
from .kb import KBError, KnowledgeBase


@dataclass
class GatewayConfig:
    interface: InterfaceConfig = DEFAULT_CONFIG
    idle_timeout_s: float = 7200.0
    ratings_path: Path | None = None
    console_dir: Path | None = None


@dataclass
class Event:
    actor: str
    kind: Literal["create", "user", "action", "chat"]
    payload: str
    state_hash: str

    def to_json(self) -> dict:
        return {"actor": self.actor, "kind": self.kind, "payload": self.payload, "state_hash": self.state_hash}


@dataclass
class Session:
    id: str
    state: InterfaceState
    goal: dict | None = None
    created: float = field(default_factory=time.time)
    updated: float = field(default_factory=time.time)
    events: list[Event] = field(default_factory=list)
    rating: dict | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def chain_hash(prev_hash: str, markdown: str) -> str:
    return hashlib.sha256((prev_hash + markdown).encode("utf-8")).hexdigest()


def replay_event_log(
    events: Iterable[dict], kb: KnowledgeBase, config: InterfaceConfig = DEFAULT_CONFIG
) -> str:
    """Fold a session's event log from the empty state; returns the final
    state hash, which must equal the last recorded hash."""
    state = empty_state()
    last = ""
    for event in events:
        kind = event["kind"] if isinstance(event, dict) else event.kind
        payload = event["payload"] if isinstance(event, dict) else event.payload
        if kind == "user":
            state = user_turn(state, payload)
        elif kind == "chat":
            state = apply_action(state, chat(payload), kb, config=config)
        elif kind == "action":
            state = apply_action(state, parse_command(payload), kb, config=config)
        last = chain_hash(last, render_state(state, config))
    return last


class SessionStore:
    def __init__(self, kb: KnowledgeBase, config: GatewayConfig):
        self.kb = kb
        self.config = config
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, goal: dict | None = None) -> Session:
        session = Session(id=secrets.token_urlsafe(16), state=empty_state(), goal=goal)
        markdown = render_state(session.state, self.config.interface)
        session.events.append(Event("system", "create", "", chain_hash("", markdown)))
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
            if session and self.config.idle_timeout_s > 0:
                if time.time() - session.updated > self.config.idle_timeout_s:
                    del self._sessions[session_id]
                    session = None
        if session is None:
            raise KeyError(session_id)
        return session

    def count(self) -> int:
        with self._lock:
            return len(self._sessions)

    def record(self, session: Session, actor: str, kind: str, payload: str) -> None:
        markdown = render_state(session.state, self.config.interface)
        prev = session.events[-1].state_hash if session.events else ""
        session.events.append(Event(actor, kind, payload, chain_hash(prev, markdown)))
        session.updated = time.time()


class CreateSessionBody(BaseModel):
    goal: dict | None = None


class UserTurnBody(BaseModel):
    text: str


class ActionBody(BaseModel):
    command: str | None = None
    act: str | None = None
    sequence: str | None = None


class RatingBody(BaseModel):
    goal_success: bool
    coherence: Literal["win", "lose", "tie"]
    notes: str = ""
    comparison: str = ""


def create_app(kb: KnowledgeBase, config: GatewayConfig | None = None) -> FastAPI:
    config = config or GatewayConfig()
    store = SessionStore(kb, config)
    app = FastAPI(title="remake interface gateway", version="0.1.0")
    app.state.store = store

    def get_session(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")

    def state_payload(session: Session) -> dict:
        return {
            "id": session.id,
            "markdown": render_state(session.state, config.interface),
            "json": state_to_json(session.state),
        }

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "sessions": store.count(), "domains": kb.counts}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody | None = None) -> dict:
        session = store.create(goal=body.goal if body else None)
        return {"id": session.id, "goal": session.goal}

    @app.post("/sessions/{session_id}/user")
    def post_user(session_id: str, body: UserTurnBody) -> dict:
        session = get_session(session_id)
        with session.lock:
            _ensure_not_rated(session)
            session.state = user_turn(session.state, body.text)
            store.record(session, "user", "user", body.text)
            return state_payload(session)

    @app.post("/sessions/{session_id}/action")
    def post_action(session_id: str, body: ActionBody) -> dict:
        session = get_session(session_id)
        with session.lock:
            _ensure_not_rated(session)
            if body.command is not None:
                command = body.command
            elif body.act is not None and body.sequence is not None:
                if body.act == "Chat":
                    session.state = apply_action(session.state, chat(body.sequence), kb, config=config.interface)
                    store.record(session, "agent", "chat", body.sequence)
                    return state_payload(session)
                command = body.sequence
            else:
                raise HTTPException(status_code=422, detail="provide 'command' or 'act'+'sequence'")
            try:
                action = parse_command(command)
            except CommandParseError as exc:
                return JSONResponse(
                    status_code=422,
                    content={"detail": {"message": exc.message, "position": exc.position}},
                )
            if body.act in ("Search", "Book") and action.variant.value != body.act:
                return JSONResponse(
                    status_code=422,
                    content={"detail": {"message": f"command parses as {action.variant.value}, not {body.act}", "position": None}},
                )
            try:
                session.state = apply_action(session.state, action, kb, config=config.interface)
            except ProtocolError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except (KBError, EntityNotInResults) as exc:
                return JSONResponse(status_code=422, content={"detail": {"message": str(exc), "position": None}})
            store.record(session, "agent", "action", command)
            return state_payload(session)

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str) -> dict:
        return state_payload(get_session(session_id))

    @app.get("/sessions/{session_id}/log")
    def get_log(session_id: str) -> dict:
        session = get_session(session_id)
        with session.lock:
            return {
                "id": session.id,
                "goal": session.goal,
                "created": session.created,
                "updated": session.updated,
                "events": [e.to_json() for e in session.events],
                "rating": session.rating,
            }

    @app.post("/sessions/{session_id}/rating")
    def post_rating(session_id: str, body: RatingBody) -> dict:
        session = get_session(session_id)
        with session.lock:
            if session.rating is not None:
                raise HTTPException(status_code=409, detail="session already rated")
            session.rating = body.model_dump()
            record = {"session_id": session.id, "time": time.time(), **session.rating}
            if config.ratings_path:
                config.ratings_path.parent.mkdir(parents=True, exist_ok=True)
                with open(config.ratings_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            return {"ok": True, "rating": session.rating}

    if config.console_dir and Path(config.console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=str(config.console_dir), html=True), name="console")

    return app


def _ensure_not_rated(session: Session) -> None:
    if session.rating is not None:
        raise HTTPException(status_code=409, detail="session is rated and locked")


# ---------------------------------------------------------------------------
# Terminal REPL


REPL_HELP = """commands:
  [domain] [slot] value ...   issue a Search command
  [booking] [slot] value ...  issue a Book command
  /user <text>                inject a user turn
  /state                      print the rendered interface
  /help                       show this help
  /quit                       exit
"""


def run_repl(
    kb: KnowledgeBase,
    config: InterfaceConfig = DEFAULT_CONFIG,
    stdin=None,
    stdout=None,
) -> int:
    """Line-oriented loop for operating the interface by hand."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    interactive = hasattr(stdin, "isatty") and stdin.isatty()
    state = empty_state()

    def out(text: str) -> None:
        stdout.write(text)
        if not text.endswith("\n"):
            stdout.write("\n")

    if interactive:
        out(REPL_HELP)
    for raw in stdin:
        line = raw.strip()
        if not line:
            continue
        if line == "/quit":
            break
        if line == "/help":
            out(REPL_HELP)
        elif line == "/state":
            stdout.write(render_state(state, config))
        elif line.startswith("/user "):
            state = user_turn(state, line[len("/user ") :])
            out(f"ok: user turn recorded ({len(state.chat_log)} chat turns)")
        elif line.startswith("["):
            try:
                action = parse_command(line)
                state = apply_action(state, action, kb, config=config)
            except (CommandParseError, ProtocolError, KBError, EntityNotInResults) as exc:
                out(f"error: {exc}")
                continue
            if action.variant is ActToken.SEARCH:
                out(f"ok: Search {action.domain} ({state.result_count} found)")
            else:
                out(f"ok: Book (status {state.status_of(state.active_domain).value})")
        else:
            out("error: not a command; use /user <text> for user turns or /help")
    return 0
