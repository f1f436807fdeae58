"""HTTP JSON service: translation, interactive sessions, online learning.

Endpoints (application/json, UTF-8):

    POST /translate                   {source, nbest}
    POST /session                     {source}
    POST /session/{id}/correction     {position, character, finish?}
    POST /session/{id}/accept         {learn}
    GET  /health

Model reads run concurrently; online-learning writes take the model
exclusively, so concurrent learning accepts serialize. One correction may
be in flight per session; a second concurrent one gets 409. Idle sessions
expire after the configured timeout and answer 404 afterwards.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from . import inmt
from .errors import MinimtError, SessionError
from .estimator import Translator


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    checkpoint: str | None = None
    static_dir: str | None = None
    max_sessions: int = 64
    session_timeout: float = 1800.0
    learn_steps: int | None = None  # None: translator default

    def __post_init__(self) -> None:
        if self.max_sessions < 1:
            raise MinimtError("max_sessions must be >= 1")


@dataclass
class ApiError(Exception):
    status: int
    code: str
    message: str


class _RWLock:
    """Multiple concurrent readers, exclusive writers; writers drain readers."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self) -> None:
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self) -> None:
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self) -> None:
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_write(self) -> None:
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class _ReadLocked:
    def __init__(self, lock: _RWLock):
        self._lock = lock

    def __enter__(self):
        self._lock.acquire_read()

    def __exit__(self, *exc):
        self._lock.release_read()


class _WriteLocked:
    def __init__(self, lock: _RWLock):
        self._lock = lock

    def __enter__(self):
        self._lock.acquire_write()

    def __exit__(self, *exc):
        self._lock.release_write()


@dataclass
class _SessionRecord:
    state: inmt.SessionState
    busy: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)


class Engine:
    """Shared server state: the translator, its lock, and live sessions."""

    def __init__(self, translator: Translator | None, config: ServerConfig | None = None):
        self.translator = translator
        self.config = config or ServerConfig()
        self.model_lock = _RWLock()
        self.sessions: dict[str, _SessionRecord] = {}
        self._sessions_mutex = threading.Lock()

    # -- session bookkeeping -------------------------------------------------

    def _purge_expired(self, now: float) -> None:
        timeout = self.config.session_timeout
        dead = [sid for sid, rec in self.sessions.items() if now - rec.last_access > timeout]
        for sid in dead:
            del self.sessions[sid]

    def add_session(self, state: inmt.SessionState) -> None:
        with self._sessions_mutex:
            now = time.monotonic()
            self._purge_expired(now)
            if len(self.sessions) >= self.config.max_sessions:
                raise ApiError(429, "too_many_sessions", "maximum number of live sessions reached")
            self.sessions[state.session_id] = _SessionRecord(state=state)

    def get_session(self, session_id: str) -> _SessionRecord:
        with self._sessions_mutex:
            now = time.monotonic()
            self._purge_expired(now)
            rec = self.sessions.get(session_id)
            if rec is None:
                raise ApiError(404, "unknown_session", "no such session (it may have expired)")
            rec.last_access = now
            return rec

    def require_model(self) -> Translator:
        if self.translator is None or getattr(self.translator, "params_", None) is None:
            raise ApiError(503, "model_loading", "no model is loaded yet")
        return self.translator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TranslateRequest(_Strict):
    source: str
    nbest: int = 1


class SessionCreateRequest(_Strict):
    source: str


class CorrectionRequest(_Strict):
    position: int
    character: str
    finish: bool = False


class AcceptRequest(_Strict):
    learn: bool = False


def create_app(translator: Translator | None = None, config: ServerConfig | None = None) -> FastAPI:
    engine = Engine(translator, config)
    app = FastAPI(title="minimt", docs_url=None, redoc_url=None)
    app.state.engine = engine

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "invalid_request", "message": str(exc.errors()[:1])},
        )

    @app.get("/health")
    def health():
        ready = engine.translator is not None and getattr(engine.translator, "params_", None) is not None
        return {"status": "ok", "model_loaded": ready}

    @app.post("/translate")
    def translate(req: TranslateRequest):
        mt = engine.require_model()
        if not req.source.strip():
            raise ApiError(400, "empty_source", "source must not be empty")
        if req.nbest < 1:
            raise ApiError(400, "invalid_request", "nbest must be >= 1")
        if req.nbest > mt.beam_size:
            raise ApiError(400, "nbest_exceeds_beam", "nbest %d exceeds beam size %d" % (req.nbest, mt.beam_size))
        with _ReadLocked(engine.model_lock):
            hyps = mt.translate_nbest(req.source, nbest=req.nbest)
        return {"hypotheses": [{"text": t, "score": s} for t, s, _ in hyps]}

    @app.post("/session")
    def create_session(req: SessionCreateRequest):
        mt = engine.require_model()
        if not req.source.strip():
            raise ApiError(400, "empty_source", "source must not be empty")
        with _ReadLocked(engine.model_lock):
            state = inmt.start_session(mt, req.source)
        engine.add_session(state)
        return {"session_id": state.session_id, "hypothesis": state.hypothesis}

    @app.post("/session/{session_id}/correction")
    def correct(session_id: str, req: CorrectionRequest):
        mt = engine.require_model()
        rec = engine.get_session(session_id)
        if rec.state.closed:
            raise ApiError(409, "session_closed", "session already accepted")
        if not 0 <= req.position <= len(rec.state.hypothesis):
            raise ApiError(422, "position_out_of_range", "position %d outside hypothesis" % req.position)
        if len(req.character) > 1 or (req.character == "" and not req.finish):
            raise ApiError(422, "invalid_character", "character must be a single character")
        if not rec.busy.acquire(blocking=False):
            raise ApiError(409, "correction_in_flight", "another correction is being processed")
        try:
            with _ReadLocked(engine.model_lock):
                inmt.apply_feedback(
                    rec.state,
                    inmt.Feedback(position=req.position, character=req.character, finish=req.finish),
                    mt,
                )
        except SessionError as exc:
            if rec.state.closed:  # lost a race against a concurrent accept
                raise ApiError(409, "session_closed", str(exc)) from exc
            raise ApiError(422, "position_out_of_range", str(exc)) from exc
        finally:
            rec.busy.release()
        return {
            "hypothesis": rec.state.hypothesis,
            "validated_prefix_len": len(rec.state.validated_prefix),
        }

    @app.post("/session/{session_id}/accept")
    def accept(session_id: str, req: AcceptRequest):
        mt = engine.require_model()
        rec = engine.get_session(session_id)
        if rec.state.closed:
            raise ApiError(409, "session_closed", "session already accepted")
        if req.learn:
            with _WriteLocked(engine.model_lock):
                final = inmt.accept_session(rec.state, mt, learn=True, ol_steps=engine.config.learn_steps)
        else:
            with _ReadLocked(engine.model_lock):
                final = inmt.accept_session(rec.state, mt, learn=False)
        return {"final": final, "ksmr_counters": rec.state.effort()}

    if engine.config.static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=engine.config.static_dir, html=True), name="webui")

    return app


def serve(app: FastAPI, host: str, port: int) -> None:  # pragma: no cover - manual entry
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")
