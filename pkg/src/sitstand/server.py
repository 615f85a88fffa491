"""Trial ingestion service: train/test submission, pulls, labeling, live streaming.

Train and test run as separate services under distinct URL prefixes, so
cross-mode isolation is enforced at the routing layer rather than by query
discipline. Every successful mutation is durable (fsync'd WAL append) before
the response goes out.

The server also hosts the simulated device for operator workflows: a device
session owns the simulated gauges, answers calibration reads, runs trials in a
background thread, and feeds the /api/v1/live event stream that the operator
console renders.
"""
from __future__ import annotations

import json
import queue
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Iterator

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse

from . import wire
from .acquisition import assemble_trial, calibrate_scale, tare_channel
from .base import (
    ConflictingResubmission,
    ModeMismatch,
    SchemaViolation,
    SitStandError,
    UnknownTrial,
)
from .cohort import generate_profile, profile_to_load_curves, STRENGTH_CLASSES
from .pipeline import render_svg, resample_uniform
from .sensors import (
    CHANNELS,
    Calibration,
    Channel,
    DriftModel,
    default_calibration,
    simulate_chair,
)
from .store import TrialStore


def _error(status: int, error: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": error, "detail": detail})


@dataclass
class DeviceSession:
    session_id: str
    rate_hz: int
    seed: int
    time_scale: float
    hidden_tare: dict[Channel, int]
    hidden_scale: float
    noise_sigma: float
    calibration: dict[Channel, Calibration]
    trial_thread: threading.Thread | None = None
    trial_stop: threading.Event = field(default_factory=threading.Event)
    trial_state: dict[str, Any] = field(default_factory=dict)
    emitted_events: int = 0


class DeviceManager:
    """One simulated chair per server; owns the live-stream fanout."""

    def __init__(self, store: TrialStore):
        self.store = store
        self._lock = threading.Lock()
        self.session: DeviceSession | None = None
        self._subscribers: list[queue.Queue] = []

    # -- live stream fanout ------------------------------------------------

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=10_000)
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def broadcast(self, event: str, data: dict[str, Any]) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            try:
                q.put_nowait((event, data))
            except queue.Full:
                pass  # a stalled client loses events rather than stalling the device

    # -- session lifecycle ---------------------------------------------------

    def open_session(self, rate_hz: int, seed: int, time_scale: float) -> DeviceSession:
        with self._lock:
            if self.session is not None:
                raise SitStandError("a device session is already active")
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0xDE51]))
            session = DeviceSession(
                session_id=str(uuid.uuid4()),
                rate_hz=rate_hz,
                seed=seed,
                time_scale=time_scale,
                hidden_tare={ch: int(rng.integers(-20_000, 20_000)) for ch in CHANNELS},
                hidden_scale=Calibration().scale_counts_per_kg,
                noise_sigma=40.0,
                calibration=default_calibration(),
            )
            self.session = session
            return session

    def close_session(self) -> None:
        with self._lock:
            session = self.session
            self.session = None
        if session is not None:
            session.trial_stop.set()
            if session.trial_thread is not None and session.trial_thread.is_alive():
                session.trial_thread.join(timeout=5.0)
            self.broadcast("end", {"reason": "session-closed"})

    def require_session(self) -> DeviceSession:
        session = self.session
        if session is None:
            raise UnknownTrial("no active device session")
        return session

    # -- calibration reads ---------------------------------------------------

    def read_channel(self, session: DeviceSession, channel: Channel, n: int, load_kg: float) -> np.ndarray:
        """n raw conversions from one corner with load_kg resting on it."""
        rng = np.random.default_rng(
            np.random.SeedSequence([session.seed, 0xCA1, list(CHANNELS).index(channel), int(load_kg * 1000), n])
        )
        ideal = load_kg * session.hidden_scale + session.hidden_tare[channel]
        noise = rng.normal(0.0, session.noise_sigma, size=n)
        counts = np.rint(ideal + noise).astype(np.int64)
        t = np.arange(n, dtype=np.int64) * int(1000 / session.rate_hz)
        return np.column_stack([t, counts])

    def tare(self, channel: Channel, n: int) -> int:
        session = self.require_session()
        stream = self.read_channel(session, channel, n, load_kg=0.0)
        tare = tare_channel(stream, n)
        old = session.calibration[channel]
        session.calibration[channel] = Calibration(tare_counts=tare, scale_counts_per_kg=old.scale_counts_per_kg)
        return tare

    def scale(self, channel: Channel, known_mass_kg: float, n: int) -> float:
        session = self.require_session()
        stream = self.read_channel(session, channel, n, load_kg=known_mass_kg)
        tare = session.calibration[channel].tare_counts
        scale = calibrate_scale(stream, tare, known_mass_kg, n)
        session.calibration[channel] = Calibration(tare_counts=tare, scale_counts_per_kg=scale)
        return scale

    # -- trials ---------------------------------------------------------------

    def start_trial(
        self,
        user_id: str,
        mode: str,
        duration_s: float,
        label: str | None,
        strength: str,
        body_weight_kg: float,
        seed: int,
    ) -> str:
        session = self.require_session()
        if session.trial_thread is not None and session.trial_thread.is_alive():
            raise SitStandError("a trial is already running")
        trial_id = str(uuid.uuid4())
        session.trial_stop.clear()
        session.trial_state = {"trial_id": trial_id, "status": "running", "user_id": user_id, "mode": mode}

        def run() -> None:
            self._run_trial(session, trial_id, user_id, mode, duration_s, label, strength, body_weight_kg, seed)

        session.trial_thread = threading.Thread(target=run, name=f"trial-{trial_id[:8]}", daemon=True)
        session.trial_thread.start()
        return trial_id

    def _run_trial(
        self,
        session: DeviceSession,
        trial_id: str,
        user_id: str,
        mode: str,
        duration_s: float,
        label: str | None,
        strength: str,
        body_weight_kg: float,
        seed: int,
    ) -> None:
        profile = generate_profile(strength, body_weight_kg, seed, duration_s=duration_s)
        curves = profile_to_load_curves(profile)
        capture = simulate_chair(
            curves,
            session.calibration,
            DriftModel(drift_rate_counts_per_s=5.0, noise_sigma_counts=session.noise_sigma),
            duration_s=duration_s,
            rate_hz=session.rate_hz,
            seed=seed,
        )
        corrected = capture.corrected()

        events: list[tuple[int, Channel, float]] = []
        for ch in CHANNELS:
            cal = session.calibration[ch]
            stream = corrected[ch]
            kg = (stream[:, 1].astype(float) - cal.tare_counts) / cal.scale_counts_per_kg
            events.extend((int(t), ch, float(v)) for t, v in zip(stream[:, 0], kg))
        events.sort(key=lambda e: (e[0], e[1].value))

        start = time.monotonic()
        emitted = 0
        for t_ms, ch, kg in events:
            if session.trial_stop.is_set():
                break
            target = start + (t_ms / 1000.0) / session.time_scale
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            self.broadcast("sample", {"t_ms": t_ms, "channel": ch.value, "kg": round(kg, 6)})
            emitted += 1
        session.emitted_events += emitted

        stopped_early = session.trial_stop.is_set()
        try:
            packet = assemble_trial(
                corrected,
                trial_id=trial_id,
                user_id=user_id,
                mode=mode,
                label=label,
                started_at=datetime.now(timezone.utc).isoformat(timespec="seconds").replace("+00:00", "Z"),
                nominal_rate_hz=session.rate_hz,
                calibration=session.calibration,
            )
            self.store.ingest(wire.envelope_dict(packet), mode)
            session.trial_state = {
                "trial_id": trial_id,
                "status": "stopped" if stopped_early else "complete",
                "user_id": user_id,
                "mode": mode,
            }
            self.broadcast("trial-complete", {"trial_id": trial_id, "emitted_events": emitted})
        except SitStandError as exc:
            session.trial_state = {"trial_id": trial_id, "status": "failed", "detail": str(exc)}
            self.broadcast("trial-failed", {"trial_id": trial_id, "detail": str(exc)})

    def stop_trial(self) -> dict[str, Any]:
        session = self.require_session()
        session.trial_stop.set()
        if session.trial_thread is not None:
            session.trial_thread.join(timeout=10.0)
        return session.trial_state


def create_app(store_path: str) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        app.state.device.close_session()
        app.state.store.close()

    app = FastAPI(title="sitstand ingestion service", lifespan=lifespan)
    app.state.store = TrialStore(store_path)
    app.state.device = DeviceManager(app.state.store)

    # the operator console is served separately; security stays out of scope
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])

    @app.middleware("http")
    async def request_log(request: Request, call_next):
        started = time.monotonic()
        response = await call_next(request)
        print(
            json.dumps(
                {
                    "ts": datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z"),
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "duration_ms": round((time.monotonic() - started) * 1000, 2),
                },
                sort_keys=True,
            ),
            flush=True,
        )
        return response

    @app.get("/api/v1/healthz")
    async def healthz():
        return {"status": "ok", "trials": app.state.store.count()}

    # -- submission ----------------------------------------------------------

    async def _submit(request: Request, endpoint_mode: str) -> Response:
        body = await request.body()
        try:
            envelope = json.loads(body)
        except json.JSONDecodeError as exc:
            return _error(400, "SchemaViolation", f"<body>: not valid JSON: {exc.msg}")
        try:
            stored, created = app.state.store.ingest(envelope, endpoint_mode)
        except SchemaViolation as exc:
            return _error(400, "SchemaViolation", str(exc))
        except ModeMismatch as exc:
            return _error(409, "ModeMismatch", str(exc))
        except ConflictingResubmission as exc:
            return _error(409, "ConflictingResubmission", str(exc))
        return JSONResponse(
            status_code=201 if created else 200,
            content={"trial_id": stored.trial_id, "revision": stored.revision},
        )

    @app.post("/api/v1/train/trials")
    async def submit_train(request: Request):
        return await _submit(request, "train")

    @app.post("/api/v1/test/trials")
    async def submit_test(request: Request):
        return await _submit(request, "test")

    # -- pulls -----------------------------------------------------------------

    async def _query(request: Request, endpoint_mode: str) -> Response:
        params = request.query_params
        known = {"user_id", "label", "after", "status", "limit", "offset"}
        unknown = set(params) - known
        if unknown:
            return _error(400, "BadQuery", f"unknown query parameter {sorted(unknown)[0]!r}")
        try:
            limit = int(params.get("limit", "100"))
            offset = int(params.get("offset", "0"))
        except ValueError:
            return _error(400, "BadQuery", "limit and offset must be integers")
        status = params.get("status")
        if status is not None and status not in ("labeled", "unlabeled"):
            return _error(400, "BadQuery", "status must be labeled or unlabeled")
        try:
            rows = app.state.store.query(
                mode=endpoint_mode,
                user_id=params.get("user_id"),
                label=params.get("label"),
                after=params.get("after"),
                status=status,
                limit=limit,
                offset=offset,
            )
        except ValueError as exc:
            return _error(400, "BadQuery", str(exc))
        return JSONResponse(status_code=200, content=[t.to_api_dict() for t in rows])

    @app.get("/api/v1/train/trials")
    async def query_train(request: Request):
        return await _query(request, "train")

    @app.get("/api/v1/test/trials")
    async def query_test(request: Request):
        return await _query(request, "test")

    async def _get_one(endpoint_mode: str, trial_id: str) -> Response:
        try:
            trial = app.state.store.get(trial_id)
        except UnknownTrial:
            return _error(404, "UnknownTrial", trial_id)
        if trial.mode != endpoint_mode:
            return _error(404, "UnknownTrial", trial_id)  # invisible across services
        return JSONResponse(status_code=200, content=trial.to_api_dict())

    @app.get("/api/v1/train/trials/{trial_id}")
    async def get_train(trial_id: str):
        return await _get_one("train", trial_id)

    @app.get("/api/v1/test/trials/{trial_id}")
    async def get_test(trial_id: str):
        return await _get_one("test", trial_id)

    async def _plot(endpoint_mode: str, trial_id: str) -> Response:
        try:
            trial = app.state.store.get(trial_id)
        except UnknownTrial:
            return _error(404, "UnknownTrial", trial_id)
        if trial.mode != endpoint_mode:
            return _error(404, "UnknownTrial", trial_id)
        packet = wire.packet_from_payload(trial.to_api_dict()["payload"])
        svg = render_svg(resample_uniform(packet))
        return Response(content=svg, media_type="image/svg+xml")

    @app.get("/api/v1/train/trials/{trial_id}/plot.svg")
    async def plot_train(trial_id: str):
        return await _plot("train", trial_id)

    @app.get("/api/v1/test/trials/{trial_id}/plot.svg")
    async def plot_test(trial_id: str):
        return await _plot("test", trial_id)

    # -- labeling ---------------------------------------------------------------

    @app.put("/api/v1/train/trials/{trial_id}/label")
    async def put_label(trial_id: str, request: Request):
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return _error(400, "SchemaViolation", "<body>: not valid JSON")
        if not isinstance(body, dict) or set(body) != {"label"}:
            return _error(400, "SchemaViolation", 'body must be {"label": "..."}')
        try:
            trial = app.state.store.set_label(trial_id, body["label"])
        except SchemaViolation as exc:
            return _error(400, "SchemaViolation", str(exc))
        except UnknownTrial:
            return _error(404, "UnknownTrial", trial_id)
        except ModeMismatch as exc:
            return _error(409, "ModeMismatch", str(exc))
        return JSONResponse(
            status_code=200,
            content={"trial_id": trial.trial_id, "revision": trial.revision, "label": trial.label},
        )

    # -- live stream ---------------------------------------------------------------

    @app.get("/api/v1/live")
    async def live(request: Request):
        device: DeviceManager = app.state.device

        def sse(event: str, data: dict[str, Any]) -> str:
            return f"event: {event}\ndata: {json.dumps(data, sort_keys=True)}\n\n"

        if device.session is None:
            def empty() -> Iterator[str]:
                yield sse("end", {"reason": "no-session"})

            return StreamingResponse(empty(), media_type="text/event-stream")

        q = device.subscribe()

        def stream() -> Iterator[str]:
            try:
                yield sse("hello", {"session_id": device.session.session_id if device.session else None})
                while True:
                    try:
                        event, data = q.get(timeout=1.0)
                    except queue.Empty:
                        if device.session is None:
                            yield sse("end", {"reason": "session-closed"})
                            return
                        yield ": keepalive\n\n"
                        continue
                    yield sse(event, data)
                    if event == "end":
                        return
            finally:
                device.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # -- simulated device control ---------------------------------------------------

    @app.post("/api/v1/device/session")
    async def open_session(request: Request):
        body = await _json_body(request)
        if body is None:
            body = {}
        rate = body.get("rate_hz", 10)
        if rate not in (10, 80):
            return _error(400, "BadRequest", "rate_hz must be 10 or 80")
        seed = body.get("seed", 0)
        time_scale = float(body.get("time_scale", 1.0))
        if time_scale <= 0:
            return _error(400, "BadRequest", "time_scale must be positive")
        try:
            session = app.state.device.open_session(int(rate), int(seed), time_scale)
        except SitStandError as exc:
            return _error(409, "SessionActive", str(exc))
        return JSONResponse(status_code=201, content={"session_id": session.session_id, "rate_hz": session.rate_hz})

    @app.get("/api/v1/device/session")
    async def get_session():
        session = app.state.device.session
        if session is None:
            return _error(404, "NoSession", "no active device session")
        return {
            "session_id": session.session_id,
            "rate_hz": session.rate_hz,
            "time_scale": session.time_scale,
            "calibration": {
                ch.value: {
                    "tare_counts": session.calibration[ch].tare_counts,
                    "scale_counts_per_kg": session.calibration[ch].scale_counts_per_kg,
                }
                for ch in CHANNELS
            },
            "trial": session.trial_state or None,
            "emitted_events": session.emitted_events,
        }

    @app.delete("/api/v1/device/session")
    async def close_session():
        app.state.device.close_session()
        return {"status": "closed"}

    @app.post("/api/v1/device/calibrate/tare")
    async def device_tare(request: Request):
        body = await _json_body(request)
        channel = _channel_of(body)
        if channel is None:
            return _error(400, "BadRequest", "channel must be one of the four corner ids")
        n = int(body.get("n", 20))
        try:
            tare = app.state.device.tare(channel, n)
        except UnknownTrial as exc:
            return _error(409, "NoSession", str(exc))
        except SitStandError as exc:
            return _error(400, "CalibrationFailed", str(exc))
        return {"channel": channel.value, "tare_counts": tare}

    @app.post("/api/v1/device/calibrate/scale")
    async def device_scale(request: Request):
        body = await _json_body(request)
        channel = _channel_of(body)
        if channel is None:
            return _error(400, "BadRequest", "channel must be one of the four corner ids")
        mass = body.get("known_mass_kg")
        if not isinstance(mass, (int, float)) or mass <= 0:
            return _error(400, "BadRequest", "known_mass_kg must be positive")
        n = int(body.get("n", 20))
        try:
            scale = app.state.device.scale(channel, float(mass), n)
        except UnknownTrial as exc:
            return _error(409, "NoSession", str(exc))
        except SitStandError as exc:
            return _error(400, "CalibrationFailed", str(exc))
        return {"channel": channel.value, "scale_counts_per_kg": scale}

    @app.post("/api/v1/device/trial/start")
    async def trial_start(request: Request):
        body = await _json_body(request)
        if not body or not isinstance(body.get("user_id"), str) or not body["user_id"]:
            return _error(400, "BadRequest", "user_id is required")
        mode = body.get("mode", "train")
        if mode not in ("train", "test"):
            return _error(400, "BadRequest", "mode must be train or test")
        label = body.get("label")
        if label is not None and (not isinstance(label, str) or not label):
            return _error(400, "BadRequest", "label must be a non-empty string when present")
        if mode == "test" and label is not None:
            return _error(409, "ModeMismatch", "test trials must not carry a label")
        strength = body.get("strength", "moderate")
        if strength not in STRENGTH_CLASSES:
            return _error(400, "BadRequest", f"strength must be one of {STRENGTH_CLASSES}")
        duration_s = float(body.get("duration_s", 30.0))
        if duration_s <= 0:
            return _error(400, "BadRequest", "duration_s must be positive")
        try:
            trial_id = app.state.device.start_trial(
                user_id=body["user_id"],
                mode=mode,
                duration_s=duration_s,
                label=label,
                strength=strength,
                body_weight_kg=float(body.get("body_weight_kg", 75.0)),
                seed=int(body.get("seed", 0)),
            )
        except UnknownTrial as exc:
            return _error(409, "NoSession", str(exc))
        except SitStandError as exc:
            return _error(409, "TrialRunning", str(exc))
        return JSONResponse(status_code=202, content={"trial_id": trial_id})

    @app.post("/api/v1/device/trial/stop")
    async def trial_stop():
        try:
            state = app.state.device.stop_trial()
        except UnknownTrial as exc:
            return _error(409, "NoSession", str(exc))
        return {"trial": state}

    return app


async def _json_body(request: Request) -> dict[str, Any] | None:
    body = await request.body()
    if not body:
        return {}
    try:
        obj = json.loads(body)
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None


def _channel_of(body: dict[str, Any] | None) -> Channel | None:
    if not body:
        return None
    try:
        return Channel(body.get("channel"))
    except ValueError:
        return None
