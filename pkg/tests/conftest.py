from __future__ import annotations

import socket
import threading
import uuid

import numpy as np
import pytest

from sitstand.acquisition import TrialPacket
from sitstand.sensors import CHANNELS, Calibration


def make_packet(
    trial_id: str | None = None,
    user_id: str = "U1",
    mode: str = "train",
    label: str | None = "weak",
    started_at: str = "2026-01-01T00:00:00Z",
    nominal_rate_hz: int = 10,
    channels: dict | None = None,
    calibration: dict | None = None,
) -> TrialPacket:
    """Minimal one-sample-per-channel packet with overridable pieces."""
    if channels is None:
        channels = {ch: np.array([[0, 100 * (i + 1)], [100, 110 * (i + 1)]]) for i, ch in enumerate(CHANNELS)}
    if calibration is None:
        calibration = {ch: Calibration(tare_counts=0, scale_counts_per_kg=400.0) for ch in CHANNELS}
    if mode == "test":
        label = None
    return TrialPacket(
        trial_id=trial_id or str(uuid.uuid4()),
        user_id=user_id,
        mode=mode,
        label=label,
        started_at=started_at,
        nominal_rate_hz=nominal_rate_hz,
        channels=channels,
        calibration=calibration,
    )


def random_packet(rng: np.random.Generator) -> TrialPacket:
    """A structurally valid packet with randomized content, for round-trip fuzzing."""
    n_samples = int(rng.integers(1, 40))
    mode = "train" if rng.random() < 0.5 else "test"
    label = None
    if mode == "train" and rng.random() < 0.7:
        label = str(rng.choice(["weak", "moderate", "strong"]))
    channels = {}
    for ch in CHANNELS:
        n = n_samples + int(rng.integers(0, 5))
        t = np.cumsum(rng.integers(1, 200, size=n))
        counts = rng.integers(-(2**23), 2**23 - 1, size=n)
        channels[ch] = np.column_stack([t, counts]).astype(np.int64)
    calibration = {
        ch: Calibration(
            tare_counts=int(rng.integers(-10_000, 10_000)),
            scale_counts_per_kg=float(rng.uniform(10.0, 1e6)),
        )
        for ch in CHANNELS
    }
    return TrialPacket(
        trial_id=str(uuid.UUID(int=int(rng.integers(0, 2**63)))),
        user_id=f"U{int(rng.integers(1, 40))}",
        mode=mode,
        label=label,
        started_at=f"2026-01-01T{int(rng.integers(0, 24)):02d}:00:00Z",
        nominal_rate_hz=int(rng.choice([10, 80])),
        channels=channels,
        calibration=calibration,
    )


@pytest.fixture
def app(tmp_path):
    from sitstand.server import create_app

    return create_app(str(tmp_path / "trials.wal"))


@pytest.fixture
def client(app):
    from fastapi.testclient import TestClient

    with TestClient(app) as c:
        yield c


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class LiveServer:
    """uvicorn in a thread, for code paths that need a real URL (CLI, SSE pacing)."""

    def __init__(self, store_path: str):
        import uvicorn

        from sitstand.server import create_app

        self.port = free_port()
        self.url = f"http://127.0.0.1:{self.port}"
        self.app = create_app(store_path)
        config = uvicorn.Config(self.app, host="127.0.0.1", port=self.port, log_level="error")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def start(self) -> "LiveServer":
        import time

        import httpx

        self.thread.start()
        for _ in range(200):
            try:
                httpx.get(f"{self.url}/api/v1/healthz", timeout=1.0)
                return self
            except httpx.HTTPError:
                time.sleep(0.05)
        raise RuntimeError("live server did not come up")

    def stop(self) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture
def live_server(tmp_path):
    server = LiveServer(str(tmp_path / "live.wal")).start()
    yield server
    server.stop()
