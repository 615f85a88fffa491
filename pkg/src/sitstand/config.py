"""Runtime configuration with flags > file > environment > built-in defaults.

The config file is plain key = value text, one setting per line, # comments
allowed. Keys match the Config field names.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Any, Mapping

ENV_ADDR = "STS_ADDR"
ENV_STORE = "STS_STORE"


@dataclass
class Config:
    addr: str = "127.0.0.1:8000"
    store: str = "trials.wal"
    rate_hz: int = 10
    duration_s: float = 30.0
    seated_fraction: float = 0.60
    standing_fraction: float = 0.15
    dwell_ms: float = 300.0
    n_neighbors: int = 1
    band_fraction: float = 0.1
    channel_mode: str = "dependent"
    seed: int = 0

    @property
    def server_url(self) -> str:
        return f"http://{self.addr}"


def parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def load_config(
    config_path: str | None = None,
    overrides: Mapping[str, Any] | None = None,
    env: Mapping[str, str] | None = None,
) -> Config:
    """Resolve a Config; overrides hold explicitly-passed CLI flags only."""
    env = os.environ if env is None else env
    cfg = Config()
    if env.get(ENV_ADDR):
        cfg.addr = env[ENV_ADDR]
    if env.get(ENV_STORE):
        cfg.store = env[ENV_STORE]
    if config_path:
        file_values = parse_config_file(config_path)
        known = {f.name: f.type for f in fields(Config)}
        for key, raw in file_values.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, _coerce(raw, getattr(cfg, key)))
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def _coerce(raw: str, current: Any) -> Any:
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw
