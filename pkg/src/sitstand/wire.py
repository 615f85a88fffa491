"""Versioned JSON wire format for trial submission and retrieval.

Field names and channel keys are part of the protocol contract and never
change within schema_version 1. parse() is strict: unknown versions, missing
or extra fields, wrong types, and unsorted sample arrays are all rejected with
the offending field path so device firmware bugs surface immediately.
"""
from __future__ import annotations

import uuid
from datetime import datetime
from typing import Any, Mapping

import numpy as np

from .acquisition import TrialPacket
from .base import SchemaViolation, canonical_json
from .sensors import CHANNELS, Calibration, Channel

SCHEMA_VERSION = 1

# JSON numbers are only exact up to 2^53; timestamps and counts must stay inside.
_MAX_SAFE_INT = 1 << 53

_PAYLOAD_FIELDS = {
    "trial_id",
    "user_id",
    "mode",
    "label",
    "started_at",
    "nominal_rate_hz",
    "calibration",
    "channels",
}


def envelope_dict(packet: TrialPacket) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "trial_id": packet.trial_id,
        "user_id": packet.user_id,
        "mode": packet.mode,
        "label": packet.label,
        "started_at": packet.started_at,
        "nominal_rate_hz": packet.nominal_rate_hz,
        "calibration": {
            ch.value: {
                "tare_counts": int(packet.calibration[ch].tare_counts),
                "scale_counts_per_kg": float(packet.calibration[ch].scale_counts_per_kg),
            }
            for ch in CHANNELS
        },
        "channels": {
            ch.value: [[int(t), int(c)] for t, c in np.asarray(packet.channels[ch])]
            for ch in CHANNELS
        },
    }
    return {"schema_version": SCHEMA_VERSION, "payload": payload}


def serialize(packet: TrialPacket) -> bytes:
    """Canonical JSON bytes for a packet; equal packets serialize to equal bytes."""
    return canonical_json(envelope_dict(packet))


def parse(data: bytes | str | Mapping[str, Any]) -> TrialPacket:
    """Validate a wire envelope and build the packet. Raises SchemaViolation."""
    import json

    if isinstance(data, (bytes, str)):
        try:
            obj = json.loads(data)
        except json.JSONDecodeError as exc:
            raise SchemaViolation("<body>", f"not valid JSON: {exc.msg}") from exc
    else:
        obj = data
    if not isinstance(obj, dict):
        raise SchemaViolation("<body>", "envelope must be a JSON object")
    extra = set(obj) - {"schema_version", "payload"}
    if extra:
        raise SchemaViolation(sorted(extra)[0], "unknown envelope field")
    version = obj.get("schema_version")
    if not _is_int(version):
        raise SchemaViolation("schema_version", "missing or not an integer")
    if version != SCHEMA_VERSION:
        raise SchemaViolation("schema_version", f"unsupported version {version}")
    payload = obj.get("payload")
    if not isinstance(payload, dict):
        raise SchemaViolation("payload", "missing or not an object")
    return packet_from_payload(payload)


def packet_from_payload(payload: Mapping[str, Any]) -> TrialPacket:
    missing = _PAYLOAD_FIELDS - set(payload)
    if missing:
        raise SchemaViolation(sorted(missing)[0], "missing")
    extra = set(payload) - _PAYLOAD_FIELDS
    if extra:
        raise SchemaViolation(sorted(extra)[0], "unknown field")

    trial_id = payload["trial_id"]
    if not isinstance(trial_id, str):
        raise SchemaViolation("trial_id", "not a string")
    try:
        uuid.UUID(trial_id)
    except ValueError:
        raise SchemaViolation("trial_id", "not a UUID") from None

    user_id = payload["user_id"]
    if not isinstance(user_id, str) or not user_id:
        raise SchemaViolation("user_id", "not a non-empty string")

    mode = payload["mode"]
    if mode not in ("train", "test"):
        raise SchemaViolation("mode", 'must be "train" or "test"')

    label = payload["label"]
    if label is not None and (not isinstance(label, str) or not label):
        raise SchemaViolation("label", "must be null or a non-empty string")
    if mode == "test" and label is not None:
        raise SchemaViolation("label", "test-mode trials must not carry a label")

    started_at = payload["started_at"]
    if not isinstance(started_at, str) or not _is_rfc3339(started_at):
        raise SchemaViolation("started_at", "not an RFC 3339 timestamp")

    rate = payload["nominal_rate_hz"]
    if not _is_int(rate) or rate not in (10, 80):
        raise SchemaViolation("nominal_rate_hz", "must be 10 or 80")

    calibration = _parse_calibration(payload["calibration"])
    channels = _parse_channels(payload["channels"])

    try:
        return TrialPacket(
            trial_id=trial_id,
            user_id=user_id,
            mode=mode,
            label=label,
            started_at=started_at,
            nominal_rate_hz=int(rate),
            channels=channels,
            calibration=calibration,
        )
    except ValueError as exc:
        raise SchemaViolation("payload", str(exc)) from exc


def _parse_calibration(obj: Any) -> dict[Channel, Calibration]:
    if not isinstance(obj, dict):
        raise SchemaViolation("calibration", "not an object")
    out: dict[Channel, Calibration] = {}
    for ch in CHANNELS:
        entry = obj.get(ch.value)
        if entry is None:
            raise SchemaViolation(f"calibration.{ch.value}", "missing")
        if not isinstance(entry, dict) or set(entry) != {"tare_counts", "scale_counts_per_kg"}:
            raise SchemaViolation(
                f"calibration.{ch.value}", "must have exactly tare_counts and scale_counts_per_kg"
            )
        tare = entry["tare_counts"]
        if not _is_int(tare) or abs(tare) >= _MAX_SAFE_INT:
            raise SchemaViolation(f"calibration.{ch.value}.tare_counts", "not an integer")
        scale = entry["scale_counts_per_kg"]
        if isinstance(scale, bool) or not isinstance(scale, (int, float)) or not scale > 0:
            raise SchemaViolation(f"calibration.{ch.value}.scale_counts_per_kg", "must be > 0")
        out[ch] = Calibration(tare_counts=int(tare), scale_counts_per_kg=float(scale))
    extra = set(obj) - {ch.value for ch in CHANNELS}
    if extra:
        raise SchemaViolation(f"calibration.{sorted(extra)[0]}", "unknown channel")
    return out


def _parse_channels(obj: Any) -> dict[Channel, np.ndarray]:
    if not isinstance(obj, dict):
        raise SchemaViolation("channels", "not an object")
    out: dict[Channel, np.ndarray] = {}
    for ch in CHANNELS:
        samples = obj.get(ch.value)
        if samples is None:
            raise SchemaViolation(f"channels.{ch.value}", "missing")
        if not isinstance(samples, list) or not samples:
            raise SchemaViolation(f"channels.{ch.value}", "must be a non-empty array")
        prev_t = None
        parsed = np.empty((len(samples), 2), dtype=np.int64)
        for i, pair in enumerate(samples):
            if not isinstance(pair, list) or len(pair) != 2:
                raise SchemaViolation(f"channels.{ch.value}[{i}]", "must be a [t_ms, counts] pair")
            t, c = pair
            if not _is_int(t) or abs(t) >= _MAX_SAFE_INT:
                raise SchemaViolation(f"channels.{ch.value}[{i}][0]", "not an integer")
            if not _is_int(c) or abs(c) >= _MAX_SAFE_INT:
                raise SchemaViolation(f"channels.{ch.value}[{i}][1]", "not an integer")
            if prev_t is not None and t <= prev_t:
                raise SchemaViolation(f"channels.{ch.value}[{i}][0]", "timestamps must strictly increase")
            prev_t = t
            parsed[i, 0] = t
            parsed[i, 1] = c
        out[ch] = parsed
    extra = set(obj) - {ch.value for ch in CHANNELS}
    if extra:
        raise SchemaViolation(f"channels.{sorted(extra)[0]}", "unknown channel")
    return out


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_rfc3339(value: str) -> bool:
    text = value.replace("Z", "+00:00") if value.endswith("Z") else value
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError:
        return False
    return parsed.tzinfo is not None
