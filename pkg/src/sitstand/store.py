"""Embedded durable trial store with a write-ahead discipline.

One append-only JSONL log holds every accepted mutation (trial ingests and
label changes). Each record is fsync'd before the caller is allowed to
acknowledge, so anything a client saw a 201 for survives a crash. Opening a
store replays the log to rebuild the in-memory index; a torn final line (crash
mid-append, never acknowledged) is dropped.
"""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .base import (
    ConflictingResubmission,
    ModeMismatch,
    SchemaViolation,
    UnknownTrial,
    canonical_json,
)
from . import wire


@dataclass
class StoredTrial:
    trial_id: str
    user_id: str
    mode: str
    label: str | None
    received_at: str
    revision: int
    submitted_bytes: bytes
    payload: dict[str, Any]

    @property
    def status(self) -> str:
        return "labeled" if self.label is not None else "unlabeled"

    def to_api_dict(self) -> dict[str, Any]:
        payload = dict(self.payload)
        payload["label"] = self.label
        return {
            "schema_version": wire.SCHEMA_VERSION,
            "payload": payload,
            "received_at": self.received_at,
            "revision": self.revision,
            "status": self.status,
        }


class TrialStore:
    """File-backed trial store; safe for concurrent use from many threads."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._trials: dict[str, StoredTrial] = {}
        self._replay()
        self._fh = open(self.path, "ab")

    def _replay(self) -> None:
        if not self.path.exists():
            return
        raw = self.path.read_bytes()
        if not raw:
            return
        lines = raw.split(b"\n")
        for i, line in enumerate(lines):
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                if all(not rest for rest in lines[i + 1 :]):
                    break  # torn tail from a crash mid-append; never acknowledged
                raise
            self._apply(record)

    def _apply(self, record: dict[str, Any]) -> None:
        kind = record.get("rec")
        if kind == "trial":
            envelope = record["envelope"]
            payload = envelope["payload"]
            trial = StoredTrial(
                trial_id=payload["trial_id"],
                user_id=payload["user_id"],
                mode=payload["mode"],
                label=payload["label"],
                received_at=record["received_at"],
                revision=1,
                submitted_bytes=canonical_json(envelope),
                payload=payload,
            )
            self._trials[trial.trial_id] = trial
        elif kind == "label":
            trial = self._trials[record["trial_id"]]
            trial.label = record["label"]
            trial.revision += 1
        else:
            raise ValueError(f"unknown record kind {kind!r}")

    def _append(self, record: dict[str, Any]) -> None:
        self._fh.write(canonical_json(record) + b"\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def ingest(self, envelope: dict[str, Any], endpoint_mode: str) -> tuple[StoredTrial, bool]:
        """Validate, persist, and index a submitted envelope.

        Returns (stored, created). Identical resubmission of a known trial_id
        is a no-op; a different payload under the same id is rejected.
        """
        packet = wire.parse(envelope)  # full schema validation with field paths
        if packet.mode != endpoint_mode:
            raise ModeMismatch(
                f"{packet.mode}-mode packet submitted to the {endpoint_mode} service"
            )
        submitted = canonical_json(envelope)
        with self._lock:
            existing = self._trials.get(packet.trial_id)
            if existing is not None:
                if existing.submitted_bytes == submitted:
                    return existing, False
                raise ConflictingResubmission(
                    f"trial {packet.trial_id} already stored with a different payload"
                )
            received_at = _utc_now()
            record = {"rec": "trial", "received_at": received_at, "envelope": json.loads(submitted)}
            self._append(record)
            self._apply(record)
            return self._trials[packet.trial_id], True

    def set_label(self, trial_id: str, label: str) -> StoredTrial:
        if not isinstance(label, str) or not label:
            raise SchemaViolation("label", "must be a non-empty string")
        with self._lock:
            trial = self._trials.get(trial_id)
            if trial is None:
                raise UnknownTrial(trial_id)
            if trial.mode != "train":
                raise ModeMismatch("only train-mode trials can be labeled")
            record = {"rec": "label", "trial_id": trial_id, "label": label, "labeled_at": _utc_now()}
            self._append(record)
            self._apply(record)
            return trial

    def get(self, trial_id: str) -> StoredTrial:
        with self._lock:
            trial = self._trials.get(trial_id)
            if trial is None:
                raise UnknownTrial(trial_id)
            return trial

    def query(
        self,
        mode: str,
        user_id: str | None = None,
        label: str | None = None,
        after: str | None = None,
        status: str | None = None,
        limit: int = 100,
        offset: int = 0,
    ) -> list[StoredTrial]:
        """Conjunctive filters, ordered by received_at then trial_id."""
        if limit < 0 or offset < 0:
            raise ValueError("limit and offset must be non-negative")
        if after is not None:
            _parse_rfc3339(after)  # raises ValueError on malformed input
        with self._lock:
            rows = [t for t in self._trials.values() if t.mode == mode]
        if user_id is not None:
            rows = [t for t in rows if t.user_id == user_id]
        if label is not None:
            rows = [t for t in rows if t.label == label]
        if status is not None:
            rows = [t for t in rows if t.status == status]
        if after is not None:
            cutoff = _parse_rfc3339(after)
            rows = [t for t in rows if _parse_rfc3339(t.received_at) > cutoff]
        rows.sort(key=lambda t: (t.received_at, t.trial_id))
        return rows[offset : offset + limit]

    def count(self) -> int:
        with self._lock:
            return len(self._trials)

    def close(self) -> None:
        self._fh.close()


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def _parse_rfc3339(value: str) -> datetime:
    text = value.replace("Z", "+00:00") if value.endswith("Z") else value
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        raise ValueError("timestamp must carry a UTC offset")
    return parsed
