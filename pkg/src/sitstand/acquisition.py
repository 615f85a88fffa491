"""Microcontroller emulation: per-channel sampling clocks, calibration flows, trial packaging.

The four ADCs free-run on their own crystals, so even at the same nominal rate
the channels drift apart: each channel's true rate is nominal × (1 + u) with u
drawn uniformly from ±jitter_fraction once per trial, plus an independent phase
offset. Samples are timestamped on (simulated) arrival by the channel's own
clock; nothing is snapped to a shared grid here — alignment is the pipeline's
job.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple

import numpy as np

from .base import EmptyChannel, InsufficientSamples, NonPositiveScale, round_half_away
from .sensors import CHANNELS, Calibration, Channel


class RawSample(NamedTuple):
    t_ms: int
    counts: int


@dataclass(frozen=True)
class SamplerConfig:
    nominal_rate_hz: int = 10
    jitter_fraction: float = 0.02
    phase_offsets_ms: dict[Channel, float] | None = None

    def __post_init__(self):
        if self.nominal_rate_hz not in (10, 80):
            raise ValueError("nominal_rate_hz must be 10 or 80")
        if not 0.0 <= self.jitter_fraction < 0.05:
            raise ValueError("jitter_fraction must be in [0, 0.05)")


def sampler_ticks(
    config: SamplerConfig,
    duration_s: float,
    rng: np.random.Generator,
) -> dict[Channel, np.ndarray]:
    """Integer-millisecond tick times for each channel's independent clock.

    Ticks fall at phase + k/rate_channel for k = 0, 1, ... strictly below the
    trial duration. Draw order over channels is fixed, so a given rng state
    always yields the same clocks.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    duration_ms = duration_s * 1000.0
    ticks: dict[Channel, np.ndarray] = {}
    for ch in CHANNELS:
        u = rng.uniform(-config.jitter_fraction, config.jitter_fraction) if config.jitter_fraction > 0 else 0.0
        rate = config.nominal_rate_hz * (1.0 + u)
        period_ms = 1000.0 / rate
        if config.phase_offsets_ms is not None:
            phase = float(config.phase_offsets_ms.get(ch, 0.0))
        else:
            phase = rng.uniform(0.0, period_ms)
        n = int(math.ceil((duration_ms - phase) / period_ms))
        t = phase + period_ms * np.arange(max(n, 0))
        t = t[t < duration_ms]
        ticks[ch] = np.rint(t).astype(np.int64)
    return ticks


def run_samplers(
    sources: Mapping[Channel, Callable[[int], int]],
    config: SamplerConfig,
    duration_s: float,
    seed: int = 0,
) -> dict[Channel, np.ndarray]:
    """Sample each channel source on its own jittered clock.

    Returns per-channel [n, 2] arrays of (t_ms, counts). Channels end up
    mutually unaligned by construction; with jitter 0 and equal phases they
    share identical tick grids.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC10C]))
    ticks = sampler_ticks(config, duration_s, rng)
    out: dict[Channel, np.ndarray] = {}
    for ch in CHANNELS:
        source = sources[ch]
        counts = np.fromiter((int(source(int(t))) for t in ticks[ch]), dtype=np.int64, count=len(ticks[ch]))
        out[ch] = np.column_stack([ticks[ch], counts]).astype(np.int64)
    return out


def tare_channel(stream: np.ndarray, n: int = 10) -> int:
    """Zero-load offset: mean of the first n corrected readings, rounded half away from zero.

    The chair must be unloaded while these readings are taken.
    """
    counts = _counts_column(stream)
    if n < 1:
        raise ValueError("n must be >= 1")
    if counts.size < n:
        raise InsufficientSamples(f"need {n} readings, have {counts.size}")
    return round_half_away(float(np.mean(counts[:n])))


def calibrate_scale(stream: np.ndarray, tare_counts: int, known_mass_kg: float, n: int = 10) -> float:
    """Counts-per-kg from a known mass on the corner: (mean(n readings) − tare) / mass."""
    if known_mass_kg <= 0:
        raise ValueError("known_mass_kg must be positive")
    counts = _counts_column(stream)
    if counts.size < n:
        raise InsufficientSamples(f"need {n} readings, have {counts.size}")
    scale = (float(np.mean(counts[:n])) - tare_counts) / known_mass_kg
    if scale <= 0:
        raise NonPositiveScale(
            f"computed {scale:.3f} counts/kg; check that the mass is on the right corner"
        )
    return scale


def _counts_column(stream: np.ndarray) -> np.ndarray:
    arr = np.asarray(stream)
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr[:, 1]
    if arr.ndim == 1:
        return arr
    raise ValueError("stream must be 1-D counts or [n, 2] (t_ms, counts)")


@dataclass(eq=False)
class TrialPacket:
    """One recording session, ready for the wire.

    Channels hold corrected (drift-cancelled) counts as [n, 2] int arrays of
    (t_ms, counts) with t_ms rebased to the trial window.
    """

    trial_id: str
    user_id: str
    mode: str
    label: str | None
    started_at: str
    nominal_rate_hz: int
    channels: dict[Channel, np.ndarray]
    calibration: dict[Channel, Calibration]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in ("train", "test"):
            raise ValueError(f"mode must be 'train' or 'test', got {self.mode!r}")
        if self.mode == "test" and self.label is not None:
            raise ValueError("test-mode trials must not carry a label")
        if self.nominal_rate_hz not in (10, 80):
            raise ValueError("nominal_rate_hz must be 10 or 80")
        for ch in CHANNELS:
            if ch not in self.channels:
                raise ValueError(f"missing channel {ch.value}")
            if ch not in self.calibration:
                raise ValueError(f"missing calibration for {ch.value}")
            stream = np.asarray(self.channels[ch])
            if stream.size == 0:
                raise ValueError(f"channel {ch.value} is empty")
            if stream.ndim != 2 or stream.shape[1] != 2:
                raise ValueError(f"channel {ch.value} must be [n, 2] (t_ms, counts)")
            t = stream[:, 0]
            if np.any(np.diff(t) <= 0):
                raise ValueError(f"channel {ch.value} timestamps must strictly increase")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrialPacket):
            return NotImplemented
        return (
            self.trial_id == other.trial_id
            and self.user_id == other.user_id
            and self.mode == other.mode
            and self.label == other.label
            and self.started_at == other.started_at
            and self.nominal_rate_hz == other.nominal_rate_hz
            and all(np.array_equal(self.channels[ch], other.channels[ch]) for ch in CHANNELS)
            and all(self.calibration[ch] == other.calibration[ch] for ch in CHANNELS)
        )

    def duration_ms(self) -> int:
        return int(max(int(self.channels[ch][-1, 0]) for ch in CHANNELS))


def assemble_trial(
    streams: Mapping[Channel, np.ndarray],
    *,
    trial_id: str,
    user_id: str,
    mode: str,
    started_at: str,
    nominal_rate_hz: int,
    calibration: Mapping[Channel, Calibration],
    label: str | None = None,
    window_ms: tuple[float, float] | None = None,
) -> TrialPacket:
    """Cut streams to the window [t0, t1), rebase timestamps to t0, and package.

    Raises EmptyChannel when any channel has no samples inside the window.
    """
    cut: dict[Channel, np.ndarray] = {}
    for ch in CHANNELS:
        stream = np.asarray(streams[ch], dtype=np.int64)
        if window_ms is not None:
            t0, t1 = window_ms
            mask = (stream[:, 0] >= t0) & (stream[:, 0] < t1)
            stream = stream[mask]
        else:
            t0 = 0
        if stream.shape[0] == 0:
            raise EmptyChannel(f"channel {ch.value} has no samples in the window")
        rebased = stream.copy()
        rebased[:, 0] -= int(t0)
        cut[ch] = rebased
    return TrialPacket(
        trial_id=trial_id,
        user_id=user_id,
        mode=mode,
        label=label,
        started_at=started_at,
        nominal_rate_hz=nominal_rate_hz,
        channels=cut,
        calibration={ch: calibration[ch] for ch in CHANNELS},
    )
