"""Strain-gauge channel model: calibration math, ADC quantization, drift cancellation.

Each chair corner carries one load-bearing gauge wired differentially against an
unloaded reference gauge on the same ADC, so a common environmental drift term
subtracts out of the corrected reading. The simulator reproduces that wiring:
one drift trajectory per pair, independent measurement noise on the loaded side
only (the reference sits at constant zero strain), and 24-bit saturating
quantization on both raw streams.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Protocol

import numpy as np

from .base import OverRange


class Channel(str, Enum):
    FRONT_LEFT = "front_left"
    FRONT_RIGHT = "front_right"
    REAR_LEFT = "rear_left"
    REAR_RIGHT = "rear_right"


CHANNELS: tuple[Channel, ...] = (
    Channel.FRONT_LEFT,
    Channel.FRONT_RIGHT,
    Channel.REAR_LEFT,
    Channel.REAR_RIGHT,
)

DEFAULT_MAX_LOAD_KG = 50.0
DEFAULT_RESOLUTION_BITS = 24

# Full positive 24-bit range at 25 kg leaves half the rated range as headroom.
DEFAULT_SCALE_COUNTS_PER_KG = 335_544.0


@dataclass(frozen=True)
class GaugeChannel:
    """One load-bearing gauge position on the chair."""

    channel_id: Channel
    max_load_kg: float = DEFAULT_MAX_LOAD_KG
    resolution_bits: int = DEFAULT_RESOLUTION_BITS
    nominal_rate_hz: int = 10

    def __post_init__(self):
        if self.max_load_kg <= 0:
            raise ValueError("max_load_kg must be positive")
        if not 8 <= self.resolution_bits <= 32:
            raise ValueError("resolution_bits must be in [8, 32]")
        if self.nominal_rate_hz not in (10, 80):
            raise ValueError("nominal_rate_hz must be 10 or 80")


@dataclass(frozen=True)
class Calibration:
    """Affine counts→kg map: kg = (counts − tare) / scale."""

    tare_counts: int = 0
    scale_counts_per_kg: float = DEFAULT_SCALE_COUNTS_PER_KG

    def __post_init__(self):
        if self.scale_counts_per_kg <= 0:
            raise ValueError("scale_counts_per_kg must be positive")


@dataclass(frozen=True)
class DriftModel:
    """Additive slow environmental trend plus white measurement noise, in counts."""

    drift_rate_counts_per_s: float = 0.0
    noise_sigma_counts: float = 0.0

    def __post_init__(self):
        if self.noise_sigma_counts < 0:
            raise ValueError("noise_sigma_counts must be >= 0")


def counts_range(bits: int) -> tuple[int, int]:
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def counts_to_kg(
    raw: int | np.ndarray,
    cal: Calibration,
    max_load_kg: float = DEFAULT_MAX_LOAD_KG,
) -> float | np.ndarray:
    """Convert raw counts to kilograms; negative values (noise around zero) pass through.

    Raises OverRange when the magnitude exceeds the gauge's rated load, which
    signals a gauge driven past its rating rather than a math error.
    """
    kg = (np.asarray(raw, dtype=float) - cal.tare_counts) / cal.scale_counts_per_kg
    if np.any(np.abs(kg) > max_load_kg):
        worst = float(np.max(np.abs(kg)))
        raise OverRange(f"reading of {worst:.2f} kg exceeds the {max_load_kg:.0f} kg gauge rating")
    if np.ndim(raw) == 0:
        return float(kg)
    return kg


def differential_read(active: int | np.ndarray, reference: int | np.ndarray) -> int | np.ndarray:
    """Subtract the paired unloaded gauge; any common additive disturbance cancels exactly."""
    out = np.asarray(active) - np.asarray(reference)
    if np.ndim(active) == 0 and np.ndim(reference) == 0:
        return int(out)
    return out


def saturate_counts(value: float | np.ndarray, bits: int = DEFAULT_RESOLUTION_BITS) -> int | np.ndarray:
    """Round half away from zero and clamp to the signed two's-complement range."""
    lo, hi = counts_range(bits)
    v = np.asarray(value, dtype=float)
    rounded = np.sign(v) * np.floor(np.abs(v) + 0.5)
    clamped = np.clip(rounded, lo, hi)
    if np.ndim(value) == 0:
        return int(clamped)
    return clamped.astype(np.int64)


def quantize(ideal_kg: float, cal: Calibration, bits: int = DEFAULT_RESOLUTION_BITS) -> int:
    """Ideal load → ADC counts, saturating silently like the hardware does."""
    if not 8 <= bits <= 32:
        raise ValueError("bits must be in [8, 32]")
    return saturate_counts(ideal_kg * cal.scale_counts_per_kg + cal.tare_counts, bits)


class CornerLoadModel(Protocol):
    """Anything that can report per-corner ideal loads (kg) at a time point."""

    def corner_loads(self, t_s: np.ndarray) -> np.ndarray:
        """Return an array [len(t_s), 4] ordered as CHANNELS."""
        ...


@dataclass
class ChairCapture:
    """Raw output of one simulated recording: per-channel [n, 2] arrays of (t_ms, counts)."""

    active: dict[Channel, np.ndarray]
    reference: dict[Channel, np.ndarray]
    calibration: dict[Channel, Calibration]
    rate_hz: int

    def corrected(self) -> dict[Channel, np.ndarray]:
        """Drift-cancelled streams: active − reference, timestamps preserved."""
        out = {}
        for ch in CHANNELS:
            a = self.active[ch]
            r = self.reference[ch]
            corrected = a.copy()
            corrected[:, 1] = differential_read(a[:, 1], r[:, 1])
            out[ch] = corrected
        return out


def simulate_chair(
    curves: CornerLoadModel,
    calibration: Mapping[Channel, Calibration],
    drift: DriftModel,
    duration_s: float,
    rate_hz: int = 10,
    seed: int = 0,
    jitter_fraction: float = 0.02,
    phase_offsets_ms: Mapping[Channel, float] | None = None,
    bits: int = DEFAULT_RESOLUTION_BITS,
) -> ChairCapture:
    """Sample the four corner gauges plus their reference pairs.

    Deterministic for a fixed seed. Each pair shares one ADC and therefore one
    clock and one drift trajectory; measurement noise rides on the loaded gauge
    only. Per-channel clocks run at slightly different rates (see acquisition's
    jitter model).
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    from .acquisition import SamplerConfig, sampler_ticks  # local import: no cycle at module load

    config = SamplerConfig(
        nominal_rate_hz=rate_hz,
        jitter_fraction=jitter_fraction,
        phase_offsets_ms=dict(phase_offsets_ms) if phase_offsets_ms is not None else None,
    )
    root = np.random.SeedSequence([seed, 0x5EED])
    clock_rng = np.random.default_rng(root.spawn(1)[0])
    ticks = sampler_ticks(config, duration_s, clock_rng)

    active: dict[Channel, np.ndarray] = {}
    reference: dict[Channel, np.ndarray] = {}
    for idx, ch in enumerate(CHANNELS):
        t_ms = ticks[ch]
        t_s = t_ms / 1000.0
        cal = calibration[ch]
        loads = curves.corner_loads(t_s)[:, idx]
        drift_counts = drift.drift_rate_counts_per_s * t_s
        noise_rng = np.random.default_rng(np.random.SeedSequence([seed, 1, idx]))
        noise = (
            noise_rng.normal(0.0, drift.noise_sigma_counts, size=t_s.shape)
            if drift.noise_sigma_counts > 0
            else np.zeros_like(t_s)
        )
        ideal_counts = loads * cal.scale_counts_per_kg + cal.tare_counts
        active_counts = saturate_counts(ideal_counts + drift_counts + noise, bits)
        ref_counts = saturate_counts(drift_counts, bits)
        active[ch] = np.column_stack([t_ms, active_counts]).astype(np.int64)
        reference[ch] = np.column_stack([t_ms, ref_counts]).astype(np.int64)

    return ChairCapture(active=active, reference=reference, calibration=dict(calibration), rate_hz=rate_hz)


def default_calibration() -> dict[Channel, Calibration]:
    return {ch: Calibration() for ch in CHANNELS}


@dataclass
class ConstantLoad:
    """Fixed per-corner loads; handy for calibration flows and tests."""

    loads_kg: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def corner_loads(self, t_s: np.ndarray) -> np.ndarray:
        t = np.asarray(t_s, dtype=float)
        return np.tile(np.asarray(self.loads_kg, dtype=float), (t.size, 1))
