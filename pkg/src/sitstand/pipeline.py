"""Trial analysis: grid alignment, load/center-of-pressure series, transition scoring.

Raw packets arrive with four mutually unaligned sample clocks. Everything
downstream (scoring, classification, plotting) wants one uniform grid, so the
first step interpolates calibrated loads onto the channels' overlap window —
linear interpolation only, never extrapolation, which keeps constants and
ramps exact and invents no data at the edges.

Transition detection uses relative hysteresis: seated means total load holds
above seated_fraction × body weight, standing means it holds below
standing_fraction × body weight, and both states must persist for dwell_ms
before they count. Each confirmed state change emits one transition event
spanning the threshold crossings.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .acquisition import TrialPacket
from .base import NoOverlap, ParamsMixin, check_vector
from .sensors import CHANNELS, Channel, counts_to_kg

SIT_TO_STAND = "sit_to_stand"
STAND_TO_SIT = "stand_to_sit"

_PLOT_COLORS = {
    Channel.FRONT_LEFT: "#1f77b4",
    Channel.FRONT_RIGHT: "#ff7f0e",
    Channel.REAR_LEFT: "#2ca02c",
    Channel.REAR_RIGHT: "#d62728",
}
_TOTAL_COLOR = "#444444"


@dataclass(frozen=True)
class ChairGeometry:
    """Corner positions in the seat-local frame, +x right, +y forward (meters)."""

    width_m: float = 0.40
    depth_m: float = 0.38

    def __post_init__(self):
        if self.width_m <= 0 or self.depth_m <= 0:
            raise ValueError("chair dimensions must be positive")

    def corner_positions(self) -> np.ndarray:
        """[4, 2] array ordered as CHANNELS: FL, FR, RL, RR."""
        w, d = self.width_m / 2.0, self.depth_m / 2.0
        return np.array([[-w, d], [w, d], [-w, -d], [w, -d]])


@dataclass
class AlignedTrial:
    """Calibrated 4-channel load matrix on a uniform grid."""

    grid_rate_hz: float
    t_ms: np.ndarray
    loads_kg: np.ndarray  # [frames, 4] ordered as CHANNELS
    trial_id: str = ""
    user_id: str = ""
    label: str | None = None
    mode: str = ""

    def __post_init__(self):
        self.t_ms = np.asarray(self.t_ms, dtype=float)
        self.loads_kg = np.asarray(self.loads_kg, dtype=float)
        if self.loads_kg.ndim != 2 or self.loads_kg.shape[1] != len(CHANNELS):
            raise ValueError("loads_kg must be [frames, 4]")
        if self.t_ms.shape[0] != self.loads_kg.shape[0] or self.t_ms.shape[0] < 1:
            raise ValueError("t_ms and loads_kg must share a non-empty frame count")

    @property
    def n_frames(self) -> int:
        return int(self.t_ms.shape[0])

    def duration_ms(self) -> float:
        return float(self.t_ms[-1] - self.t_ms[0])


class UniformResampler(ParamsMixin):
    """Transformer from TrialPacket to AlignedTrial.

    grid_rate_hz=None means "use the packet's nominal device rate", which keeps
    the grid native to whatever the hardware recorded.
    """

    def __init__(self, grid_rate_hz: float | None = None, max_load_kg: float = 50.0):
        self.grid_rate_hz = grid_rate_hz
        self.max_load_kg = max_load_kg

    def fit(self, X=None, y=None) -> "UniformResampler":
        return self  # stateless

    def transform(self, packet: TrialPacket) -> AlignedTrial:
        rate = float(self.grid_rate_hz or packet.nominal_rate_hz)
        if rate <= 0:
            raise ValueError("grid_rate_hz must be positive")
        starts, ends = [], []
        for ch in CHANNELS:
            stream = np.asarray(packet.channels[ch])
            if stream.shape[0] < 2:
                raise NoOverlap(f"channel {ch.value} has fewer than 2 samples")
            starts.append(stream[0, 0])
            ends.append(stream[-1, 0])
        t0 = float(max(starts))
        t1 = float(min(ends))
        if t1 < t0:
            raise NoOverlap("channels share no common time window")
        step_ms = 1000.0 / rate
        n_frames = int(np.floor((t1 - t0) / 1000.0 * rate)) + 1
        grid = t0 + step_ms * np.arange(n_frames)
        loads = np.empty((n_frames, len(CHANNELS)))
        for idx, ch in enumerate(CHANNELS):
            stream = np.asarray(packet.channels[ch])
            kg = counts_to_kg(stream[:, 1], packet.calibration[ch], self.max_load_kg)
            loads[:, idx] = np.interp(grid, stream[:, 0].astype(float), kg)
        return AlignedTrial(
            grid_rate_hz=rate,
            t_ms=grid - t0,
            loads_kg=loads,
            trial_id=packet.trial_id,
            user_id=packet.user_id,
            label=packet.label,
            mode=packet.mode,
        )


def resample_uniform(packet: TrialPacket, grid_rate_hz: float | None = None) -> AlignedTrial:
    return UniformResampler(grid_rate_hz=grid_rate_hz).transform(packet)


def total_load(trial: AlignedTrial) -> np.ndarray:
    return trial.loads_kg.sum(axis=1)


def center_of_pressure(
    trial: AlignedTrial,
    geometry: ChairGeometry | None = None,
    load_floor_kg: float = 2.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Load-weighted corner position per frame.

    Returns (xy, valid): xy is [frames, 2] with NaN rows wherever the total
    load sits below the floor — those frames are undefined, not fabricated.
    Negative loads are clamped to zero here (and only here) so the result
    stays inside the physical hull of the corners.
    """
    geometry = geometry or ChairGeometry()
    positions = geometry.corner_positions()
    loads = np.clip(trial.loads_kg, 0.0, None)
    totals = loads.sum(axis=1)
    valid = totals > load_floor_kg
    xy = np.full((trial.n_frames, 2), np.nan)
    if np.any(valid):
        xy[valid] = (loads[valid] @ positions) / totals[valid, None]
    return xy, valid


@dataclass(frozen=True)
class TransitionEvent:
    kind: str
    t_start_ms: float
    t_end_ms: float

    def __post_init__(self):
        if self.t_end_ms <= self.t_start_ms:
            raise ValueError("t_end_ms must exceed t_start_ms")
        if self.kind not in (SIT_TO_STAND, STAND_TO_SIT):
            raise ValueError(f"unknown transition kind {self.kind!r}")

    @property
    def duration_ms(self) -> float:
        return self.t_end_ms - self.t_start_ms


class TransitionDetector(ParamsMixin):
    """Hysteresis segmentation of the total-load series into sit/stand events.

    Thresholds are fractions of body weight, so detection is invariant to
    uniform rescaling of the load and weight together.
    """

    def __init__(
        self,
        seated_fraction: float = 0.60,
        standing_fraction: float = 0.15,
        dwell_ms: float = 300.0,
    ):
        self.seated_fraction = seated_fraction
        self.standing_fraction = standing_fraction
        self.dwell_ms = dwell_ms

    def detect(
        self,
        total_kg: np.ndarray,
        t_ms: np.ndarray,
        body_weight_kg: float | None = None,
    ) -> list[TransitionEvent]:
        total = check_vector(total_kg, "total_kg")
        t = check_vector(t_ms, "t_ms", min_len=total.size)
        if t.size != total.size:
            raise ValueError("total_kg and t_ms must have equal length")
        if not 0 < self.standing_fraction < self.seated_fraction:
            raise ValueError("need 0 < standing_fraction < seated_fraction")
        weight = float(body_weight_kg) if body_weight_kg is not None else float(np.percentile(total, 95))
        if weight <= 0:
            return []

        thr_seated = self.seated_fraction * weight
        thr_standing = self.standing_fraction * weight
        seated = total >= thr_seated
        standing = total <= thr_standing
        segments = self._confirmed_segments(seated, standing, t)
        events: list[TransitionEvent] = []
        for (kind_a, _, last_a), (kind_b, first_b, _) in zip(segments, segments[1:]):
            # Event bounds are the threshold-crossing instants, linearly
            # interpolated between the boundary frames of the confirmed states.
            thr_a = thr_seated if kind_a == "seated" else thr_standing
            thr_b = thr_standing if kind_b == "standing" else thr_seated
            t_start = _crossing(t, total, last_a, thr_a)
            t_end = _crossing(t, total, first_b - 1, thr_b)
            kind = SIT_TO_STAND if kind_a == "seated" else STAND_TO_SIT
            if t_end <= t_start:  # near-vertical edge collapsed by interpolation
                t_end = t_start + 1.0
            events.append(TransitionEvent(kind, t_start, t_end))
        return events

    def _confirmed_segments(
        self, seated: np.ndarray, standing: np.ndarray, t: np.ndarray
    ) -> list[tuple[str, int, int]]:
        """Maximal same-state runs that persist at least dwell_ms, merged by kind."""
        confirmed: list[tuple[str, int, int]] = []
        for name, mask in (("seated", seated), ("standing", standing)):
            for first, last in _runs(mask):
                if t[last] - t[first] >= self.dwell_ms:
                    confirmed.append((name, first, last))
        confirmed.sort(key=lambda seg: seg[1])
        merged: list[tuple[str, int, int]] = []
        for seg in confirmed:
            if merged and merged[-1][0] == seg[0]:
                merged[-1] = (seg[0], merged[-1][1], seg[2])
            else:
                merged.append(seg)
        return merged


def _crossing(t: np.ndarray, total: np.ndarray, i: int, threshold: float) -> float:
    """Time where the linear interpolant crosses `threshold` between frames i and i+1."""
    if i + 1 >= len(t):
        return float(t[i])
    v0, v1 = float(total[i]), float(total[i + 1])
    if v0 == v1:
        return float(t[i])
    frac = (v0 - threshold) / (v0 - v1)
    frac = min(max(frac, 0.0), 1.0)
    return float(t[i]) + frac * (float(t[i + 1]) - float(t[i]))


def _runs(mask: np.ndarray) -> Iterable[tuple[int, int]]:
    """(first, last) index pairs of each maximal True run."""
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    for start, stop in zip(edges[::2], edges[1::2]):
        yield int(start), int(stop - 1)


def detect_transitions(
    total_kg: np.ndarray,
    t_ms: np.ndarray,
    body_weight_kg: float | None = None,
    **params,
) -> list[TransitionEvent]:
    return TransitionDetector(**params).detect(total_kg, t_ms, body_weight_kg)


@dataclass(frozen=True)
class StsScore:
    """30CST rep count and 5xSTS time for one trial."""

    reps_30s: int
    five_reps_time_s: float | None
    events: tuple[TransitionEvent, ...]

    @property
    def transition_durations_ms(self) -> tuple[float, ...]:
        return tuple(e.duration_ms for e in self.events)


def score_trial(events: Sequence[TransitionEvent], trial_duration_ms: float | None = None) -> StsScore:
    """Chair-stand scores from detected events.

    reps_30s counts sit-to-stand events completed inside the first 30 seconds;
    the five-rep time spans the first rise's onset to the fifth rise's end.
    """
    ordered = sorted(events, key=lambda e: e.t_start_ms)
    for prev, nxt in zip(ordered, ordered[1:]):
        if prev.kind == nxt.kind:
            raise ValueError("transition events must alternate in kind")
    rises = [e for e in ordered if e.kind == SIT_TO_STAND]
    reps_30s = sum(1 for e in rises if e.t_end_ms <= 30_000.0)
    five_time = None
    if len(rises) >= 5:
        five_time = (rises[4].t_end_ms - rises[0].t_start_ms) / 1000.0
    return StsScore(reps_30s=reps_30s, five_reps_time_s=five_time, events=tuple(ordered))


def score_packet(packet: TrialPacket, detector: TransitionDetector | None = None) -> StsScore:
    """Convenience: packet → aligned trial → events → score."""
    trial = resample_uniform(packet)
    detector = detector or TransitionDetector()
    events = detector.detect(total_load(trial), trial.t_ms)
    return score_trial(events, trial.duration_ms())


def to_csv(trial: AlignedTrial) -> str:
    """Six-decimal CSV of the aligned loads plus the total column."""
    lines = ["t_ms,front_left_kg,front_right_kg,rear_left_kg,rear_right_kg,total_kg"]
    totals = total_load(trial)
    for i in range(trial.n_frames):
        row = [trial.t_ms[i], *trial.loads_kg[i], totals[i]]
        lines.append(",".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"


def write_csv(trial: AlignedTrial, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_csv(trial))


def emit_plot(trial: AlignedTrial, path: str) -> None:
    """Write a deterministic SVG of the four channel loads plus total.

    Identical trials produce byte-identical files, so plots can be golden-tested
    and cached by content hash.
    """
    svg = render_svg(trial)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)


def render_svg(trial: AlignedTrial, width: int = 900, height: int = 420) -> str:
    margin_l, margin_r, margin_t, margin_b = 64.0, 160.0, 28.0, 44.0
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    totals = total_load(trial)
    t = trial.t_ms
    t_min, t_max = float(t[0]), float(t[-1])
    t_span = (t_max - t_min) or 1.0
    y_min = min(0.0, float(trial.loads_kg.min()), float(totals.min()))
    y_max = max(float(totals.max()), float(trial.loads_kg.max()), 1.0) * 1.05
    y_span = (y_max - y_min) or 1.0

    def sx(v: float) -> float:
        return margin_l + (v - t_min) / t_span * plot_w

    def sy(v: float) -> float:
        return margin_t + plot_h - (v - y_min) / y_span * plot_h

    def polyline(values: np.ndarray, color: str, label: str) -> str:
        pts = " ".join(f"{sx(float(ti)):.3f},{sy(float(v)):.3f}" for ti, v in zip(t, values))
        return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"><title>{label}</title></polyline>'

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin_l:.3f}" y="{margin_t:.3f}" width="{plot_w:.3f}" height="{plot_h:.3f}" fill="none" stroke="#999999"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        tv = t_min + frac * t_span
        x = sx(tv)
        parts.append(f'<line x1="{x:.3f}" y1="{margin_t + plot_h:.3f}" x2="{x:.3f}" y2="{margin_t + plot_h + 5:.3f}" stroke="#999999"/>')
        parts.append(
            f'<text x="{x:.3f}" y="{margin_t + plot_h + 18:.3f}" font-family="sans-serif" font-size="11" text-anchor="middle">{tv / 1000.0:.1f}s</text>'
        )
        yv = y_min + frac * y_span
        y = sy(yv)
        parts.append(f'<line x1="{margin_l - 5:.3f}" y1="{y:.3f}" x2="{margin_l:.3f}" y2="{y:.3f}" stroke="#999999"/>')
        parts.append(
            f'<text x="{margin_l - 9:.3f}" y="{y + 4:.3f}" font-family="sans-serif" font-size="11" text-anchor="end">{yv:.1f}</text>'
        )
    parts.append(
        f'<text x="{margin_l + plot_w / 2:.3f}" y="{height - 8:.3f}" font-family="sans-serif" font-size="12" text-anchor="middle">time</text>'
    )
    parts.append(
        f'<text x="14" y="{margin_t + plot_h / 2:.3f}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {margin_t + plot_h / 2:.3f})">load (kg)</text>'
    )
    for idx, ch in enumerate(CHANNELS):
        parts.append(polyline(trial.loads_kg[:, idx], _PLOT_COLORS[ch], ch.value))
    parts.append(polyline(totals, _TOTAL_COLOR, "total"))

    legend_x = margin_l + plot_w + 12
    entries = [(ch.value, _PLOT_COLORS[ch]) for ch in CHANNELS] + [("total", _TOTAL_COLOR)]
    for i, (label, color) in enumerate(entries):
        ly = margin_t + 12 + i * 18
        parts.append(f'<line x1="{legend_x:.3f}" y1="{ly:.3f}" x2="{legend_x + 22:.3f}" y2="{ly:.3f}" stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{legend_x + 28:.3f}" y="{ly + 4:.3f}" font-family="sans-serif" font-size="11">{label}</text>'
        )
    title = trial.trial_id or "trial"
    parts.append(
        f'<text x="{margin_l:.3f}" y="18" font-family="sans-serif" font-size="12">{title} ({trial.grid_rate_hz:g} Hz)</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
