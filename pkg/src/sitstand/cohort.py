"""Synthetic sit-to-stand cohorts with known ground truth.

A motion profile drives the chair's total load through smoothstep transitions
between zero (standing) and body weight (seated), with class-dependent rise
times, a forward-lean shift of the front/rear split during transitions, a
left/right asymmetry, and a tremor component superimposed on the edges. Corner
loads are exact shares of the total, so conservation holds by construction and
every generated trial has an analytic answer key.

Users get stable idiosyncrasies (weight, timing, asymmetry, tremor signature)
drawn once per user; their trials vary only slightly around that base, which
makes trials of one user resemble each other more than anyone else's.
"""
from __future__ import annotations

import uuid
from dataclasses import dataclass, asdict, replace
from datetime import datetime, timedelta, timezone
from typing import Any, Sequence

import numpy as np

from .acquisition import TrialPacket, assemble_trial
from .base import canonical_json
from .sensors import (
    Calibration,
    Channel,
    DriftModel,
    default_calibration,
    simulate_chair,
)

STRENGTH_CLASSES = ("weak", "moderate", "strong")

RISE_TIME_RANGES_S = {"weak": (2.0, 3.5), "moderate": (1.2, 2.0), "strong": (0.6, 1.2)}
SIT_TIME_RANGES_S = {"weak": (2.0, 3.5), "moderate": (1.2, 2.2), "strong": (0.7, 1.3)}
TREMOR_AMP_RANGES_KG = {"weak": (1.2, 2.5), "moderate": (0.5, 1.2), "strong": (0.1, 0.5)}

# Default sensor imperfections for synthetic runs: drift small over a 30 s
# trial, noise visible but far below the separability signal.
DEFAULT_DRIFT = DriftModel(
    drift_rate_counts_per_s=20.0,
    noise_sigma_counts=0.05 * Calibration().scale_counts_per_kg,
)

_EPOCH = datetime(2026, 1, 1, tzinfo=timezone.utc)
_TRIAL_NS = uuid.UUID("e6dc2f5e-58f5-4cb3-9f1b-6175a5a33c9b")


@dataclass(frozen=True)
class MotionProfile:
    """One trial's programmed motion. Times in seconds, loads in kg."""

    body_weight_kg: float
    strength: str
    rise_time_s: float
    sit_time_s: float
    lower_time_s: float
    stand_time_s: float
    start_delay_s: float
    asymmetry: float
    lean_gain: float
    tremor_amp_kg: float
    tremor_hz: float
    reps: int
    seed: int

    def __post_init__(self):
        if self.strength not in STRENGTH_CLASSES:
            raise ValueError(f"unknown strength class {self.strength!r}")
        if self.reps < 0:
            raise ValueError("reps must be >= 0")
        if not -0.3 <= self.asymmetry <= 0.3:
            raise ValueError("asymmetry must be in [-0.3, 0.3]")
        if self.body_weight_kg <= 0:
            raise ValueError("body_weight_kg must be positive")


def generate_profile(
    strength: str,
    body_weight_kg: float,
    seed: int,
    reps: int | None = None,
    duration_s: float = 30.0,
) -> MotionProfile:
    """Draw a profile from the class-specific parameter ranges, deterministically per seed.

    reps=None packs as many full sit-stand cycles as fit in duration_s.
    """
    if strength not in STRENGTH_CLASSES:
        raise ValueError(f"unknown strength class {strength!r}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, STRENGTH_CLASSES.index(strength)]))
    rise = rng.uniform(*RISE_TIME_RANGES_S[strength])
    sit = rng.uniform(*SIT_TIME_RANGES_S[strength])
    lower = rise * rng.uniform(0.7, 0.9)
    stand = rng.uniform(0.6, 1.2)
    start_delay = rng.uniform(1.5, 3.0)
    asymmetry = rng.uniform(-0.25, 0.25)
    lean = rng.uniform(0.15, 0.25)
    tremor_amp = rng.uniform(*TREMOR_AMP_RANGES_KG[strength])
    tremor_hz = rng.uniform(3.0, 6.0)
    if reps is None:
        cycle = lower + sit + rise + stand
        reps = max(int((duration_s - start_delay + stand) // cycle), 0)
    return MotionProfile(
        body_weight_kg=body_weight_kg,
        strength=strength,
        rise_time_s=rise,
        sit_time_s=sit,
        lower_time_s=lower,
        stand_time_s=stand,
        start_delay_s=start_delay,
        asymmetry=asymmetry,
        lean_gain=lean,
        tremor_amp_kg=tremor_amp,
        tremor_hz=tremor_hz,
        reps=int(reps),
        seed=seed,
    )


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


@dataclass(frozen=True)
class LoadCurves:
    """Analytic per-corner load functions for one profile."""

    profile: MotionProfile
    edges: tuple[tuple[float, float, str], ...]  # (t_start_s, t_end_s, "down"|"up")

    @property
    def schedule_end_s(self) -> float:
        if not self.edges:
            return self.profile.start_delay_s
        return self.edges[-1][1] + self.profile.stand_time_s

    def base_total(self, t_s: np.ndarray) -> np.ndarray:
        """Total chair load without tremor: the smoothstep skeleton."""
        t = np.asarray(t_s, dtype=float)
        w = self.profile.body_weight_kg
        out = np.zeros_like(t)
        for t0, t1, kind in self.edges:
            u = (t - t0) / (t1 - t0)
            inside = (t >= t0) & (t < t1)
            if kind == "down":
                out = np.where(inside, w * _smoothstep(u), out)
                seated_until = t1 + self.profile.sit_time_s
                out = np.where((t >= t1) & (t < seated_until), w, out)
            else:
                out = np.where(inside, w * (1.0 - _smoothstep(u)), out)
        return out

    def total(self, t_s: np.ndarray) -> np.ndarray:
        t = np.asarray(t_s, dtype=float)
        out = self.base_total(t)
        p = self.profile
        if p.tremor_amp_kg > 0:
            for t0, t1, _ in self.edges:
                u = (t - t0) / (t1 - t0)
                inside = (t >= t0) & (t < t1)
                ripple = p.tremor_amp_kg * np.sin(2 * np.pi * p.tremor_hz * (t - t0)) * np.sin(np.pi * np.clip(u, 0, 1))
                out = np.where(inside, out + ripple, out)
        return out

    def front_share(self, t_s: np.ndarray) -> np.ndarray:
        """Forward lean: the front corners' share of the load rises during transitions."""
        t = np.asarray(t_s, dtype=float)
        p = self.profile
        share = np.full_like(t, 0.5)
        for t0, t1, kind in self.edges:
            u = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
            inside = (t >= t0) & (t < t1)
            s = _smoothstep(u)
            bump = p.lean_gain * (s if kind == "up" else (1.0 - s))
            share = np.where(inside, 0.5 + bump, share)
        return share

    def corner_loads(self, t_s: np.ndarray) -> np.ndarray:
        """[len(t), 4] loads ordered as CHANNELS; rows sum to total(t) exactly."""
        t = np.asarray(t_s, dtype=float)
        tot = self.total(t)
        front = self.front_share(t)
        left = 0.5 + self.profile.asymmetry / 2.0
        fl = tot * front * left
        fr = tot * front * (1.0 - left)
        rl = tot * (1.0 - front) * left
        rr = tot * (1.0 - front) * (1.0 - left)
        return np.column_stack([fl, fr, rl, rr])


def profile_to_load_curves(profile: MotionProfile) -> LoadCurves:
    """Lay the profile's cycles out on the time axis: down-edge, sit, up-edge, stand."""
    edges: list[tuple[float, float, str]] = []
    t = profile.start_delay_s
    for _ in range(profile.reps):
        edges.append((t, t + profile.lower_time_s, "down"))
        t += profile.lower_time_s + profile.sit_time_s
        edges.append((t, t + profile.rise_time_s, "up"))
        t += profile.rise_time_s + profile.stand_time_s
    return LoadCurves(profile=profile, edges=tuple(edges))


@dataclass(frozen=True)
class ManifestEntry:
    trial_id: str
    user_id: str
    true_label: str
    profile: dict[str, Any]


@dataclass(frozen=True)
class CohortManifest:
    """Out-of-band answer key for evaluation; never stored in the test service."""

    seed: int
    label_mode: str
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        ids = [e.trial_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("manifest trial_ids must be unique")

    def truth(self) -> dict[str, str]:
        return {e.trial_id: e.true_label for e in self.entries}

    def to_json(self) -> bytes:
        return canonical_json(
            {
                "seed": self.seed,
                "label_mode": self.label_mode,
                "entries": [asdict(e) for e in self.entries],
            }
        )

    @classmethod
    def from_json(cls, data: bytes | str) -> "CohortManifest":
        import json

        obj = json.loads(data)
        return cls(
            seed=obj["seed"],
            label_mode=obj["label_mode"],
            entries=tuple(ManifestEntry(**e) for e in obj["entries"]),
        )


def generate_cohort(
    n_users: int,
    trials_per_user: int,
    class_assignment: Sequence[str] | str = "round_robin",
    seed: int = 0,
    duration_s: float = 30.0,
    rate_hz: int = 10,
    label_mode: str = "strength",
    reps: int | None = None,
    drift: DriftModel = DEFAULT_DRIFT,
    jitter_fraction: float = 0.02,
    calibration: dict[Channel, Calibration] | None = None,
) -> tuple[list[TrialPacket], CohortManifest]:
    """Simulate a labeled cohort of trials plus its manifest.

    Identical arguments produce byte-identical packets and manifest. Packets
    come out in train mode carrying their true label; use as_test_packet() to
    strip a packet for submission to the test service.
    """
    if n_users < 1 or trials_per_user < 1:
        raise ValueError("n_users and trials_per_user must be >= 1")
    if label_mode not in ("strength", "user"):
        raise ValueError("label_mode must be 'strength' or 'user'")
    if isinstance(class_assignment, str):
        if class_assignment != "round_robin":
            raise ValueError("class_assignment must be 'round_robin' or a per-user sequence")
        classes = [STRENGTH_CLASSES[u % len(STRENGTH_CLASSES)] for u in range(n_users)]
    else:
        if len(class_assignment) != n_users:
            raise ValueError("class_assignment length must equal n_users")
        classes = [str(c) for c in class_assignment]
    calibration = calibration or default_calibration()

    packets: list[TrialPacket] = []
    entries: list[ManifestEntry] = []
    for u in range(n_users):
        user_id = f"U{u + 1}"
        user_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11CE, u]))
        user_seed = int(user_rng.integers(0, 2**31 - 1))
        weight = float(user_rng.uniform(55.0, 95.0))
        base = generate_profile(classes[u], weight, user_seed, reps=reps, duration_s=duration_s)
        for k in range(trials_per_user):
            trial_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7B1A1, u, k]))
            profile = _vary_profile(base, trial_rng)
            trial_seed = int(trial_rng.integers(0, 2**31 - 1))
            curves = profile_to_load_curves(profile)
            capture = simulate_chair(
                curves,
                calibration,
                drift,
                duration_s=duration_s,
                rate_hz=rate_hz,
                seed=trial_seed,
                jitter_fraction=jitter_fraction,
            )
            trial_id = str(uuid.uuid5(_TRIAL_NS, f"{seed}/{u}/{k}"))
            label = classes[u] if label_mode == "strength" else user_id
            started = (_EPOCH + timedelta(hours=u, minutes=5 * k)).isoformat().replace("+00:00", "Z")
            packet = assemble_trial(
                capture.corrected(),
                trial_id=trial_id,
                user_id=user_id,
                mode="train",
                label=label,
                started_at=started,
                nominal_rate_hz=rate_hz,
                calibration=calibration,
            )
            packets.append(packet)
            entries.append(
                ManifestEntry(
                    trial_id=trial_id,
                    user_id=user_id,
                    true_label=label,
                    profile={k2: (round(v, 9) if isinstance(v, float) else v) for k2, v in asdict(profile).items()},
                )
            )
    return packets, CohortManifest(seed=seed, label_mode=label_mode, entries=tuple(entries))


def _vary_profile(base: MotionProfile, rng: np.random.Generator) -> MotionProfile:
    """Small per-trial deviations around a user's signature motion."""

    def wobble(value: float, fraction: float = 0.05) -> float:
        return float(value * (1.0 + rng.uniform(-fraction, fraction)))

    return replace(
        base,
        rise_time_s=wobble(base.rise_time_s),
        sit_time_s=wobble(base.sit_time_s),
        lower_time_s=wobble(base.lower_time_s),
        stand_time_s=wobble(base.stand_time_s),
        start_delay_s=wobble(base.start_delay_s, 0.10),
        tremor_hz=wobble(base.tremor_hz, 0.03),
        tremor_amp_kg=wobble(base.tremor_amp_kg, 0.10),
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def as_test_packet(packet: TrialPacket) -> TrialPacket:
    """The same recording, stripped for submission to the test service."""
    return TrialPacket(
        trial_id=packet.trial_id,
        user_id=packet.user_id,
        mode="test",
        label=None,
        started_at=packet.started_at,
        nominal_rate_hz=packet.nominal_rate_hz,
        channels=packet.channels,
        calibration=packet.calibration,
    )


def separability_cohort(seed: int = 0, rate_hz: int = 10) -> tuple[list[TrialPacket], CohortManifest]:
    """Four users, three single-cycle stand-sit-stand trials each, labeled by user."""
    return generate_cohort(
        n_users=4,
        trials_per_user=3,
        seed=seed,
        duration_s=30.0,
        rate_hz=rate_hz,
        label_mode="user",
        reps=1,
    )


def strength_cohort(seed: int = 0, rate_hz: int = 10) -> tuple[list[TrialPacket], CohortManifest]:
    """Three classes × 10 users × 3 trials, labeled by strength class."""
    assignment = [STRENGTH_CLASSES[u // 10] for u in range(30)]
    return generate_cohort(
        n_users=30,
        trials_per_user=3,
        class_assignment=assignment,
        seed=seed,
        duration_s=30.0,
        rate_hz=rate_hz,
        label_mode="strength",
    )
