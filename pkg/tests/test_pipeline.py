from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sitstand.base import NoOverlap
from sitstand.cohort import separability_cohort
from sitstand.pipeline import (
    SIT_TO_STAND,
    STAND_TO_SIT,
    AlignedTrial,
    ChairGeometry,
    TransitionDetector,
    TransitionEvent,
    center_of_pressure,
    detect_transitions,
    emit_plot,
    render_svg,
    resample_uniform,
    score_trial,
    to_csv,
    total_load,
)
from sitstand.sensors import CHANNELS, Calibration

from conftest import make_packet

GOLDEN = Path(__file__).parent / "golden"


def packet_with_streams(streams, scale=1000.0, rate=10):
    cal = {ch: Calibration(tare_counts=0, scale_counts_per_kg=scale) for ch in CHANNELS}
    return make_packet(channels=streams, calibration=cal, nominal_rate_hz=rate)


class TestResample:
    def test_identity_on_grid(self):
        t = np.arange(0, 5000, 100)
        streams = {ch: np.column_stack([t, t * 2]) for ch in CHANNELS}
        trial = resample_uniform(packet_with_streams(streams))
        assert trial.n_frames == 50
        assert np.allclose(trial.t_ms, t)
        for idx in range(4):
            assert np.array_equal(trial.loads_kg[:, idx], t * 2 / 1000.0)

    def test_constant_preserved_on_jittered_clocks(self):
        rng = np.random.default_rng(0)
        streams = {}
        for ch in CHANNELS:
            t = np.cumsum(rng.integers(50, 150, size=60))
            streams[ch] = np.column_stack([t, np.full_like(t, 20_000)])
        trial = resample_uniform(packet_with_streams(streams))
        assert np.all(trial.loads_kg == 20.0)

    def test_linear_ramp_exact(self):
        rng = np.random.default_rng(1)
        streams = {}
        for ch in CHANNELS:
            t = np.unique(rng.integers(0, 10_000, size=80))
            streams[ch] = np.column_stack([t, t])  # counts = t -> kg = t/1000
        trial = resample_uniform(packet_with_streams(streams))
        expected = (trial.t_ms + trial_offset(streams)) / 1000.0
        assert np.allclose(trial.loads_kg, expected[:, None], rtol=1e-9, atol=0)

    def test_no_overlap(self):
        streams = {ch: np.column_stack([np.arange(5) + 1000 * i, np.zeros(5, dtype=int)])
                   for i, ch in enumerate(CHANNELS)}
        with pytest.raises(NoOverlap):
            resample_uniform(packet_with_streams(streams))

    def test_row_count_formula(self):
        t = np.arange(0, 30_000, 100)
        streams = {ch: np.column_stack([t, np.zeros_like(t)]) for ch in CHANNELS}
        trial = resample_uniform(packet_with_streams(streams))
        duration_s = (t[-1] - t[0]) / 1000.0
        assert trial.n_frames == int(np.floor(duration_s * 10)) + 1

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_no_overshoot(self, seed):
        rng = np.random.default_rng(seed)
        streams = {}
        for ch in CHANNELS:
            t = np.unique(rng.integers(0, 3000, size=30))
            while len(t) < 2:
                t = np.unique(rng.integers(0, 3000, size=30))
            counts = rng.integers(-20_000, 20_000, size=len(t))
            streams[ch] = np.column_stack([t, counts])
        trial = resample_uniform(packet_with_streams(streams))
        for idx, ch in enumerate(CHANNELS):
            raw_kg = streams[ch][:, 1] / 1000.0
            assert trial.loads_kg[:, idx].max() <= raw_kg.max() + 1e-12
            assert trial.loads_kg[:, idx].min() >= raw_kg.min() - 1e-12

    def test_80hz_grid(self):
        t = np.arange(0, 2000, 12)
        streams = {ch: np.column_stack([t, np.full_like(t, 5000)]) for ch in CHANNELS}
        trial = resample_uniform(packet_with_streams(streams, rate=80))
        assert trial.grid_rate_hz == 80
        assert np.all(trial.loads_kg == 5.0)


def trial_offset(streams):
    return max(s[0, 0] for s in streams.values())


def aligned(loads, rate=10.0):
    loads = np.asarray(loads, dtype=float)
    t = np.arange(loads.shape[0]) * (1000.0 / rate)
    return AlignedTrial(grid_rate_hz=rate, t_ms=t, loads_kg=loads, trial_id="t", user_id="u")


class TestTotalAndCop:
    def test_total_sums_channels(self):
        trial = aligned(np.full((10, 4), 20.0))
        assert np.all(total_load(trial) == 80.0)

    def test_total_zero(self):
        trial = aligned(np.zeros((5, 4)))
        assert np.all(total_load(trial) == 0.0)

    def test_cop_symmetric(self):
        trial = aligned(np.full((3, 4), 10.0))
        xy, valid = center_of_pressure(trial)
        assert np.all(valid)
        assert np.allclose(xy, 0.0)

    def test_cop_single_corner(self):
        geom = ChairGeometry(width_m=0.40, depth_m=0.38)
        loads = np.zeros((2, 4))
        loads[:, 0] = 30.0  # front_left only
        xy, valid = center_of_pressure(aligned(loads), geom)
        assert np.all(valid)
        assert np.allclose(xy, [-0.20, 0.19])

    def test_cop_hand_computed(self):
        geom = ChairGeometry(width_m=0.40, depth_m=0.38)
        loads = np.array([[30.0, 10.0, 30.0, 10.0]])
        xy, _ = center_of_pressure(aligned(loads), geom)
        assert np.allclose(xy[0, 0], -0.10)
        assert np.allclose(xy[0, 1], 0.0)

    def test_cop_undefined_below_floor(self):
        loads = np.zeros((4, 4))
        loads[2] = 10.0
        xy, valid = center_of_pressure(aligned(loads))
        assert valid.tolist() == [False, False, True, False]
        assert np.isnan(xy[0]).all() and not np.isnan(xy[2]).any()

    def test_cop_clamps_negative_loads_inside_hull(self):
        geom = ChairGeometry()
        loads = np.array([[40.0, -3.0, 5.0, -1.0]])
        xy, valid = center_of_pressure(aligned(loads), geom)
        assert valid[0]
        assert abs(xy[0, 0]) <= geom.width_m / 2 and abs(xy[0, 1]) <= geom.depth_m / 2

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_cop_inside_hull_for_nonnegative_loads(self, seed):
        rng = np.random.default_rng(seed)
        geom = ChairGeometry()
        loads = rng.uniform(0, 40, size=(20, 4))
        xy, valid = center_of_pressure(aligned(loads), geom)
        assert np.all(np.abs(xy[valid, 0]) <= geom.width_m / 2 + 1e-12)
        assert np.all(np.abs(xy[valid, 1]) <= geom.depth_m / 2 + 1e-12)


def square_wave(cycles=3, level=80.0, seated_frames=10, standing_frames=10, rate=10.0):
    chunks = [np.zeros(standing_frames)]
    for _ in range(cycles):
        chunks.append(np.full(seated_frames, level))
        chunks.append(np.zeros(standing_frames))
    return np.concatenate(chunks)


class TestDetect:
    def test_constant_zero_no_events(self):
        total = np.zeros(100)
        t = np.arange(100) * 100.0
        assert detect_transitions(total, t) == []

    def test_square_wave_three_cycles(self):
        total = square_wave(cycles=3)
        t = np.arange(total.size) * 100.0
        events = detect_transitions(total, t, body_weight_kg=80.0)
        kinds = [e.kind for e in events]
        assert kinds == [STAND_TO_SIT, SIT_TO_STAND] * 3
        for e in events:
            assert e.duration_ms <= 120.0  # edge width is one 100 ms grid step

    def test_events_alternate_and_are_ordered(self):
        total = square_wave(cycles=4)
        t = np.arange(total.size) * 100.0
        events = detect_transitions(total, t, body_weight_kg=80.0)
        for a, b in zip(events, events[1:]):
            assert a.kind != b.kind
            assert b.t_start_ms >= a.t_end_ms

    def test_short_blip_is_ignored(self):
        total = np.full(100, 80.0)
        total[50] = 0.0  # 100 ms dropout while seated
        t = np.arange(100) * 100.0
        assert detect_transitions(total, t, body_weight_kg=80.0) == []

    def test_scaling_invariance_exact_for_power_of_two(self):
        total = square_wave(cycles=2)
        t = np.arange(total.size) * 100.0
        base = detect_transitions(total, t, body_weight_kg=80.0)
        scaled = detect_transitions(total * 4.0, t, body_weight_kg=320.0)
        assert [(e.kind, e.t_start_ms, e.t_end_ms) for e in base] == [
            (e.kind, e.t_start_ms, e.t_end_ms) for e in scaled
        ]

    def test_scaling_invariance_general_factor(self):
        total = square_wave(cycles=2)
        t = np.arange(total.size) * 100.0
        base = detect_transitions(total, t, body_weight_kg=80.0)
        scaled = detect_transitions(total * 3.7, t, body_weight_kg=80.0 * 3.7)
        assert len(base) == len(scaled)
        for a, b in zip(base, scaled):
            assert a.kind == b.kind
            assert abs(a.t_start_ms - b.t_start_ms) < 1e-6
            assert abs(a.t_end_ms - b.t_end_ms) < 1e-6

    def test_weight_estimated_from_p95(self):
        total = square_wave(cycles=2)
        t = np.arange(total.size) * 100.0
        explicit = detect_transitions(total, t, body_weight_kg=80.0)
        estimated = detect_transitions(total, t)
        assert [(e.kind,) for e in explicit] == [(e.kind,) for e in estimated]

    def test_detector_params_exposed(self):
        det = TransitionDetector(seated_fraction=0.5, dwell_ms=200.0)
        params = det.get_params()
        assert params["seated_fraction"] == 0.5 and params["dwell_ms"] == 200.0
        det.set_params(dwell_ms=250.0)
        assert det.dwell_ms == 250.0


class TestScore:
    def test_no_events(self):
        score = score_trial([])
        assert score.reps_30s == 0 and score.five_reps_time_s is None

    def test_five_reps_time_from_constructed_events(self):
        events = []
        t = 0.0
        for k in range(5):
            events.append(TransitionEvent(STAND_TO_SIT, t + 500, t + 1000))
            rise_start = 1800.0 + k * 2400.0
            events.append(TransitionEvent(SIT_TO_STAND, rise_start, rise_start + 600))
            t += 2400.0
        score = score_trial(events)
        assert score.reps_30s == 5
        expected = ((1800 + 4 * 2400 + 600) - 1800) / 1000.0
        assert score.five_reps_time_s == pytest.approx(expected)

    def test_spec_value_11_2_seconds(self):
        events = []
        first_rise_start = 2000.0
        for k in range(5):
            events.append(TransitionEvent(STAND_TO_SIT, 100 + k * 2600, 600 + k * 2600))
            start = first_rise_start + k * 2600
            end = start + 400 if k < 4 else first_rise_start + 11_200
            events.append(TransitionEvent(SIT_TO_STAND, start, end))
        score = score_trial(events)
        assert score.five_reps_time_s == pytest.approx(11.2)

    def test_reps_counted_only_within_30s(self):
        events = [
            TransitionEvent(SIT_TO_STAND, 1000, 2000),
            TransitionEvent(STAND_TO_SIT, 5000, 6000),
            TransitionEvent(SIT_TO_STAND, 29_000, 31_000),
        ]
        assert score_trial(events).reps_30s == 1

    def test_non_alternating_rejected(self):
        events = [
            TransitionEvent(SIT_TO_STAND, 0, 100),
            TransitionEvent(SIT_TO_STAND, 200, 300),
        ]
        with pytest.raises(ValueError):
            score_trial(events)


class TestExports:
    def test_csv_header_and_precision(self):
        trial = aligned(np.full((3, 4), 1.23456789))
        text = to_csv(trial)
        lines = text.strip().split("\n")
        assert lines[0] == "t_ms,front_left_kg,front_right_kg,rear_left_kg,rear_right_kg,total_kg"
        assert lines[1] == "0.000000,1.234568,1.234568,1.234568,1.234568,4.938272"

    def test_single_frame_svg(self):
        trial = aligned(np.array([[1.0, 2.0, 3.0, 4.0]]))
        svg = render_svg(trial)
        assert svg.startswith("<svg")
        assert svg.count("<polyline") == 5

    def test_plot_deterministic(self, tmp_path):
        packet = separability_cohort(seed=0)[0][0]
        trial = resample_uniform(packet)
        p1, p2 = tmp_path / "a.svg", tmp_path / "b.svg"
        emit_plot(trial, str(p1))
        emit_plot(trial, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_plot_matches_golden(self, tmp_path):
        packet = separability_cohort(seed=0)[0][0]
        trial = resample_uniform(packet)
        out = tmp_path / "trial.svg"
        emit_plot(trial, str(out))
        golden = GOLDEN / "separability_trial0.svg"
        assert out.read_bytes() == golden.read_bytes()

    def test_plot_io_error_carries_path(self):
        trial = aligned(np.ones((2, 4)))
        with pytest.raises(OSError) as err:
            emit_plot(trial, "/nonexistent-dir/plot.svg")
        assert "nonexistent-dir" in str(err.value)
