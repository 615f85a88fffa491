import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sitstand.base import OverRange
from sitstand.cohort import MotionProfile, profile_to_load_curves
from sitstand.sensors import (
    CHANNELS,
    Calibration,
    ConstantLoad,
    DriftModel,
    GaugeChannel,
    Channel,
    counts_to_kg,
    counts_range,
    default_calibration,
    differential_read,
    quantize,
    simulate_chair,
)


class TestCountsToKg:
    def test_tare_identity(self):
        cal = Calibration(tare_counts=1234, scale_counts_per_kg=400.0)
        assert counts_to_kg(1234, cal) == 0.0

    def test_linear_law(self):
        cal = Calibration(tare_counts=1000, scale_counts_per_kg=400.0)
        assert counts_to_kg(5000, cal) == 10.0

    def test_negative_passes_through(self):
        cal = Calibration(tare_counts=1000, scale_counts_per_kg=400.0)
        assert counts_to_kg(600, cal) == -1.0

    def test_over_range_at_rated_load(self):
        # 2.2e7 counts at 400k counts/kg is 55 kg, past the 50 kg gauge rating
        cal = Calibration(tare_counts=0, scale_counts_per_kg=400_000.0)
        with pytest.raises(OverRange):
            counts_to_kg(int(2.2e7), cal)

    def test_over_range_with_small_scale(self):
        cal = Calibration(tare_counts=0, scale_counts_per_kg=400.0)
        with pytest.raises(OverRange):
            counts_to_kg(int(2.2e7), cal)

    @given(st.integers(-10**6, 10**6), st.integers(-10**6, 10**6))
    def test_strictly_increasing(self, a, b):
        cal = Calibration(tare_counts=17, scale_counts_per_kg=321.5)
        if a < b:
            assert counts_to_kg(a, cal, max_load_kg=1e7) < counts_to_kg(b, cal, max_load_kg=1e7)

    @given(st.floats(-49.9, 49.9, allow_nan=False))
    def test_quantize_round_trip_within_half_count(self, kg):
        cal = Calibration(tare_counts=250, scale_counts_per_kg=1000.0)
        back = counts_to_kg(quantize(kg, cal), cal)
        assert abs(back - kg) <= 0.5 / cal.scale_counts_per_kg


class TestQuantize:
    def test_zero(self):
        assert quantize(0.0, Calibration(tare_counts=0, scale_counts_per_kg=400.0)) == 0

    def test_rounds_half_away_from_zero(self):
        cal = Calibration(tare_counts=0, scale_counts_per_kg=1.0)
        assert quantize(2.5, cal) == 3
        assert quantize(-2.5, cal) == -3

    def test_saturates_at_range_limits(self):
        cal = Calibration(tare_counts=0, scale_counts_per_kg=400_000.0)
        lo, hi = counts_range(24)
        assert quantize(1e6, cal, bits=24) == hi
        assert quantize(-1e6, cal, bits=24) == lo

    def test_bits_bounds(self):
        with pytest.raises(ValueError):
            quantize(1.0, Calibration(), bits=7)


class TestDifferentialRead:
    def test_zero_reference(self):
        assert differential_read(5000, 0) == 5000

    @given(st.integers(-2**30, 2**30))
    def test_common_mode_cancels_exactly(self, d):
        assert differential_read(5000 + d, 0 + d) == 5000

    def test_vectorized(self):
        out = differential_read(np.array([10, 20]), np.array([1, 2]))
        assert np.array_equal(out, [9, 18])


def _profile(reps=1, weight=80.0, tremor=0.0):
    return MotionProfile(
        body_weight_kg=weight,
        strength="moderate",
        rise_time_s=1.5,
        sit_time_s=2.0,
        lower_time_s=1.2,
        stand_time_s=1.0,
        start_delay_s=2.0,
        asymmetry=0.0,
        lean_gain=0.2,
        tremor_amp_kg=tremor,
        tremor_hz=4.0,
        reps=reps,
        seed=0,
    )


class TestSimulateChair:
    def test_unloaded_reads_tare_exactly(self):
        cal = {ch: Calibration(tare_counts=5000, scale_counts_per_kg=400.0) for ch in CHANNELS}
        cap = simulate_chair(ConstantLoad(), cal, DriftModel(0.0, 0.0), 5.0, 10, seed=1)
        for ch in CHANNELS:
            assert np.all(cap.active[ch][:, 1] == 5000)
            assert np.all(cap.corrected()[ch][:, 1] == 5000)

    def test_seated_symmetric_split(self):
        cal = default_calibration()
        sigma = 2000.0
        cap = simulate_chair(
            ConstantLoad((20.0, 20.0, 20.0, 20.0)), cal, DriftModel(0.0, sigma), 10.0, 10, seed=2
        )
        for ch in CHANNELS:
            kg = counts_to_kg(cap.corrected()[ch][:, 1], cal[ch])
            tol = 3 * sigma / cal[ch].scale_counts_per_kg
            assert abs(float(np.mean(kg)) - 20.0) <= tol

    def test_sample_count_30s_10hz(self):
        cap = simulate_chair(ConstantLoad(), default_calibration(), DriftModel(), 30.0, 10, seed=3)
        for ch in CHANNELS:
            assert 294 <= len(cap.active[ch]) <= 306

    def test_noise_free_output_is_quantized_profile(self):
        curves = profile_to_load_curves(_profile(reps=1))
        cal = default_calibration()
        for seed in (0, 99):
            cap = simulate_chair(curves, cal, DriftModel(0.0, 0.0), 12.0, 10, seed=seed)
            for idx, ch in enumerate(CHANNELS):
                t_s = cap.active[ch][:, 0] / 1000.0
                expected = np.array(
                    [quantize(v, cal[ch]) for v in curves.corner_loads(t_s)[:, idx]]
                )
                assert np.array_equal(cap.corrected()[ch][:, 1], expected)

    def test_conservation_of_total_load(self):
        curves = profile_to_load_curves(_profile(reps=2))
        cal = default_calibration()
        sigma = 500.0
        cap = simulate_chair(curves, cal, DriftModel(10.0, sigma), 15.0, 10, seed=4, jitter_fraction=0.0,
                             phase_offsets_ms={ch: 0.0 for ch in CHANNELS})
        scale = cal[CHANNELS[0]].scale_counts_per_kg
        t_s = cap.active[CHANNELS[0]][:, 0] / 1000.0
        total = sum(counts_to_kg(cap.corrected()[ch][:, 1], cal[ch]) for ch in CHANNELS)
        ideal = curves.total(t_s)
        tol = 4 * (0.5 / scale + 3 * sigma / scale)
        assert float(np.max(np.abs(total - ideal))) <= tol

    def test_deterministic_per_seed(self):
        curves = profile_to_load_curves(_profile(reps=1))
        a = simulate_chair(curves, default_calibration(), DriftModel(5.0, 100.0), 8.0, 10, seed=7)
        b = simulate_chair(curves, default_calibration(), DriftModel(5.0, 100.0), 8.0, 10, seed=7)
        for ch in CHANNELS:
            assert np.array_equal(a.active[ch], b.active[ch])
            assert np.array_equal(a.reference[ch], b.reference[ch])

    def test_drift_cancellation_vs_uncorrected(self):
        # Slow 50 counts/s trend: differential readings stay noise-bounded
        # while raw readings walk off by ~1500 counts over 30 s.
        curves = profile_to_load_curves(_profile(reps=1))
        cal = default_calibration()
        sigma = 30.0
        cap = simulate_chair(curves, cal, DriftModel(50.0, sigma), 30.0, 10, seed=0)
        scale = cal[CHANNELS[0]].scale_counts_per_kg
        worst_corrected = worst_raw = 0.0
        for idx, ch in enumerate(CHANNELS):
            t_s = cap.active[ch][:, 0] / 1000.0
            ideal = curves.corner_loads(t_s)[:, idx]
            corrected = counts_to_kg(cap.corrected()[ch][:, 1], cal[ch])
            raw = counts_to_kg(cap.active[ch][:, 1], cal[ch])
            worst_corrected = max(worst_corrected, float(np.max(np.abs(corrected - ideal))))
            worst_raw = max(worst_raw, float(np.max(np.abs(raw - ideal))))
        assert worst_corrected <= 4 * sigma / scale
        assert worst_raw >= 1400.0 / scale


class TestTypes:
    def test_gauge_channel_validation(self):
        with pytest.raises(ValueError):
            GaugeChannel(Channel.FRONT_LEFT, max_load_kg=-1)
        with pytest.raises(ValueError):
            GaugeChannel(Channel.FRONT_LEFT, resolution_bits=40)
        with pytest.raises(ValueError):
            GaugeChannel(Channel.FRONT_LEFT, nominal_rate_hz=25)

    def test_calibration_positive_scale(self):
        with pytest.raises(ValueError):
            Calibration(tare_counts=0, scale_counts_per_kg=0.0)

    def test_drift_model_nonnegative_noise(self):
        with pytest.raises(ValueError):
            DriftModel(noise_sigma_counts=-1.0)
