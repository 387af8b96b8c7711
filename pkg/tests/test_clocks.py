"""Clock model, timestamp quantization and servo behavior."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest

from hybridsync.clocks import (
    ClockModel,
    Direction,
    PhcState,
    ServoState,
    Timestamp,
    advance_drift,
    quantize_timestamp,
    quantize_value,
    read_clock,
    servo_update,
)


class TestClockModel:
    def test_read_is_affine(self):
        clock = ClockModel(offset_ns=100.0, drift_ppm=10.0)
        assert read_clock(clock, 0.0) == 100.0
        assert read_clock(clock, 1e9) == pytest.approx(1_000_010_100.0)

    def test_negative_drift_slows_clock(self):
        clock = ClockModel(offset_ns=0.0, drift_ppm=-2.0)
        assert read_clock(clock, 1e9) == pytest.approx(1e9 - 2000.0)

    def test_rejects_bad_phase(self):
        with pytest.raises(ValueError):
            ClockModel(phase=1.0)
        with pytest.raises(ValueError):
            ClockModel(phase=-0.1)

    def test_rejects_nonpositive_period(self):
        with pytest.raises(ValueError):
            ClockModel(sample_period_ns=0.0)


class TestQuantize:
    def test_known_values_wireless_grid(self):
        assert quantize_value(123.0, 50.0) == 100.0
        assert quantize_value(126.0, 50.0) == 150.0

    def test_known_values_ethernet_grid(self):
        assert quantize_value(123.0, 8.0) == 120.0
        assert quantize_value(127.9, 8.0) == 128.0

    def test_midpoint_takes_lower_grid_point(self):
        # error hits -T/2 exactly and +T/2 never occurs
        assert quantize_value(124.0, 8.0) == 120.0
        assert quantize_value(125.0, 50.0) == 100.0

    def test_phase_shifts_grid(self):
        assert quantize_value(123.0, 8.0, phase=0.5) == 124.0
        assert quantize_value(3.0, 8.0, phase=0.25) == 2.0

    def test_array_input(self):
        values = np.array([0.0, 3.9, 4.0, 4.1, 8.0])
        out = quantize_value(values, 8.0)
        assert np.array_equal(out, [0.0, 0.0, 0.0, 8.0, 8.0])

    def test_timestamp_wrapper_validates(self):
        ts = quantize_timestamp(123.0, 8.0, direction=Direction.EGRESS)
        assert ts == Timestamp(120.0, Direction.EGRESS)
        with pytest.raises(ValueError):
            quantize_timestamp(1.0, 0.0)
        with pytest.raises(ValueError):
            quantize_timestamp(1.0, 8.0, phase=1.5)

    @given(
        value=st.floats(-1e12, 1e12),
        period=st.sampled_from([6.25, 8.0, 32.0, 50.0]),
        phase=st.floats(0.0, 1.0, exclude_max=True),
    )
    def test_error_bounded_by_half_period(self, value, period, phase):
        err = float(quantize_value(value, period, phase)) - value
        assert -period / 2.0 <= err < period / 2.0

    @pytest.mark.parametrize("period", [8.0, 50.0])
    def test_error_uniform_over_random_readings(self, period):
        rng = np.random.default_rng(1234)
        values = rng.uniform(0.0, 1e9, size=200_000)
        err = np.asarray(quantize_value(values, period)) - values
        stat = kstest(err, "uniform", args=(-period / 2.0, period)).pvalue
        assert stat >= 0.01
        assert abs(err.mean()) < 0.05 * period


class TestServo:
    def test_first_estimate_is_jam_step(self):
        servo = ServoState()
        step, freq = servo_update(servo, 54321.0, 1.0)
        assert step == 54321.0
        assert freq == 0.0
        assert servo.locked

    def test_locked_update_splits_pi_terms(self):
        servo = ServoState(kp=0.7, ki=0.3, locked=True)
        step, freq = servo_update(servo, 70.0, 1.0)
        assert step == pytest.approx(49.0)
        assert freq == pytest.approx(0.021)
        assert servo.integrator_ppm == pytest.approx(0.021)

    def test_integrator_clamps(self):
        servo = ServoState(locked=True, integrator_ppm=99.9995)
        _, freq = servo_update(servo, 1e9, 1.0)
        assert servo.integrator_ppm == 100.0
        assert freq == pytest.approx(0.0005)
        _, freq = servo_update(servo, 1e9, 1.0)
        assert freq == 0.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            servo_update(ServoState(), math.nan, 1.0)
        with pytest.raises(ValueError):
            servo_update(ServoState(), 1.0, 0.0)
        with pytest.raises(ValueError):
            ServoState(kp=-0.1)
        with pytest.raises(ValueError):
            ServoState(anti_windup_ppm=0.0)

    def test_converges_on_offset_and_drift(self):
        # closed loop against a 10 ppm oscillator, ideal measurements
        servo = ServoState(kp=0.7, ki=0.3)
        offset, freq_ppm, drift_ppm = 1e6, 0.0, 10.0
        for _ in range(50):
            offset += (drift_ppm - freq_ppm) * 1e-6 * 1e9
            step, fstep = servo_update(servo, offset, 1.0)
            offset -= step
            freq_ppm += fstep
        assert abs(offset) < 1e-3
        assert freq_ppm == pytest.approx(10.0, abs=1e-6)

    @given(est=st.floats(-1e9, 1e9), interval=st.floats(1e-4, 10.0))
    @settings(max_examples=200)
    def test_freq_step_never_exceeds_windup_span(self, est, interval):
        servo = ServoState(locked=True)
        _, freq = servo_update(servo, est, interval)
        assert abs(servo.integrator_ppm) <= servo.anti_windup_ppm
        assert abs(freq) <= 2.0 * servo.anti_windup_ppm


class TestDriftWalk:
    def test_zero_sigma_is_identity(self):
        clock = ClockModel(drift_ppm=5.0)
        out = advance_drift(clock, 10.0, np.random.default_rng(0))
        assert out.drift_ppm == 5.0

    def test_step_scales_with_sqrt_dt(self):
        clock = ClockModel(drift_walk_sigma_ppm_per_s=0.1)
        steps = []
        rng = np.random.default_rng(42)
        for _ in range(4000):
            steps.append(advance_drift(clock, 4.0, rng).drift_ppm)
        assert np.std(steps) == pytest.approx(0.2, rel=0.05)

    def test_rejects_negative_dt(self):
        with pytest.raises(ValueError):
            advance_drift(ClockModel(), -1.0, np.random.default_rng(0))


class TestPhcState:
    def make(self):
        return PhcState(base_clock=ClockModel(offset_ns=500.0, drift_ppm=3.0))

    def test_time_at_includes_servo_terms(self):
        phc = self.make()
        phc.step_phase(-500.0)
        assert phc.time_at(0.0) == pytest.approx(0.0)
        phc.slew_frequency(0.0, -3.0)
        assert phc.time_at(1e9) == pytest.approx(1e9)

    def test_slew_keeps_time_continuous(self):
        phc = self.make()
        t = 7.3e8
        before = phc.time_at(t)
        phc.slew_frequency(t, 12.5)
        assert phc.time_at(t) == pytest.approx(before)
        assert phc.rate() == pytest.approx(1.0 + 15.5e-6)

    def test_read_time_truncates_to_resolution(self):
        phc = PhcState(base_clock=ClockModel(), resolution_ns=8.0)
        assert phc.read_time(123.0) == 120.0

    def test_crossing_inverts_time_at(self):
        phc = self.make()
        phc.slew_frequency(0.0, -1.0)
        target = 5e9
        t_cross = phc.crossing_true_time(target, 1e9)
        assert phc.time_at(t_cross) == pytest.approx(target, abs=1e-6)

    def test_rejects_bad_resolution(self):
        with pytest.raises(ValueError):
            PhcState(base_clock=ClockModel(), resolution_ns=0.0)
