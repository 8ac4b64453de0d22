import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tclfreq.measurement import (F_NOM, FrequencyMeter, MeasurementConfig, MeasurementState,
                                 filter_step, measure_rocof)

CFG = MeasurementConfig()


def run_filter(samples, state=None, cfg=CFG):
    state = state or MeasurementState.initial()
    out = []
    for x in samples:
        state = filter_step(x, state, cfg)
        out.append(state)
    return out


def test_constant_input_is_fixed_point():
    s = run_filter([50.0] * 10)[-1]
    assert s.filtered_freq == 50.0
    assert s.rocof == 0.0


def test_step_settles_within_520ms():
    # samples at t = 0.02, 0.04, ... after a step applied at t = 0
    states = run_filter([50.1] * 40)
    times = 0.02 * np.arange(1, 41)
    err = np.array([abs(s.filtered_freq - 50.1) for s in states])
    first_inside = times[np.argmax(err <= 0.01 * 0.1)]
    assert first_inside <= 0.52
    # oracle: a^k <= 0.01 with a = exp(-Tc/T)
    k = math.ceil(math.log(100) / (0.02 / 0.1))
    assert first_inside == pytest.approx(0.02 * k)


def test_step_down_value_at_100ms():
    s = run_filter([49.9] * 5)[-1]
    oracle = 50.0 - 0.1 * (1.0 - math.exp(-0.1 / 0.1))
    assert s.filtered_freq == pytest.approx(oracle, abs=1e-13)
    assert s.filtered_freq == pytest.approx(49.93678794411714, abs=1e-13)  # frozen


def test_rocof_differencing():
    st0 = MeasurementState(filtered_freq=49.998, prev_filtered_freq=50.0)
    assert measure_rocof(st0, CFG) == pytest.approx(-0.1)
    st1 = MeasurementState(filtered_freq=50.0, prev_filtered_freq=50.0)
    assert measure_rocof(st1, CFG) == 0.0


def test_ramp_rocof_converges_to_slope():
    t = 0.02 * np.arange(1, 501)
    states = run_filter(50.0 + 0.2 * t)
    assert states[-1].rocof == pytest.approx(0.2, rel=1e-9)
    # steady lag of a first-order filter behind a ramp is slope*T
    assert 50.0 + 0.2 * t[-1] - states[-1].filtered_freq == pytest.approx(0.2 * 0.1, rel=0.1)


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        filter_step(float("nan"), MeasurementState.initial(), CFG)
    with pytest.raises(ValueError):
        MeasurementConfig(sample_period=0.0)


def test_meter_matches_pure_filter():
    rng = np.random.default_rng(3)
    raw = 50 + 0.1 * rng.standard_normal(200)
    meter = FrequencyMeter(CFG)
    states = run_filter(raw)
    for x, s in zip(raw, states):
        meter.update(x)
        assert meter.filtered == s.filtered_freq
        assert meter.rocof == s.rocof
    assert meter.freq_deviation == pytest.approx(states[-1].filtered_freq - F_NOM)


@given(st.floats(40.0, 60.0), st.integers(1, 50))
def test_dc_gain_is_one(value, n):
    s = run_filter([value] * n, MeasurementState.initial(value))[-1]
    assert s.filtered_freq == value
    assert s.rocof == 0.0


@given(st.floats(48.0, 52.0), st.floats(48.0, 52.0))
def test_no_overshoot(start, target):
    states = run_filter([target] * 60, MeasurementState.initial(start))
    lo, hi = min(start, target), max(start, target)
    prev = start
    for s in states:
        assert lo - 1e-12 <= s.filtered_freq <= hi + 1e-12
        assert (s.filtered_freq - prev) * (target - start) >= -1e-15
        prev = s.filtered_freq


@settings(max_examples=50)
@given(st.lists(st.floats(49.0, 51.0), min_size=2, max_size=80))
def test_rocof_bounded_by_sample_range(raw):
    states = run_filter(raw)
    filt = [F_NOM] + [s.filtered_freq for s in states]
    bound = (max(filt) - min(filt)) / CFG.sample_period
    for s in states:
        assert abs(s.rocof) <= bound + 1e-9
        assert s.rocof == pytest.approx((s.filtered_freq - s.prev_filtered_freq) / 0.02)
