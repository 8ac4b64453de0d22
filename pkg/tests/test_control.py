import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from tclfreq.control import (BOILER_CONTROL, FRIDGE_CONTROL, ControlMode, ControlParams,
                             ControlState, alpha_schedule, assign_thresholds, combined_decision,
                             control_decision, equivalent_droop, pfr_decision,
                             predicted_power_delta, security_lockout, si_decision)


def test_threshold_mean_within_three_standard_errors():
    thr = assign_thresholds(1000, BOILER_CONTROL, seed=11)
    se = (0.8 - 0.05) / np.sqrt(12) / np.sqrt(1000)
    assert abs(thr.rocof.mean() - 0.425) < 3 * se
    assert abs(thr.freq.mean() - 0.425) < 3 * se
    assert thr.rocof.min() >= 0.05 and thr.rocof.max() <= 0.8


def test_threshold_ks_uniform():
    thr = assign_thresholds(10_000, FRIDGE_CONTROL, seed=5)
    ks_r = stats.kstest(thr.rocof, stats.uniform(0.05, 0.75).cdf)
    ks_f = stats.kstest(thr.freq, stats.uniform(0.1, 0.7).cdf)
    assert ks_r.pvalue > 0.01
    assert ks_f.pvalue > 0.01


def test_thresholds_deterministic():
    a = assign_thresholds(1, BOILER_CONTROL, seed=42)
    b = assign_thresholds(1, BOILER_CONTROL, seed=42)
    assert a.rocof[0] == b.rocof[0] and a.freq[0] == b.freq[0]
    with pytest.raises(ValueError):
        assign_thresholds(0, BOILER_CONTROL, seed=1)


def test_degenerate_interval_rejected():
    with pytest.raises(ValueError):
        ControlParams(rocof_act=0.8, rocof_max=0.8)
    with pytest.raises(ValueError):
        ControlParams(t_ramp=0.0)


def test_si_examples():
    assert si_decision(0, 0.5, 0.3, False) == 1
    assert si_decision(1, 0.5, 0.3, False) == 0
    assert si_decision(1, -0.5, 0.3, False) == -1
    assert si_decision(0, 0.5, 0.3, True) == 0


def test_pfr_examples():
    assert pfr_decision(0, 0.3, 0.2, False) == 1
    assert pfr_decision(0, 0.1, 0.2, False) == 0
    assert pfr_decision(1, -0.3, 0.2, False) == -1


def test_combined_blend_example():
    assert combined_decision(0, 0.0, 0.4, 0.3, 0.3, 0.5, False) == 0
    assert combined_decision(0, 0.0, 0.7, 0.3, 0.3, 0.5, False) == 1


def test_blend_endpoints_exhaustive():
    grid = np.linspace(-1.0, 1.0, 21)
    for q in (0, 1):
        for rocof in grid:
            for fdev in grid:
                for thr_r, thr_f in ((0.05, 0.8), (0.3, 0.2), (0.425, 0.425)):
                    for locked in (False, True):
                        assert (combined_decision(q, rocof, fdev, thr_r, thr_f, 0.0, locked)
                                == si_decision(q, rocof, thr_r, locked))
                        assert (combined_decision(q, rocof, fdev, thr_r, thr_f, 1.0, locked)
                                == pfr_decision(q, fdev, thr_f, locked))


def test_security_lockout_examples():
    assert not security_lockout(60.0, 50.0, 70.0)
    assert security_lockout(71.0, 50.0, 70.0)
    assert security_lockout(1.5, 2.0, 7.0)


def run_alpha(freq_dev_of_t, params=BOILER_CONTROL, dt=0.02, t_end=20.0):
    state = ControlState()
    out = []
    for k in range(int(round(t_end / dt))):
        t = (k + 1) * dt
        state = alpha_schedule(state, 0.0, freq_dev_of_t(t), params, dt)
        out.append((t, state.alpha))
    return np.array(out)


def test_alpha_zero_without_violation():
    a = run_alpha(lambda t: 0.04)
    assert np.all(a[:, 1] == 0.0)


def test_alpha_ramp_shape():
    trigger = 2.0
    a = run_alpha(lambda t: 0.2 if t >= trigger else 0.0)
    t_trig = a[np.argmax(a[:, 0] >= trigger - 1e-9), 0]
    half = np.interp(t_trig + 1.0 + 2.0, a[:, 0], a[:, 1])
    assert half == pytest.approx(0.5, abs=0.01)
    after = a[a[:, 0] >= t_trig + 1.0 + 4.0 + 0.02]
    assert np.all(after[:, 1] == 1.0)
    before = a[a[:, 0] <= t_trig + 1.0]
    assert np.all(before[:, 1] < 1e-12)


def test_alpha_reset_after_quiet_hold():
    a = run_alpha(lambda t: 0.2 if 1.0 <= t < 8.0 else 0.0, t_end=30.0)
    assert a[a[:, 0] < 17.9, 1].max() == 1.0
    assert np.all(a[a[:, 0] > 18.1, 1] == 0.0)


def test_predicted_power_delta_examples():
    dp = predicted_power_delta(400, 600, 1500.0, 0.425, BOILER_CONTROL, "si")
    assert dp == pytest.approx(600 * 1500 * (0.425 - 0.05) / (0.8 - 0.05))
    assert dp == pytest.approx(450e3)
    assert predicted_power_delta(400, 600, 1500.0, 0.04, BOILER_CONTROL, "si") == 0.0
    assert predicted_power_delta(400, 600, 1500.0, -0.04, BOILER_CONTROL, "pfr") == 0.0
    assert predicted_power_delta(400, 600, 1500.0, -2.0, BOILER_CONTROL, "pfr") == -400 * 1500.0
    assert equivalent_droop(1000, 1000, BOILER_CONTROL) == pytest.approx(0.015)


def test_monte_carlo_matches_prediction():
    rng = np.random.default_rng(0)
    counts = []
    for _ in range(400):
        thr = assign_thresholds(600, BOILER_CONTROL, rng)
        counts.append(np.sum(thr.rocof <= 0.425))
    assert np.mean(counts) * 1500 == pytest.approx(450e3, rel=0.01)


@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0), st.integers(0, 1000))
def test_predicted_delta_monotone(s1, s2, n_on):
    lo, hi = sorted((s1, s2))
    for kind in ("si", "pfr"):
        a = predicted_power_delta(n_on, 1000 - n_on, 1.0, lo, BOILER_CONTROL, kind)
        b = predicted_power_delta(n_on, 1000 - n_on, 1.0, hi, BOILER_CONTROL, kind)
        assert a <= b + 1e-9


@given(st.integers(0, 1), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.05, 0.8),
       st.floats(0.05, 0.8), st.floats(0, 1), st.booleans(), st.sampled_from(list(ControlMode)))
def test_composition_safety(q, rocof, fdev, thr_r, thr_f, alpha, locked, mode):
    forced = control_decision(int(mode), q, rocof, fdev, thr_r, thr_f, alpha, locked)
    assert q + forced in (0, 1)
    if locked or mode is ControlMode.NONE:
        assert forced == 0


def test_fridges_never_run_si():
    assert FRIDGE_CONTROL.effective_mode(ControlMode.SI) is ControlMode.NONE
    assert FRIDGE_CONTROL.effective_mode(ControlMode.SI_PFR) is ControlMode.PFR
    assert BOILER_CONTROL.effective_mode(ControlMode.SI_PFR) is ControlMode.SI_PFR
    assert FRIDGE_CONTROL.freq_act == 0.1


def test_mode_parsing():
    assert ControlMode.parse("SI_PFR") is ControlMode.SI_PFR
    assert ControlMode.parse("si-pfr").label == "si-pfr"
    with pytest.raises(ValueError):
        ControlMode.parse("droop")
