import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import kurtosis, skew

from silicon_entropy.power_noise import (
    BUILTIN_PROFILES,
    DvftState,
    SupplyProfile,
    comparator_bit,
    dvft_step,
    get_profile,
    run_dvft,
    sample_supply,
    supply_series,
)
from silicon_entropy.randtest import run_suite

PHI0 = 1 / math.sqrt(2 * math.pi)


# -- supply model ------------------------------------------------------------------

@given(st.floats(0, 1e3))
def test_noiseless_supply_is_constant(t):
    p = SupplyProfile("flat", 3.3, 0.0)
    assert sample_supply(p, t, 0) == 3.3


def test_sample_supply_is_deterministic_and_rejects_negative_time():
    p = get_profile("usb")
    assert sample_supply(p, 0.25, 7) == sample_supply(p, 0.25, 7)
    assert sample_supply(p, 0.25, 7) != sample_supply(p, 0.25, 8)
    with pytest.raises(ValueError):
        sample_supply(p, -1.0, 0)


def test_fixed_time_samples_across_seeds():
    p = get_profile("computer")
    v = np.array([sample_supply(p, 0.5, s) for s in range(5000)])
    assert abs(v.mean() - p.mean_v) < 4 * p.noise_sigma_v / math.sqrt(v.size)


def test_series_moments():
    p = get_profile("bench")
    v = supply_series(p, 100_000, rng_seed=1)
    assert abs(v.mean() - p.mean_v) < 4 * p.noise_sigma_v / math.sqrt(v.size)
    assert abs(skew(v)) < 0.05
    assert abs(kurtosis(v)) < 0.1


def test_drift_slope_recovered():
    p = SupplyProfile("ramp", 5.0, 0.002, drift_v_per_s=0.010)
    dt = 1e-4
    v = supply_series(p, 200_000, rng_seed=2, dt=dt)
    t = dt * np.arange(v.size)
    slope = np.polyfit(t, v, 1)[0]
    se = p.noise_sigma_v / math.sqrt(np.sum((t - t.mean()) ** 2))
    assert abs(slope - 0.010) < 4 * se


def test_profiles():
    assert set(BUILTIN_PROFILES) == {"bench", "usb", "computer", "dc"}
    with pytest.raises(ValueError):
        get_profile("battery")
    with pytest.raises(ValueError):
        SupplyProfile("bad", 5.0, -0.1)


# -- comparator --------------------------------------------------------------------

def test_comparator_tie_is_zero():
    assert comparator_bit(5.0, 5.0) == 0
    assert comparator_bit(math.nextafter(5.0, 6.0), 5.0) == 1


def test_comparator_symmetric_noise():
    v = 5.0 + 0.003 * np.random.default_rng(3).standard_normal(1_000_000)
    frac = np.mean([comparator_bit(x, 5.0) for x in v[:2000]])
    assert 0.4 < frac < 0.6
    full = np.mean(v > 5.0)
    assert abs(full - 0.5) <= 3 * math.sqrt(0.25 / v.size)


# -- dvft_step ----------------------------------------------------------------------

def test_alternating_bits_return_every_two_steps():
    s = DvftState(v_ref=5.0, gain=2.0, charge_step=0.01)
    for _ in range(10):
        s = dvft_step(dvft_step(s, 1), 0)
        assert s.v_ref == pytest.approx(5.0, abs=1e-12)
        assert s.cap_charge == pytest.approx(0.5, abs=1e-12)
    assert s.step == 20 and s.history_ones == 10


def test_all_ones_saturates_and_raises_threshold():
    s = DvftState(v_ref=5.0, gain=2.0, charge_step=0.01)
    refs = [s.v_ref]
    for _ in range(150):
        s = dvft_step(s, 1)
        refs.append(s.v_ref)
        assert 0.0 <= s.cap_charge <= 1.0
    assert s.cap_charge == 1.0
    diffs = np.diff(refs)
    assert (diffs[:100] > 0).all() and (diffs >= 0).all()


@given(st.lists(st.integers(0, 1), max_size=300), st.floats(0.001, 0.5))
def test_charge_stays_in_unit_interval(bits, step):
    s = DvftState(v_ref=5.0, charge_step=step)
    for b in bits:
        s = dvft_step(s, b)
        assert 0.0 <= s.cap_charge <= 1.0 and math.isfinite(s.v_ref)


def test_state_validation():
    with pytest.raises(ValueError):
        DvftState(v_ref=float("nan"))
    with pytest.raises(ValueError):
        DvftState(v_ref=5.0, cap_charge=1.5)


# -- closed loop ---------------------------------------------------------------------

def test_run_dvft_replays_dvft_step():
    p = get_profile("usb")
    bits, trace = run_dvft(p, 5.3, 3000, rng_seed=4, charge_step=1e-3)
    volts = supply_series(p, 3000, 4)
    s = DvftState(5.3, charge_step=1e-3)
    for i, v in enumerate(volts):
        assert trace.v_ref[i] == s.v_ref
        s = dvft_step(s, comparator_bit(v, s.v_ref))
        assert trace.cap_charge[i] == s.cap_charge
        assert bits[i] == trace.bits[i]
    assert s.history_ones == bits.popcount()


def test_run_dvft_is_deterministic():
    a = run_dvft(get_profile("dc"), 5.1, 20_000, rng_seed=5)
    b = run_dvft(get_profile("dc"), 5.1, 20_000, rng_seed=5)
    assert a[0] == b[0]
    assert np.array_equal(a[1].v_ref, b[1].v_ref)
    assert a[1].to_csv(100) == b[1].to_csv(100)


def test_trace_csv_header():
    _, trace = run_dvft(get_profile("bench"), 5.0, 10, rng_seed=0)
    lines = trace.to_csv().splitlines()
    assert lines[0] == "step,voltage,v_ref,cap_charge,bit"
    assert len(lines) == 11


def test_start_at_fixed_point():
    p = get_profile("bench")
    bits, _ = run_dvft(p, p.mean_v, 50_000, rng_seed=6)
    assert abs(bits[-10_000:].ones_fraction() - 0.5) <= 0.02


@pytest.mark.parametrize("sign", [+1, -1])
def test_converges_from_ten_percent_offset(sign):
    p = get_profile("computer")
    bits, trace = run_dvft(p, p.mean_v * (1 + 0.1 * sign), 400_000, rng_seed=7)
    assert abs(bits[-10_000:].ones_fraction() - 0.5) <= 0.02
    assert abs(trace.v_ref[-1] - p.mean_v) < p.noise_sigma_v / 5


def test_loop_tracks_drift_open_loop_does_not():
    p = SupplyProfile("ramp", 5.0, 0.002, drift_v_per_s=0.010)
    closed, _ = run_dvft(p, p.mean_v, 1_000_000, rng_seed=8)
    opened, _ = run_dvft(p, p.mean_v, 1_000_000, rng_seed=8, gain=0.0)
    assert abs(closed.ones_fraction() - 0.5) <= 0.03
    assert opened.ones_fraction() > 0.6


def test_steady_state_variance_shrinks_with_gain():
    p = get_profile("bench")
    var = {}
    for gain in (2.0, 0.5):
        loop_coeff = 2.5e-6 * gain * PHI0 / p.noise_sigma_v
        assert 0 < loop_coeff < 2
        _, trace = run_dvft(p, p.mean_v, 300_000, rng_seed=9, gain=gain)
        var[gain] = float(np.var(trace.v_ref[-100_000:]))
        predicted = gain * 2.5e-6 * p.noise_sigma_v / (8 * PHI0)
        assert var[gain] == pytest.approx(predicted, rel=0.5)
    assert var[0.5] < var[2.0]


def test_trailing_megabit_passes_suite():
    p = get_profile("dc")
    bits, _ = run_dvft(p, p.mean_v * 1.1, 1_300_000, rng_seed=10)
    report = run_suite(bits[-1_000_000:])
    assert report.all_pass, report.to_text()
