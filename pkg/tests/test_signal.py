import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swiftsim.errors import InvalidArgument
from swiftsim.signal import (AwgModel, SampledWaveform, Units, apply_awg, first_order_lowpass,
                             laser_awg, resample, resample_array, soa_awg, synthesize_square)


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_waveform_rejects_bad_input():
    with pytest.raises(InvalidArgument):
        SampledWaveform([], 1e9)
    with pytest.raises(InvalidArgument):
        SampledWaveform([0.0, np.nan], 1e9)
    with pytest.raises(InvalidArgument):
        SampledWaveform([0.0], 0.0)
    with pytest.raises(InvalidArgument):
        SampledWaveform([0.0], 1e9, units="furlong")


def test_waveform_is_read_only():
    w = SampledWaveform([1.0, 2.0], 1e9)
    with pytest.raises(ValueError):
        w.samples[0] = 5.0


def test_times_and_window():
    w = SampledWaveform(np.arange(10.0), 1e9, start_time_s=1e-9)
    assert w.times()[0] == 1e-9
    assert math.isclose(w.end_time_s, 11e-9)
    sub = w.window(3e-9, 6e-9)
    assert list(sub.samples) == [2.0, 3.0, 4.0]
    assert math.isclose(sub.start_time_s, 3e-9)
    with pytest.raises(InvalidArgument):
        w.window(50e-9, 60e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=1, max_size=40), st.floats(1e3, 1e12), finite,
       st.sampled_from(list(Units)))
def test_json_roundtrip(values, rate, t0, units):
    w = SampledWaveform(values, rate, t0 * 1e-12, units)
    assert SampledWaveform.from_json(w.to_json()) == w


@settings(max_examples=30, deadline=None)
@given(st.lists(finite, min_size=2, max_size=40))
def test_csv_roundtrip(values):
    w = SampledWaveform(values, 50e9, 0.0, Units.MA)
    back = SampledWaveform.from_csv(w.to_csv("note"))
    assert back.units == Units.MA
    assert np.array_equal(back.samples, w.samples)
    assert math.isclose(back.sample_rate_hz, 50e9, rel_tol=1e-9)


def test_square_duty_and_length():
    w = synthesize_square(40e-9, 1.0, 0.0, duty=0.25, n_periods=3, sample_rate_hz=1e9)
    assert len(w) == 120
    assert w.samples.sum() == 30
    assert list(w.samples[:11]) == [1.0] * 10 + [0.0]


def test_square_phase_shifts_high_window():
    w = synthesize_square(10e-9, 1.0, 0.0, phase_s=5e-9, sample_rate_hz=1e9)
    assert list(w.samples) == [0.0] * 5 + [1.0] * 5


@pytest.mark.parametrize("kw", [dict(period_s=0), dict(duty=1.0), dict(duty=0.0),
                                dict(period_s=2e-9), dict(n_periods=0)])
def test_square_rejects(kw):
    args = dict(period_s=40e-9, high=1.0, low=0.0, sample_rate_hz=1e9)
    args.update(kw)
    with pytest.raises(InvalidArgument):
        synthesize_square(**args)


def test_resample_up_holds_and_down_averages():
    x = np.array([1.0, 3.0])
    assert list(resample_array(x, 1.0, 3.0)) == [1, 1, 1, 3, 3, 3]
    assert list(resample_array(np.array([1.0, 3.0, 5.0, 7.0]), 2.0, 1.0)) == [2.0, 6.0]


def test_resample_non_integer_ratio_is_area_weighted():
    # 3 samples -> 2: cells [0,1.5) and [1.5,3)
    y = resample_array(np.array([0.0, 3.0, 6.0]), 3.0, 2.0)
    assert np.allclose(y, [1.0, 5.0])


@settings(max_examples=40, deadline=None)
@given(st.lists(finite, min_size=4, max_size=64), st.integers(2, 5))
def test_resample_down_preserves_mean(values, k):
    n = len(values) - len(values) % k
    x = np.array(values[:n]) if n else np.array(values[:k] * 1)
    n = x.size - x.size % k
    x = x[:n] if n else np.repeat(x[:1], k)
    y = resample_array(x, float(k), 1.0)
    assert math.isclose(y.mean(), x.mean(), rel_tol=1e-9, abs_tol=1e-6)


def test_resample_duration_within_one_output_sample():
    w = SampledWaveform(np.ones(240), 6e9)
    for rate in (12e9, 50e9, 5e9):
        r = resample(w, rate)
        assert abs(r.duration - w.duration) <= 1 / rate + 1e-18


def test_lowpass_step_matches_exponential():
    fs, fc = 50e9, 1e9
    x = np.r_[np.zeros(10), np.ones(500)]
    y = first_order_lowpass(x, fs, fc)
    n = np.arange(500)
    expected = 1 - np.exp(-2 * np.pi * fc * n / fs)
    assert np.allclose(y[10:], expected, atol=1e-12)
    assert np.all(y[:10] == 0)


def test_lowpass_starts_in_steady_state():
    y = first_order_lowpass(np.full(100, 7.5), 1e9, 1e8)
    assert np.allclose(y, 7.5)


def test_awg_quantizer_mid_rise_error_bound():
    awg = AwgModel(1e9, 4e8, 0.0, 100.0, quantization_bits=4)
    x = np.linspace(0, 100, 1001)
    q = awg.quantize(x)
    assert np.max(np.abs(q - x)) <= awg.lsb / 2 + 1e-12
    assert len(np.unique(q)) == 16
    assert q.min() == awg.lsb / 2


def test_apply_awg_clamps_range():
    awg = AwgModel(1e9, 4e8, 0.0, 10.0, quantization_bits=None)
    w = SampledWaveform(np.full(50, 25.0), 1e9, units=Units.MA)
    assert np.allclose(apply_awg(w, awg).samples, 10.0)
    w = SampledWaveform(np.full(50, -5.0), 1e9, units=Units.MA)
    assert np.allclose(apply_awg(w, awg).samples, 0.0)


def test_apply_awg_unit_mismatch():
    w = SampledWaveform(np.zeros(8), 1e9, units=Units.V)
    with pytest.raises(InvalidArgument):
        apply_awg(w, laser_awg())


def test_apply_awg_output_rate():
    w = SampledWaveform(np.r_[np.zeros(120), np.full(120, 45.0)], 6e9, units=Units.MA)
    out = apply_awg(w, soa_awg(), output_rate_hz=50e9)
    assert out.sample_rate_hz == 50e9
    assert len(out) == 2000
    # the 5 GHz pole has settled well before the record ends
    assert abs(out.samples[-1] - soa_awg().quantize(45.0)) < 1e-6


def test_awg_validation():
    with pytest.raises(InvalidArgument):
        AwgModel(1e9, 6e8, 0.0, 1.0)
    with pytest.raises(InvalidArgument):
        AwgModel(1e9, 1e8, 1.0, 1.0)
    with pytest.raises(InvalidArgument):
        AwgModel(1e9, 1e8, 0.0, 1.0, quantization_bits=0)
    with pytest.raises(InvalidArgument):
        AwgModel.from_json_dict({**laser_awg().to_json_dict(), "gain": 2})
    assert AwgModel.from_json_dict(laser_awg().to_json_dict()) == laser_awg()


def test_square_examples_at_12_gsps():
    w = synthesize_square(80e-9, 1.0, 0.0, sample_rate_hz=12e9)
    assert len(w) == 960 and w.samples[:480].sum() == 480 and w.samples[480:].sum() == 0
    w = synthesize_square(40e-9, 1.0, 0.0, n_periods=2, sample_rate_hz=12e9)
    assert len(w) == 960 and w.samples[:480].sum() == 240
    assert np.all(synthesize_square(40e-9, 2.5, 2.5, sample_rate_hz=12e9).samples == 2.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), finite, finite, st.integers(1, 4))
def test_square_mean(duty, high, low, n_periods):
    # 1000 samples per period keeps duty * count close to an integer count
    w = synthesize_square(1e-6, high, low, duty=duty, n_periods=n_periods, sample_rate_hz=1e9)
    n_high = round(np.count_nonzero(w.samples == high) / n_periods) if high != low else 0
    if high != low:
        assert abs(n_high - duty * 1000) <= 1
        assert w.samples.mean() == pytest.approx(
            (n_high * high + (1000 - n_high) * low) / 1000, rel=1e-9, abs=1e-9)


def test_resample_hold_average_and_constant():
    assert list(resample_array(np.array([0.0, 1.0]), 1.0, 2.0)) == [0, 0, 1, 1]
    assert list(resample_array(np.array([0.0, 1.0, 1.0, 1.0]), 2.0, 1.0)) == [0.5, 1.0]
    for rate in (0.5e9, 3e9, 7e9):
        assert np.allclose(resample(SampledWaveform(np.full(30, 4.2), 1e9), rate).samples, 4.2,
                           rtol=1e-14)


def test_awg_constant_and_clamp_examples():
    awg = AwgModel(1e9, 1e8, 0.0, 1.0)
    w = SampledWaveform(np.full(40, 0.37), 1e9, units=Units.MA)
    assert np.allclose(apply_awg(w, awg).samples, 0.37)
    w = SampledWaveform(np.full(40, 1.7), 1e9, units=Units.MA)
    assert np.allclose(apply_awg(w, awg).samples, 1.0)


def test_awg_step_rise_is_035_over_fc():
    fc = 1e9
    awg = AwgModel(100e9, fc, -1.0, 2.0)
    w = SampledWaveform(np.r_[np.zeros(1000), np.ones(4000)], 100e9, units=Units.MA)
    y = apply_awg(w, awg)
    from swiftsim.metrics import rise_time_10_90
    got = rise_time_10_90(y, 10e-9)
    assert abs(got - math.log(9) / (2 * math.pi * fc)) <= 2 / 100e9
    assert got == pytest.approx(0.35 / fc, rel=0.01)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=4, max_size=50))
def test_awg_idempotent_and_passive(values):
    awg = laser_awg()
    w = SampledWaveform(np.repeat(values, 20), awg.sample_rate_hz * 20, units=Units.MA)
    once = apply_awg(w, awg)
    twice = apply_awg(once, awg)
    # a second pass re-quantizes and low-passes again; stays within one level of change
    lp = first_order_lowpass(once.samples, awg.sample_rate_hz, awg.analog_bandwidth_hz)
    assert np.max(np.abs(twice.samples - lp)) <= awg.lsb + 1e-9
    # from rest, the unit-DC-gain pole cannot add energy
    x = np.r_[0.0, values]
    y = first_order_lowpass(x, 1e9, 1e8)
    assert np.sum(y ** 2) <= np.sum(x ** 2) + 1e-9
