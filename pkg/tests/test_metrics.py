import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swiftsim.errors import InvalidArgument, NoTransition
from swiftsim.metrics import (Cdf, SwitchMetrics, build_cdf, extinction_ratio, freq_offset_stats,
                              mse_fitness, overshoot_fraction, rise_time_10_90, settling_time,
                              transition_time_90_90)
from swiftsim.signal import SampledWaveform

RATE = 50e9
TAU = 1e-9


def first_order_step(tau=TAU, n_pre=400, n=2000, lo=0.0, hi=1.0):
    t = np.arange(n) / RATE
    y = lo + (hi - lo) * (1 - np.exp(-t / tau))
    return SampledWaveform(np.r_[np.full(n_pre, lo), y], RATE), n_pre / RATE


def second_order_step(zeta, fn=1e9, rate=500e9, dur=30e-9):
    t = np.arange(int(dur * rate)) / rate
    wn = 2 * np.pi * fn
    wd = wn * np.sqrt(1 - zeta ** 2)
    y = 1 - np.exp(-zeta * wn * t) * np.sin(wd * t + np.arccos(zeta)) / np.sqrt(1 - zeta ** 2)
    pre = y.size // 8
    return SampledWaveform(np.r_[np.zeros(pre), y], rate), pre / rate


def test_settling_first_order_is_tau_ln20():
    w, t0 = first_order_step()
    assert abs(settling_time(w, 1.0, 0.05, t0) - TAU * math.log(20)) <= 2 / RATE


def test_rise_first_order_is_tau_ln9():
    w, t0 = first_order_step()
    assert abs(rise_time_10_90(w, t0) - TAU * math.log(9)) <= 2 / RATE


def test_rise_handles_falling_edge():
    w, t0 = first_order_step(lo=5.0, hi=1.0)
    assert abs(rise_time_10_90(w, t0) - TAU * math.log(9)) <= 2 / RATE


@pytest.mark.parametrize("zeta", [0.2, 0.35, 0.5])
def test_second_order_overshoot(zeta):
    w, t0 = second_order_step(zeta)
    expected = math.exp(-math.pi * zeta / math.sqrt(1 - zeta ** 2))
    assert overshoot_fraction(w, t0) == pytest.approx(expected, rel=0.01)


def test_settling_edge_cases():
    w = SampledWaveform(np.ones(100), RATE)
    assert settling_time(w, 1.0) == 0.0
    w = SampledWaveform(np.r_[np.ones(99), 2.0], RATE)
    assert settling_time(w, 1.0) == math.inf
    with pytest.raises(InvalidArgument):
        settling_time(w, 0.0)


def test_no_transition_on_flat_trace():
    w = SampledWaveform(np.full(100, 3.0), RATE)
    with pytest.raises(NoTransition):
        rise_time_10_90(w)
    with pytest.raises(NoTransition):
        overshoot_fraction(w)
    with pytest.raises(NoTransition):
        transition_time_90_90(w, 1e-9)


def test_90_90_single_trace_level_change():
    # old level 1 decays away; the new level 2 rises after a delay D
    n, d = 3000, 10 * TAU
    t = np.arange(n) / RATE
    old = np.exp(-t / TAU)
    new = np.where(t >= d, 2 * (1 - np.exp(-(t - d) / TAU)), 0.0)
    pre = 400
    y = np.r_[np.ones(pre), old + new]
    w = SampledWaveform(y, RATE)
    got = transition_time_90_90(w, pre / RATE)
    assert abs(got - (d + TAU * math.log(9))) <= 2 / RATE


def test_90_90_two_trace_crossfade():
    # old e^{-t/tau}, new 1 - e^{-(t-tau)/tau}: tau (1 + ln 9)
    n, pre = 3000, 400
    t = np.arange(n) / RATE
    old = SampledWaveform(np.r_[np.ones(pre), np.exp(-t / TAU)], RATE)
    new = SampledWaveform(np.r_[np.zeros(pre),
                                np.where(t >= TAU, 1 - np.exp(-(t - TAU) / TAU), 0.0)], RATE)
    got = transition_time_90_90(old, pre / RATE, incoming=new)
    assert abs(got - TAU * (1 + math.log(9))) <= 2 / RATE


def test_90_90_two_trace_errors():
    a = SampledWaveform(np.ones(100), RATE)
    with pytest.raises(InvalidArgument):
        transition_time_90_90(a, 0.0, incoming=SampledWaveform(np.ones(50), RATE))
    with pytest.raises(NoTransition):
        transition_time_90_90(a, 0.0, incoming=a)


def test_freq_offset_stats_exponential():
    amp, tau, tol = 200.0, 5e-9, 5.0
    t = np.arange(4000) / RATE
    w = SampledWaveform(amp * np.exp(-t / tau), RATE)
    at, within = freq_offset_stats(w, 20e-9, tol)
    assert at == pytest.approx(amp * math.exp(-4), rel=1e-6)
    assert abs(within - tau * math.log(amp / tol)) <= 2 / RATE


def test_freq_offset_stats_never_settles_and_short_record():
    w = SampledWaveform(np.full(2000, 10.0), RATE)
    assert freq_offset_stats(w, 20e-9)[1] == math.inf
    with pytest.raises(InvalidArgument):
        freq_offset_stats(SampledWaveform(np.zeros(10), RATE), 20e-9)


def test_mse_and_extinction():
    a = SampledWaveform(np.full(10, 2.0), RATE)
    b = SampledWaveform(np.full(10, 1.0), RATE)
    assert mse_fitness(a, b) == 1.0
    assert mse_fitness(a, a) == 0.0
    with pytest.raises(InvalidArgument):
        mse_fitness(a, SampledWaveform(np.ones(30), RATE))
    assert extinction_ratio(SampledWaveform(np.full(10, 100.0), RATE), b) == pytest.approx(20.0)
    with pytest.raises(InvalidArgument):
        extinction_ratio(a, SampledWaveform(np.zeros(10), RATE))


def test_switch_metrics_json():
    m = SwitchMetrics(rise_10_90_s=1e-9, settle_pm5pct_s=math.inf, extinction_db=30.0)
    d = m.to_json_dict()
    assert d["rise_10_90_ns"] == pytest.approx(1.0)
    assert d["settle_pm5pct_ns"] is None
    assert d["transition_90_90_ns"] is None
    assert len(m.csv_row()) == len(SwitchMetrics.csv_header())
    with pytest.raises(InvalidArgument):
        SwitchMetrics(rise_10_90_s=-1.0)
    with pytest.raises(InvalidArgument):
        SwitchMetrics(overshoot_fraction=-0.1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1e-7), min_size=1, max_size=100))
def test_cdf_properties(samples):
    cdf = build_cdf(samples)
    assert np.all(np.diff(cdf.values) >= 0)
    assert np.all(np.diff(cdf.fractions) >= 0)
    assert cdf.fractions[-1] == 1.0
    assert cdf.max == max(samples)
    for x in samples[:10]:
        assert cdf.fraction_at(x) == pytest.approx(sum(s <= x for s in samples) / len(samples))


def test_cdf_ties_and_csv():
    cdf = build_cdf([2.0, 1.0, 2.0, 3.0])
    assert list(cdf.fractions) == [0.25, 0.75, 0.75, 1.0]
    assert cdf.fraction_at(0.5) == 0.0
    text = cdf.to_csv(1.0, "x", "hdr")
    assert text.splitlines()[:2] == ["# hdr", "x,fraction"]
    with pytest.raises(InvalidArgument):
        build_cdf([])
    with pytest.raises(InvalidArgument):
        Cdf([1.0, 2.0], [0.6, 0.5])
