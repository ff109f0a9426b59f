"""
Switching figures of merit.

Times are returned in seconds relative to the event marker passed in.  Steady
levels are medians over head/tail windows (default 10 % of the record each),
which keeps them robust to ringing.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Iterable, Optional, Tuple

import numpy as np

from .errors import InvalidArgument, NoTransition
from .signal import SampledWaveform, resample

__all__ = [
    "SwitchMetrics",
    "Cdf",
    "steady_levels",
    "rise_time_10_90",
    "settling_time",
    "transition_time_90_90",
    "overshoot_fraction",
    "freq_offset_stats",
    "mse_fitness",
    "extinction_ratio",
    "build_cdf",
    "SUSTAIN_SAMPLES",
]

#: a threshold crossing counts only if it holds for this many samples
SUSTAIN_SAMPLES = 3


@dataclass(frozen=True)
class SwitchMetrics:
    """Figures of merit for one switching event or slot; ``None`` = undefined."""

    rise_10_90_s: Optional[float] = None
    settle_pm5pct_s: Optional[float] = None
    transition_90_90_s: Optional[float] = None
    freq_offset_at_deadline_ghz: Optional[float] = None
    time_to_within_5ghz_s: Optional[float] = None
    overshoot_fraction: Optional[float] = None
    extinction_db: Optional[float] = None

    def __post_init__(self):
        for name in ("rise_10_90_s", "settle_pm5pct_s", "transition_90_90_s",
                     "time_to_within_5ghz_s"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise InvalidArgument(f"{name} must be >= 0, got {v}")
        if self.overshoot_fraction is not None and self.overshoot_fraction < 0:
            raise InvalidArgument("overshoot_fraction must be >= 0")

    def to_json_dict(self) -> dict:
        """Flat record, times in ns, ``None`` and infinities as ``null``."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            key = f.name[:-2] + "_ns" if f.name.endswith("_s") else f.name
            if v is not None and f.name.endswith("_s"):
                v = v * 1e9
            out[key] = v if v is None or math.isfinite(v) else None
        return out

    @staticmethod
    def csv_header() -> list:
        return list(SwitchMetrics().to_json_dict())

    def csv_row(self) -> list:
        return ["" if v is None else repr(float(v)) for v in self.to_json_dict().values()]


@dataclass(frozen=True, eq=False)
class Cdf:
    values: np.ndarray
    fractions: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        f = np.asarray(self.fractions, dtype=float)
        if v.shape != f.shape or v.size == 0:
            raise InvalidArgument("CDF values and fractions must be equal-length and non-empty")
        if np.any(np.diff(f) < 0) or not math.isclose(f[-1], 1.0):
            raise InvalidArgument("CDF fractions must be nondecreasing and end at 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "fractions", f)

    @property
    def max(self) -> float:
        return float(self.values[-1])

    def fraction_at(self, x: float) -> float:
        """Fraction of samples <= x."""
        i = np.searchsorted(self.values, x, side="right")
        return 0.0 if i == 0 else float(self.fractions[i - 1])

    def to_csv(self, scale: float = 1e9, value_name: str = "time_ns",
               header_comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header_comment:
            for line in header_comment.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([value_name, "fraction"])
        for v, f in zip(self.values, self.fractions):
            w.writerow([repr(float(v * scale)), repr(float(f))])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def steady_levels(w: SampledWaveform, head_frac: float = 0.1, tail_frac: float = 0.1
                  ) -> Tuple[float, float]:
    """Median of the first and last fractions of the record."""
    n = len(w)
    nh = max(1, int(round(head_frac * n)))
    nt = max(1, int(round(tail_frac * n)))
    return float(np.median(w.samples[:nh])), float(np.median(w.samples[-nt:]))


def _index_at(w: SampledWaveform, t: float) -> int:
    """First sample index with time >= t (clamped to the record)."""
    k = math.ceil((t - w.start_time_s) * w.sample_rate_hz - 1e-9)
    return min(max(k, 0), len(w) - 1)


def _crossing_time(w: SampledWaveform, i: int, level: float) -> float:
    """Interpolated time the segment (i-1, i) crosses ``level``."""
    t = w.start_time_s + i / w.sample_rate_hz
    if i == 0:
        return t
    y0, y1 = w.samples[i - 1], w.samples[i]
    if y1 == y0:
        return t
    frac = (level - y0) / (y1 - y0)
    frac = min(max(frac, 0.0), 1.0)
    return t - (1.0 - frac) / w.sample_rate_hz


def _first_up_crossing(y: np.ndarray, start: int, level: float, sustain: int = 1) -> Optional[int]:
    """First index >= start where y >= level holds for ``sustain`` samples.

    A run cut short by the end of the record counts as sustained.
    """
    above = y[start:] >= level
    if sustain > 1 and above.size:
        padded = np.concatenate([above, np.ones(sustain - 1, dtype=bool)]).astype(int)
        above = np.convolve(padded, np.ones(sustain, dtype=int), mode="valid") == sustain
    idx = np.flatnonzero(above)
    return start + int(idx[0]) if idx.size else None


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def rise_time_10_90(w: SampledWaveform, t_event_s: Optional[float] = None,
                    head_frac: float = 0.1, tail_frac: float = 0.1,
                    min_delta: float = 1e-9) -> float:
    """10-90 % transition time after ``t_event_s`` (default: record start).

    Works for falling edges too: the waveform is normalised by its level
    change before thresholding.
    """
    lvl0, lvl1 = steady_levels(w, head_frac, tail_frac)
    delta = lvl1 - lvl0
    if abs(delta) <= min_delta * max(abs(lvl0), abs(lvl1), 1e-300):
        raise NoTransition("no level change around the event")
    norm = w.with_samples((w.samples - lvl0) / delta)
    start = _index_at(w, w.start_time_s if t_event_s is None else t_event_s)
    i10 = _first_up_crossing(norm.samples, start, 0.1)
    if i10 is None:
        raise NoTransition("waveform never reaches 10 % of its level change")
    i90 = _first_up_crossing(norm.samples, i10, 0.9)
    if i90 is None:
        raise NoTransition("waveform never reaches 90 % of its level change")
    t10 = _crossing_time(norm, i10, 0.1) if i10 > start else w.start_time_s + i10 / w.sample_rate_hz
    t90 = _crossing_time(norm, i90, 0.9) if i90 > start else w.start_time_s + i90 / w.sample_rate_hz
    return float(max(t90 - t10, 0.0))


def settling_time(w: SampledWaveform, target_level: float, band_fraction: float = 0.05,
                  t_event_s: Optional[float] = None) -> float:
    """Time after the event until ``w`` stays within +/-band of the target.

    Returns 0 if the record never leaves the band after the event and
    ``inf`` if it is still outside at the final sample.
    """
    if target_level == 0:
        raise InvalidArgument("fractional settling band needs a non-zero target")
    t_event = w.start_time_s if t_event_s is None else t_event_s
    band = abs(target_level) * band_fraction
    start = _index_at(w, t_event)
    y = w.samples[start:]
    outside = np.flatnonzero(np.abs(y - target_level) > band)
    if outside.size == 0:
        return 0.0
    last = start + int(outside[-1])
    if last == len(w) - 1:
        return math.inf
    # interpolate the re-entry between ``last`` and ``last + 1``
    y0, y1 = w.samples[last], w.samples[last + 1]
    edge = target_level + band if y0 > target_level else target_level - band
    t_last = w.start_time_s + last / w.sample_rate_hz
    frac = (edge - y0) / (y1 - y0) if y1 != y0 else 1.0
    t_in = t_last + min(max(frac, 0.0), 1.0) / w.sample_rate_hz
    return float(max(t_in - t_event, 0.0))


def transition_time_90_90(w: SampledWaveform, t_switch_s: float, head_frac: float = 0.1,
                          tail_frac: float = 0.1, lookback_s: float = 0.0,
                          sustain: int = SUSTAIN_SAMPLES,
                          incoming: Optional[SampledWaveform] = None) -> float:
    """Slot-to-slot switching time on an intensity trace.

    From the last fall through 90 % of the old level to the first sustained
    rise through 90 % of the new level.  The arrival search starts at
    ``t_switch_s - lookback_s``; if the trace never falls below 90 % of the
    old level the departure is taken to be the switch instant.

    With ``incoming`` given, ``w`` is the outgoing channel alone and
    ``incoming`` the arriving one on the same time grid: the old level is
    the head of ``w``, the new level the tail of ``incoming``, and the
    arrival is searched on ``incoming`` only.  A departure that comes after
    the arrival (overlapping channels) gives zero.
    """
    if incoming is not None:
        return _transition_two_traces(w, incoming, t_switch_s, head_frac, tail_frac,
                                      lookback_s, sustain)
    old, new = steady_levels(w, head_frac, tail_frac)
    if old <= 0 or new <= 0:
        raise NoTransition("90-90 transition needs positive steady levels")
    thr_old, thr_new = 0.9 * old, 0.9 * new
    y = w.samples
    i0 = _index_at(w, t_switch_s - lookback_s)
    below = np.flatnonzero(y[i0:] < thr_new)
    dipped = np.any(y[i0:] < min(thr_old, thr_new))
    if not dipped and abs(new - old) <= 0.1 * max(old, new):
        raise NoTransition("levels indistinct and no dip at the boundary")
    if below.size == 0:
        # already at (or above) the new level from the search start
        t_arr = w.start_time_s + i0 / w.sample_rate_hz
        i_arr = i0
    else:
        k = i0 + int(below[0])
        i_arr = _first_up_crossing(y, k, thr_new, sustain)
        if i_arr is None:
            raise NoTransition("trace never settles above 90 % of the new level")
        t_arr = _crossing_time(w, i_arr, thr_new)
    # last downward crossing of the old threshold before arrival
    seg = y[: i_arr + 1]
    down = np.flatnonzero((seg[1:] < thr_old) & (seg[:-1] >= thr_old))
    if down.size:
        t_dep = _crossing_time(w, int(down[-1]) + 1, thr_old)
    else:
        t_dep = min(t_switch_s, t_arr)
    return max(t_arr - t_dep, 0.0)


def _transition_two_traces(out_w: SampledWaveform, in_w: SampledWaveform, t_switch_s: float,
                           head_frac: float, tail_frac: float, lookback_s: float,
                           sustain: int) -> float:
    if (len(out_w) != len(in_w) or out_w.sample_rate_hz != in_w.sample_rate_hz
            or not math.isclose(out_w.start_time_s, in_w.start_time_s, abs_tol=0.5 * out_w.dt)):
        raise InvalidArgument("outgoing and incoming traces must share their time grid")
    old = steady_levels(out_w, head_frac, tail_frac)[0]
    new = steady_levels(in_w, head_frac, tail_frac)[1]
    if old <= 0 or new <= 0:
        raise NoTransition("90-90 transition needs positive steady levels")
    thr_old, thr_new = 0.9 * old, 0.9 * new
    yi = in_w.samples
    i0 = _index_at(in_w, t_switch_s - lookback_s)
    below = np.flatnonzero(yi[i0:] < thr_new)
    if below.size == 0:
        raise NoTransition("incoming channel is already at its level before the switch")
    i_arr = _first_up_crossing(yi, i0 + int(below[0]), thr_new, sustain)
    if i_arr is None:
        raise NoTransition("incoming channel never settles above 90 % of its level")
    t_arr = _crossing_time(in_w, i_arr, thr_new)
    yo = out_w.samples[: i_arr + 1]
    down = np.flatnonzero((yo[1:] < thr_old) & (yo[:-1] >= thr_old))
    if down.size == 0:
        return 0.0
    t_dep = _crossing_time(out_w, int(down[-1]) + 1, thr_old)
    return max(t_arr - t_dep, 0.0)


def overshoot_fraction(w: SampledWaveform, t_event_s: Optional[float] = None,
                       head_frac: float = 0.1, tail_frac: float = 0.1) -> float:
    """Peak excursion beyond the final level as a fraction of the step."""
    lvl0, lvl1 = steady_levels(w, head_frac, tail_frac)
    delta = lvl1 - lvl0
    if delta == 0:
        raise NoTransition("no level change around the event")
    start = _index_at(w, w.start_time_s if t_event_s is None else t_event_s)
    norm = (w.samples[start:] - lvl0) / delta
    return max(float(norm.max()) - 1.0, 0.0)


def freq_offset_stats(offset: SampledWaveform, deadline_s: float = 20e-9, tol_ghz: float = 5.0,
                      t_event_s: Optional[float] = None) -> Tuple[float, float]:
    """Frequency offset at the deadline and time to stay within tolerance.

    Times are relative to ``t_event_s`` (default: record start).  The
    time-to-within considers the whole record after the event and is ``inf``
    when the final sample is still out of tolerance.
    """
    t0 = offset.start_time_s if t_event_s is None else t_event_s
    t = offset.times()
    if t[-1] < t0 + deadline_s - 1e-6 / offset.sample_rate_hz:
        raise InvalidArgument("offset record ends before the deadline")
    at_deadline = float(np.interp(t0 + deadline_s, t, offset.samples))
    start = _index_at(offset, t0)
    mag = np.abs(offset.samples[start:])
    outside = np.flatnonzero(mag > tol_ghz)
    if outside.size == 0:
        return at_deadline, 0.0
    last = start + int(outside[-1])
    if last == len(offset) - 1:
        return at_deadline, math.inf
    m0, m1 = abs(offset.samples[last]), abs(offset.samples[last + 1])
    frac = (m0 - tol_ghz) / (m0 - m1) if m0 != m1 else 1.0
    t_in = t[last] + min(max(frac, 0.0), 1.0) / offset.sample_rate_hz
    return at_deadline, float(max(t_in - t0, 0.0))


def mse_fitness(w: SampledWaveform, set_point: SampledWaveform) -> float:
    """Mean squared error against the set point; lower is better."""
    if abs(w.duration - set_point.duration) > 1.0 / min(w.sample_rate_hz, set_point.sample_rate_hz) + 1e-15:
        raise InvalidArgument("waveform and set point durations differ by more than one sample")
    sp = set_point if set_point.sample_rate_hz == w.sample_rate_hz else resample(set_point, w.sample_rate_hz)
    n = min(len(w), len(sp))
    d = w.samples[:n] - sp.samples[:n]
    return float(np.mean(d * d))


def extinction_ratio(on: SampledWaveform, off: SampledWaveform, steady_frac: float = 0.5) -> float:
    """10*log10 of the steady on/off power ratio, in dB.

    Steady means are taken over the final ``steady_frac`` of each record.
    """
    if np.any(on.samples <= 0) or np.any(off.samples <= 0):
        raise InvalidArgument("extinction ratio needs strictly positive powers")
    n_on = max(1, int(round(steady_frac * len(on))))
    n_off = max(1, int(round(steady_frac * len(off))))
    return 10.0 * math.log10(np.mean(on.samples[-n_on:]) / np.mean(off.samples[-n_off:]))


def build_cdf(samples: Iterable[float]) -> Cdf:
    """Empirical CDF; tied values share the cumulative fraction of the last tie."""
    x = np.sort(np.asarray(list(samples), dtype=float), kind="stable")
    if x.size == 0:
        raise InvalidArgument("cannot build a CDF from no samples")
    n = x.size
    # searchsorted right gives the count of values <= x for every element
    frac = np.searchsorted(x, x, side="right") / n
    return Cdf(x, frac)
