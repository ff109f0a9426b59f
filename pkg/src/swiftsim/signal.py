"""
Waveform synthesis, resampling and arbitrary-waveform-generator modelling.

Every module exchanges :class:`SampledWaveform` objects: a uniformly sampled,
real-valued signal with a start time and a unit tag.  The AWG model turns an
ideal drive definition into what actually reaches a device: clamped to the
output range, quantized, held at the AWG sample rate and band-limited by a
single-pole analog front end.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidArgument

__all__ = [
    "Units",
    "SampledWaveform",
    "AwgModel",
    "DEFAULT_SIM_RATE_HZ",
    "synthesize_square",
    "resample",
    "resample_array",
    "apply_awg",
    "apply_awg_array",
    "first_order_lowpass",
    "laser_awg",
    "soa_awg",
]

#: internal simulation rate, matches a 50 GS/s sampling oscilloscope
DEFAULT_SIM_RATE_HZ = 50e9


class Units(str, Enum):
    MA = "mA"
    V = "V"
    MW = "mW"
    GHZ = "GHz"
    DIMENSIONLESS = "dimensionless"


def _as_units(units) -> Units:
    try:
        return Units(units)
    except ValueError:
        raise InvalidArgument(f"unknown units {units!r}") from None


@dataclass(frozen=True, eq=False)
class SampledWaveform:
    """Uniformly sampled real-valued signal.

    Parameters
    ----------
    samples : array_like
        Sample values; copied into a read-only float64 array.
    sample_rate_hz : float
        Sampling rate, strictly positive.
    start_time_s : float, default 0
        Time stamp of the first sample.
    units : Units or str, default 'dimensionless'
    """

    samples: np.ndarray
    sample_rate_hz: float
    start_time_s: float = 0.0
    units: Units = Units.DIMENSIONLESS

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float).ravel()
        if arr.size == 0:
            raise InvalidArgument("waveform must contain at least one sample")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgument("waveform samples must be finite")
        rate = float(self.sample_rate_hz)
        if not (rate > 0 and math.isfinite(rate)):
            raise InvalidArgument(f"sample_rate_hz must be > 0, got {rate}")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", rate)
        object.__setattr__(self, "start_time_s", float(self.start_time_s))
        object.__setattr__(self, "units", _as_units(self.units))

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, SampledWaveform):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and self.start_time_s == other.start_time_s
            and self.units == other.units
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate_hz

    @property
    def end_time_s(self) -> float:
        return self.start_time_s + self.duration

    def times(self) -> np.ndarray:
        return self.start_time_s + np.arange(self.samples.size) / self.sample_rate_hz

    def with_samples(self, samples, units=None) -> "SampledWaveform":
        """Same timebase, new values."""
        return SampledWaveform(
            samples, self.sample_rate_hz, self.start_time_s,
            self.units if units is None else units,
        )

    def shifted(self, dt_s: float) -> "SampledWaveform":
        return SampledWaveform(self.samples, self.sample_rate_hz,
                               self.start_time_s + dt_s, self.units)

    def window(self, t0: float, t1: float) -> "SampledWaveform":
        """Samples whose time stamps fall in ``[t0, t1)``."""
        t = self.times()
        # half-sample guard against float error on exact boundaries
        eps = 0.5 / self.sample_rate_hz
        mask = (t >= t0 - eps * 1e-3) & (t < t1 - eps * 1e-3)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise InvalidArgument(f"window [{t0}, {t1}) contains no samples")
        return SampledWaveform(self.samples[idx], self.sample_rate_hz,
                               t[idx[0]], self.units)

    # -- serialization -------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "units": self.units.value,
            "sample_rate_hz": self.sample_rate_hz,
            "start_time_s": self.start_time_s,
            "samples": self.samples.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, data) -> "SampledWaveform":
        if isinstance(data, (str, bytes)):
            data = json.loads(data)
        missing = {"units", "sample_rate_hz", "samples"} - set(data)
        if missing:
            raise InvalidArgument(f"waveform JSON missing fields {sorted(missing)}")
        return cls(data["samples"], data["sample_rate_hz"],
                   data.get("start_time_s", 0.0), data["units"])

    def to_csv(self, header_comment: Optional[str] = None) -> str:
        """Two columns, ``time_s`` and ``value``."""
        buf = io.StringIO()
        if header_comment:
            for line in header_comment.splitlines():
                buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time_s", f"value_{self.units.value}"])
        for t, v in zip(self.times(), self.samples):
            writer.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, units=None) -> "SampledWaveform":
        rows = [r for r in csv.reader(io.StringIO(text))
                if r and not r[0].startswith("#")]
        header, body = rows[0], rows[1:]
        if units is None:
            col = header[1]
            units = col.split("_", 1)[1] if "_" in col else Units.DIMENSIONLESS
        t = np.array([float(r[0]) for r in body])
        v = np.array([float(r[1]) for r in body])
        if t.size < 2:
            raise InvalidArgument("CSV waveform needs at least two rows to infer a rate")
        rate = (t.size - 1) / (t[-1] - t[0])
        return cls(v, rate, t[0], units)


@dataclass(frozen=True)
class AwgModel:
    """Arbitrary waveform generator channel.

    The analog bandwidth is a single-pole low-pass corner.  ``units`` is the
    unit of the AWG output after any external amplifier or V-to-I mapping.
    """

    sample_rate_hz: float
    analog_bandwidth_hz: float
    amplitude_min: float
    amplitude_max: float
    quantization_bits: Optional[int] = None
    units: Units = Units.MA

    def __post_init__(self):
        object.__setattr__(self, "units", _as_units(self.units))
        if not self.sample_rate_hz > 0:
            raise InvalidArgument("AWG sample_rate_hz must be > 0")
        if not 0 < self.analog_bandwidth_hz <= self.sample_rate_hz / 2:
            raise InvalidArgument("AWG analog_bandwidth_hz must lie in (0, sample_rate_hz/2]")
        if not self.amplitude_min < self.amplitude_max:
            raise InvalidArgument("AWG amplitude_min must be < amplitude_max")
        if self.quantization_bits is not None and self.quantization_bits < 1:
            raise InvalidArgument("quantization_bits must be >= 1 or None")

    @property
    def lsb(self) -> float:
        if self.quantization_bits is None:
            return 0.0
        return (self.amplitude_max - self.amplitude_min) / 2 ** self.quantization_bits

    def quantize(self, x):
        """Mid-rise uniform quantizer over the output range."""
        if self.quantization_bits is None:
            return np.asarray(x, dtype=float)
        n = 2 ** self.quantization_bits
        step = self.lsb
        k = np.floor((np.asarray(x, dtype=float) - self.amplitude_min) / step)
        k = np.clip(k, 0, n - 1)
        return self.amplitude_min + (k + 0.5) * step

    def to_json_dict(self) -> dict:
        return {
            "sample_rate_hz": self.sample_rate_hz,
            "analog_bandwidth_hz": self.analog_bandwidth_hz,
            "amplitude_min": self.amplitude_min,
            "amplitude_max": self.amplitude_max,
            "quantization_bits": self.quantization_bits,
            "units": self.units.value,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AwgModel":
        known = {"sample_rate_hz", "analog_bandwidth_hz", "amplitude_min",
                 "amplitude_max", "quantization_bits", "units"}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgument(f"unknown AWG fields {sorted(unknown)}")
        return cls(**d)


def laser_awg(**overrides) -> AwgModel:
    """250 MS/s, 125 MHz AWG driving a laser section, expressed in mA."""
    params = dict(sample_rate_hz=250e6, analog_bandwidth_hz=125e6,
                  amplitude_min=0.0, amplitude_max=100.0,
                  quantization_bits=12, units=Units.MA)
    params.update(overrides)
    return AwgModel(**params)


def soa_awg(**overrides) -> AwgModel:
    """12 GS/s AWG plus amplifier and bias tee driving an SOA, in mA.

    The analog corner is a model choice; the hardware bandwidth is unstated.
    """
    params = dict(sample_rate_hz=12e9, analog_bandwidth_hz=5e9,
                  amplitude_min=0.0, amplitude_max=100.0,
                  quantization_bits=8, units=Units.MA)
    params.update(overrides)
    return AwgModel(**params)


def synthesize_square(period_s, high, low, duty=0.5, phase_s=0.0, n_periods=1,
                      sample_rate_hz=DEFAULT_SIM_RATE_HZ, units=Units.DIMENSIONLESS,
                      start_time_s=0.0) -> SampledWaveform:
    """Periodic square wave, ``high`` on ``[phase, phase + duty*period)`` mod period.

    Sample ``k`` sits at ``start_time_s + k/sample_rate_hz``.
    """
    if not period_s > 0:
        raise InvalidArgument(f"period_s must be > 0, got {period_s}")
    if not sample_rate_hz > 0:
        raise InvalidArgument(f"sample_rate_hz must be > 0, got {sample_rate_hz}")
    if not 0 < duty < 1:
        raise InvalidArgument(f"duty must lie in (0, 1), got {duty}")
    if sample_rate_hz * period_s < 4 - 1e-9:
        raise InvalidArgument("need at least 4 samples per period")
    if n_periods <= 0:
        raise InvalidArgument("n_periods must be positive")
    n = int(round(n_periods * period_s * sample_rate_hz))
    # integer sample arithmetic keeps the per-period count exact
    spp = period_s * sample_rate_hz
    k = np.arange(n)
    pos = np.mod(k - phase_s * sample_rate_hz, spp)
    # snap values within 1e-9 of a boundary to it
    pos = np.where(np.abs(pos - spp) < 1e-9, 0.0, pos)
    on = pos < duty * spp - 1e-9
    return SampledWaveform(np.where(on, float(high), float(low)), sample_rate_hz,
                           start_time_s, units)


def resample_array(x: np.ndarray, old_rate: float, new_rate: float) -> np.ndarray:
    """Resample along the last axis; zero-order hold up, boxcar average down."""
    if not new_rate > 0:
        raise InvalidArgument(f"new rate must be > 0, got {new_rate}")
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    ratio = new_rate / old_rate
    m = max(1, int(round(n * ratio)))
    if math.isclose(ratio, 1.0, rel_tol=1e-12):
        return x.copy()
    if ratio > 1:
        idx = np.floor(np.arange(m) / ratio + 1e-9).astype(int)
        return x[..., np.minimum(idx, n - 1)]
    # area-weighted mean of the piecewise-constant input over each output cell
    csum = np.concatenate([np.zeros(x.shape[:-1] + (1,)), np.cumsum(x, axis=-1)], axis=-1)
    edges = np.minimum(np.arange(m + 1) / ratio, n)
    lo = np.floor(edges).astype(int)
    frac = edges - lo
    upper = np.minimum(lo + 1, n)
    area = csum[..., lo] + frac * (csum[..., upper] - csum[..., lo])
    widths = np.diff(edges)
    return np.diff(area, axis=-1) / widths


def resample(w: SampledWaveform, new_rate_hz: float) -> SampledWaveform:
    """Resample preserving duration to within one output sample period."""
    out = resample_array(w.samples, w.sample_rate_hz, new_rate_hz)
    return SampledWaveform(out, new_rate_hz, w.start_time_s, w.units)


def first_order_lowpass(x: np.ndarray, sample_rate_hz: float, corner_hz: float) -> np.ndarray:
    """Single-pole low-pass along the last axis, started in steady state.

    Exact discretization for a sample-and-hold input: the output at sample
    ``n`` is the continuous response at ``t_n`` with sample ``n-1`` held.
    """
    x = np.asarray(x, dtype=float)
    a = math.exp(-2 * math.pi * corner_hz / sample_rate_hz)
    b_coef = [0.0, 1.0 - a]
    a_coef = [1.0, -a]
    # transposed direct form: steady state y = x needs state x[0]
    zi = x[..., :1].copy()
    y, _ = lfilter(b_coef, a_coef, x, axis=-1, zi=zi)
    return y


def apply_awg_array(x: np.ndarray, input_rate_hz: float, awg: AwgModel,
                    output_rate_hz: Optional[float] = None) -> np.ndarray:
    """Array form of :func:`apply_awg` working along the last axis."""
    y = np.clip(np.asarray(x, dtype=float), awg.amplitude_min, awg.amplitude_max)
    y = awg.quantize(y)
    y = resample_array(y, input_rate_hz, awg.sample_rate_hz)
    rate = awg.sample_rate_hz
    if output_rate_hz is not None and output_rate_hz != rate:
        y = resample_array(y, rate, output_rate_hz)
        rate = output_rate_hz
    return first_order_lowpass(y, rate, awg.analog_bandwidth_hz)


def apply_awg(w: SampledWaveform, awg: AwgModel,
              output_rate_hz: Optional[float] = None) -> SampledWaveform:
    """Push an ideal drive through an AWG channel.

    Clamp to the output range, quantize, resample to the AWG rate, then
    low-pass at the analog bandwidth.  With ``output_rate_hz`` the held AWG
    samples are first re-expressed at that (usually higher) simulation rate so
    the analog filter acts on the staircase itself.
    """
    if w.units != awg.units:
        raise InvalidArgument(
            f"waveform units {w.units.value} do not match AWG units {awg.units.value}")
    y = apply_awg_array(w.samples, w.sample_rate_hz, awg, output_rate_hz)
    rate = output_rate_hz if output_rate_hz is not None else awg.sample_rate_hz
    return SampledWaveform(y, rate, w.start_time_s, w.units)
