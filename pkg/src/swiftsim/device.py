"""
Parametric dynamical models of the SOA gate and the DS-DBR tunable laser.

The SOA is a driven second-order linear stage (carrier proxy) followed by a
static, saturable gain map.  The laser is a set of tuning sections, each
contributing ``sensitivity * lag(I(t) - I_target)`` to the instantaneous
frequency offset, where ``lag`` is a weighted sum of first-order lags.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import cont2discrete, lfilter, lfilter_zi

from .errors import InvalidArgument, NotFound
from .signal import SampledWaveform, Units

__all__ = [
    "SPEED_OF_LIGHT",
    "SoaParams",
    "LaserSection",
    "DsdbrParams",
    "ChannelPlan",
    "soa_carrier",
    "soa_carrier_array",
    "soa_gain_map",
    "soa_response",
    "soa_response_array",
    "soa_steady_output_mw",
    "dsdbr_frequency_response",
    "lag_response_array",
    "channel_frequencies",
    "channel_wavelengths_nm",
    "switch_event_currents",
    "default_dsdbr",
    "load_device_params",
    "device_params_to_json",
]

SPEED_OF_LIGHT = 299_792_458.0


def _db_to_lin(db):
    return 10.0 ** (db / 10.0)


def _reject_unknown(cls, d: Mapping, what: str):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise InvalidArgument(f"unknown {what} fields: {sorted(unknown)}")


# ---------------------------------------------------------------------------
# SOA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SoaParams:
    """SOA gate model.

    ``off_attenuation_db`` is the loss of the unpumped gate, i.e. the off-state
    gain is ``-off_attenuation_db`` dB.  Gain rises with the carrier proxy
    ``x`` as ``1 - exp(-gain_curvature * x)`` towards the small-signal gain, so
    the gate at bias sits somewhat below it and carrier overshoot stays
    visible in the optical output.  Dynamics defaults are calibrated so that a
    transparency-to-bias square drive rises in ~0.7 ns (10-90 %) and settles
    to +/-5 % in ~3.7 ns.
    """

    small_signal_gain_db: float = 20.0
    saturation_power_dbm: float = 10.0
    noise_figure_db: float = 7.0
    bias_current_ma: float = 45.0
    transparency_current_ma: float = 10.0
    natural_freq_hz: float = 0.30e9
    damping_ratio: float = 0.31
    off_attenuation_db: float = 22.0
    gain_curvature: float = 1.0

    def __post_init__(self):
        if not self.damping_ratio > 0:
            raise InvalidArgument("damping_ratio must be > 0")
        if not self.natural_freq_hz > 0:
            raise InvalidArgument("natural_freq_hz must be > 0")
        if not self.off_attenuation_db > 0:
            raise InvalidArgument("off_attenuation_db must be > 0")
        if not self.gain_curvature > 0:
            raise InvalidArgument("gain_curvature must be > 0")
        if not self.bias_current_ma > self.transparency_current_ma:
            raise InvalidArgument("bias current must exceed transparency current")

    @property
    def saturation_power_mw(self) -> float:
        return _db_to_lin(self.saturation_power_dbm)

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "SoaParams":
        _reject_unknown(cls, d, "SOA")
        return cls(**d)

    def to_json_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _second_order_coeffs(p: SoaParams, sample_rate_hz: float):
    # x'' + 2 zeta wn x' + wn^2 x = wn^2 u, ZOH-exact for held input
    wn = 2 * math.pi * p.natural_freq_hz
    z = p.damping_ratio
    num, den, _ = cont2discrete(([wn * wn], [1.0, 2 * z * wn, wn * wn]),
                                1.0 / sample_rate_hz, method="zoh")
    return np.asarray(num).ravel(), np.asarray(den).ravel()


def soa_carrier_array(drive_ma: np.ndarray, p: SoaParams, sample_rate_hz: float) -> np.ndarray:
    """Normalised carrier proxy along the last axis; starts at rest on sample 0."""
    if not p.damping_ratio > 0:
        raise InvalidArgument("damping_ratio must be > 0")
    u = (np.asarray(drive_ma, dtype=float) - p.transparency_current_ma) / (
        p.bias_current_ma - p.transparency_current_ma)
    b, a = _second_order_coeffs(p, sample_rate_hz)
    # steady state for constant input u[0]: x = u[0] with zero derivative
    zi_unit = lfilter_zi(b, a)
    zi = zi_unit * u[..., :1]
    x, _ = lfilter(b, a, u, axis=-1, zi=zi)
    return x


def soa_carrier(drive: SampledWaveform, p: SoaParams) -> SampledWaveform:
    """Carrier proxy ``x(t)``: 0 at transparency, 1 at bias in steady state."""
    if drive.units != Units.MA:
        raise InvalidArgument(f"SOA drive must be in mA, got {drive.units.value}")
    x = soa_carrier_array(drive.samples, p, drive.sample_rate_hz)
    return drive.with_samples(x, Units.DIMENSIONLESS)


def soa_gain_map(x, p: SoaParams):
    """Unsaturated linear gain for carrier proxy ``x``.

    Below transparency (``x <= 0``) the gate is fully off; above, gain
    approaches the small-signal value without ever exceeding it.
    """
    g_max = _db_to_lin(p.small_signal_gain_db)
    g_off = _db_to_lin(-p.off_attenuation_db)
    x = np.maximum(x, 0.0)
    return g_off + (g_max - g_off) * -np.expm1(-p.gain_curvature * x)


def _saturate(p_unsat_mw, p_sat_mw):
    # closed-form root of P = P0 / (1 + P/Psat)
    if math.isinf(p_sat_mw):
        return p_unsat_mw
    r = 4.0 * p_unsat_mw / p_sat_mw
    # sqrt(1+r) - 1 written to stay accurate for small r
    return p_sat_mw * 0.5 * r / (np.sqrt(1.0 + r) + 1.0)


def soa_response_array(drive_ma: np.ndarray, p: SoaParams, input_power_mw: float,
                       sample_rate_hz: float) -> np.ndarray:
    x = soa_carrier_array(drive_ma, p, sample_rate_hz)
    return _saturate(input_power_mw * soa_gain_map(x, p), p.saturation_power_mw)


def soa_response(drive: SampledWaveform, p: SoaParams, input_power_mw: float) -> SampledWaveform:
    """Optical output power (mW) of the SOA for a current drive."""
    if drive.units != Units.MA:
        raise InvalidArgument(f"SOA drive must be in mA, got {drive.units.value}")
    if not input_power_mw > 0:
        raise InvalidArgument("input_power_mw must be > 0")
    out = soa_response_array(drive.samples, p, input_power_mw, drive.sample_rate_hz)
    return drive.with_samples(out, Units.MW)


def soa_steady_output_mw(p: SoaParams, input_power_mw: float, carrier: float = 1.0) -> float:
    return float(_saturate(input_power_mw * soa_gain_map(carrier, p), p.saturation_power_mw))


# ---------------------------------------------------------------------------
# Channel plan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelPlan:
    """Uniform frequency grid.  Default: 122 x 50 GHz from 1572.48 nm."""

    first_frequency_ghz: float = SPEED_OF_LIGHT / 1572.48e-9 / 1e9
    spacing_ghz: float = 50.0
    count: int = 122

    def __post_init__(self):
        if self.count < 1:
            raise InvalidArgument("channel count must be >= 1")
        if not self.spacing_ghz > 0:
            raise InvalidArgument("channel spacing must be > 0")

    @property
    def span_ghz(self) -> float:
        return (self.count - 1) * self.spacing_ghz

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "ChannelPlan":
        _reject_unknown(cls, d, "channel plan")
        return cls(**d)

    def to_json_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def channel_frequencies(plan: ChannelPlan) -> list:
    return [plan.first_frequency_ghz + k * plan.spacing_ghz for k in range(plan.count)]


def channel_wavelengths_nm(plan: ChannelPlan) -> list:
    return [SPEED_OF_LIGHT / (f * 1e9) * 1e9 for f in channel_frequencies(plan)]


# ---------------------------------------------------------------------------
# DS-DBR laser
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LaserSection:
    name: str
    sensitivity_ghz_per_ma: float
    lag_time_constants_s: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        lags = tuple((float(w), float(tau)) for w, tau in self.lag_time_constants_s)
        if not lags:
            raise InvalidArgument(f"section {self.name!r} needs at least one lag")
        if not math.isclose(sum(w for w, _ in lags), 1.0, abs_tol=1e-9):
            raise InvalidArgument(f"lag weights of section {self.name!r} must sum to 1")
        if any(tau <= 0 for _, tau in lags):
            raise InvalidArgument(f"lag time constants of section {self.name!r} must be > 0")
        object.__setattr__(self, "lag_time_constants_s", lags)


@dataclass(frozen=True)
class DsdbrParams:
    """Tunable laser model.

    ``channel_table`` maps channel index to per-section currents in mA.
    ``channel_power_offset_db`` holds the static per-channel power variation
    seen across slots; missing channels default to 0 dB.
    """

    sections: Tuple[LaserSection, ...]
    channel_table: Mapping[int, Mapping[str, float]]
    max_current_ma: float = 100.0
    min_current_ma: float = 0.0
    output_power_mw: float = 0.1
    channel_power_offset_db: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        names = [s.name for s in self.sections]
        if len(set(names)) != len(names):
            raise InvalidArgument("section names must be unique")
        table = {int(k): dict(v) for k, v in self.channel_table.items()}
        for ch, cur in table.items():
            if set(cur) != set(names):
                raise InvalidArgument(f"channel {ch} does not list every section")
            for name, value in cur.items():
                if not self.min_current_ma <= value <= self.max_current_ma:
                    raise InvalidArgument(
                        f"channel {ch} section {name} current {value} outside limits")
        object.__setattr__(self, "channel_table", table)
        object.__setattr__(self, "channel_power_offset_db",
                           {int(k): float(v) for k, v in self.channel_power_offset_db.items()})

    @property
    def section_names(self) -> Tuple[str, ...]:
        return tuple(s.name for s in self.sections)

    def section(self, name: str) -> LaserSection:
        for s in self.sections:
            if s.name == name:
                return s
        raise InvalidArgument(f"unknown laser section {name!r}")

    def currents(self, channel: int) -> Dict[str, float]:
        try:
            return dict(self.channel_table[int(channel)])
        except KeyError:
            raise NotFound(f"channel {channel} not in laser channel table") from None

    def channel_power_mw(self, channel: int) -> float:
        return self.output_power_mw * _db_to_lin(self.channel_power_offset_db.get(int(channel), 0.0))

    def covers(self, plan: ChannelPlan) -> bool:
        return all(k in self.channel_table for k in range(plan.count))

    def to_json_dict(self) -> dict:
        return {
            "sections": [
                {"name": s.name, "sensitivity_ghz_per_ma": s.sensitivity_ghz_per_ma,
                 "lag_time_constants_s": [list(l) for l in s.lag_time_constants_s]}
                for s in self.sections
            ],
            "channel_table": {str(k): v for k, v in sorted(self.channel_table.items())},
            "max_current_ma": self.max_current_ma,
            "min_current_ma": self.min_current_ma,
            "output_power_mw": self.output_power_mw,
            "channel_power_offset_db": {str(k): v for k, v in
                                        sorted(self.channel_power_offset_db.items())},
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "DsdbrParams":
        _reject_unknown(cls, d, "DS-DBR")
        d = dict(d)
        sections = []
        for s in d.pop("sections"):
            _reject_unknown(LaserSection, s, "laser section")
            sections.append(LaserSection(s["name"], s["sensitivity_ghz_per_ma"],
                                         tuple(tuple(l) for l in s["lag_time_constants_s"])))
        return cls(sections=tuple(sections), **d)


#: current span of the default linear channel table, mA
DEFAULT_CURRENT_SPAN = (5.0, 50.0)


def default_dsdbr(plan: Optional[ChannelPlan] = None) -> DsdbrParams:
    """Two-section model whose extreme channels realise a 45 mA rear swing.

    The rear current rises and the front current falls linearly with channel
    index across [5, 50] mA.  Sensitivities are chosen so the steady-state
    frequency step between channels equals the plan spacing; every event thus
    has one section with upward headroom for pre-emphasis in either direction.
    """
    plan = plan or ChannelPlan()
    lo, hi = DEFAULT_CURRENT_SPAN
    n = plan.count
    step = (hi - lo) / max(n - 1, 1)
    # rear carries 60 % of the tuning, front (inverted) 40 %
    per_ma = plan.spacing_ghz / step if n > 1 else 0.0
    rear = LaserSection("rear", 0.6 * per_ma, ((0.994, 1.0e-9), (0.006, 30e-9)))
    front = LaserSection("front", -0.4 * per_ma, ((0.995, 0.7e-9), (0.005, 20e-9)))
    table = {k: {"rear": lo + k * step, "front": hi - k * step} for k in range(n)}
    # static per-channel power ripple, +/-0.3 dB
    offsets = {k: round(0.3 * math.sin(0.7 * k), 6) for k in range(n)}
    return DsdbrParams(sections=(rear, front), channel_table=table,
                       channel_power_offset_db=offsets)


def switch_event_currents(from_ch: int, to_ch: int, p: DsdbrParams) -> Dict[str, Tuple[float, float]]:
    a = p.currents(from_ch)
    b = p.currents(to_ch)
    return {name: (a[name], b[name]) for name in p.section_names}


def lag_response_array(dev: np.ndarray, lags: Sequence[Tuple[float, float]],
                       sample_rate_hz: float) -> np.ndarray:
    """Weighted sum of first-order lags along the last axis, steady at sample 0."""
    dev = np.asarray(dev, dtype=float)
    out = np.zeros_like(dev)
    for w, tau in lags:
        a = math.exp(-1.0 / (sample_rate_hz * tau))
        y, _ = lfilter([0.0, 1.0 - a], [1.0, -a], dev, axis=-1, zi=dev[..., :1].copy())
        out += w * y
    return out


def dsdbr_frequency_response(section_drives: Mapping[str, SampledWaveform], p: DsdbrParams,
                             target_channel: int) -> SampledWaveform:
    """Instantaneous frequency offset (GHz) from ``target_channel``.

    Sections absent from ``section_drives`` are taken to sit at their target
    current throughout.
    """
    if not section_drives:
        raise InvalidArgument("no section drives given")
    target = p.currents(target_channel)
    ref = next(iter(section_drives.values()))
    total = np.zeros(len(ref))
    for name, w in section_drives.items():
        sec = p.section(name)
        if w.units != Units.MA:
            raise InvalidArgument(f"section {name} drive must be in mA")
        if w.sample_rate_hz != ref.sample_rate_hz or len(w) != len(ref):
            raise InvalidArgument("section drives must share sample rate and duration")
        dev = w.samples - target[name]
        total += sec.sensitivity_ghz_per_ma * lag_response_array(
            dev, sec.lag_time_constants_s, w.sample_rate_hz)
    return ref.with_samples(total, Units.GHZ)


# ---------------------------------------------------------------------------
# JSON parameter documents
# ---------------------------------------------------------------------------

def device_params_to_json(soa: Optional[SoaParams] = None, dsdbr: Optional[DsdbrParams] = None,
                          plan: Optional[ChannelPlan] = None) -> dict:
    doc = {}
    if soa is not None:
        doc["soa"] = soa.to_json_dict()
    if dsdbr is not None:
        doc["dsdbr"] = dsdbr.to_json_dict()
    if plan is not None:
        doc["channel_plan"] = plan.to_json_dict()
    return doc


def load_device_params(source) -> dict:
    """Parse a device document ``{"soa": ..., "dsdbr": ..., "channel_plan": ...}``.

    ``source`` is a path, a JSON string or an already-decoded mapping.  Every
    block is optional; unknown fields at any level are rejected.  Returns a
    dict with keys ``soa``, ``dsdbr`` and ``channel_plan`` filled with defaults
    where absent.
    """
    if isinstance(source, Mapping):
        doc = dict(source)
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            doc = json.loads(text)
        else:
            with open(text) as fh:
                doc = json.load(fh)
    unknown = set(doc) - {"soa", "dsdbr", "channel_plan"}
    if unknown:
        raise InvalidArgument(f"unknown device document fields: {sorted(unknown)}")
    plan = ChannelPlan.from_json_dict(doc["channel_plan"]) if "channel_plan" in doc else ChannelPlan()
    soa = SoaParams.from_json_dict(doc["soa"]) if "soa" in doc else SoaParams()
    dsdbr = DsdbrParams.from_json_dict(doc["dsdbr"]) if "dsdbr" in doc else default_dsdbr(plan)
    if not dsdbr.covers(plan):
        raise InvalidArgument("DS-DBR channel table does not cover the channel plan")
    return {"soa": soa, "dsdbr": dsdbr, "channel_plan": plan}
