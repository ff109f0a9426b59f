"""
Regression-driven pre-emphasis for tunable-laser switch events.

A switch event is evaluated in periodic steady state: the laser sections are
driven by a square wave that alternates between the two channels every half
period, the forward edge carrying the event's overshoot and the return edge
its mirror image.  The instantaneous frequency error after the forward edge
is regressed onto the responses of unit overshoots, and the overshoot
parameters are moved by a fraction of the least-squares solution.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .device import DsdbrParams, lag_response_array, switch_event_currents
from .errors import DegenerateBasis, InvalidArgument, NotFound, SwiftError
from .metrics import Cdf, SwitchMetrics, build_cdf, freq_offset_stats
from .signal import (DEFAULT_SIM_RATE_HZ, AwgModel, SampledWaveform, Units,
                     apply_awg_array, laser_awg)

__all__ = [
    "SectionPreemphasis",
    "PreemphasisParams",
    "RegressionConfig",
    "SwitchEvent",
    "EventResult",
    "MatrixResult",
    "make_event",
    "build_drive_with_preemphasis",
    "build_sequence_drive",
    "simulate_event",
    "basis_responses",
    "regression_update",
    "optimize_preemphasis",
    "run_switch_matrix",
    "default_channel_subset",
    "table_to_json_dict",
    "table_from_json_dict",
]


@dataclass(frozen=True)
class SectionPreemphasis:
    overshoot_amplitude_ma: float = 0.0
    overshoot_duration_s: float = 0.0
    decay_tau_s: Optional[float] = None

    def __post_init__(self):
        if self.overshoot_duration_s < 0:
            raise InvalidArgument("overshoot duration must be >= 0")
        if self.decay_tau_s is not None and not self.decay_tau_s > 0:
            raise InvalidArgument("decay_tau_s must be > 0 when given")

    def shape(self, t: np.ndarray) -> np.ndarray:
        """Overshoot profile at times ``t`` after the edge (unit of amplitude)."""
        inside = (t >= 0) & (t < self.overshoot_duration_s)
        if self.decay_tau_s is None:
            return np.where(inside, 1.0, 0.0)
        return np.where(inside, np.exp(-np.maximum(t, 0) / self.decay_tau_s), 0.0)


@dataclass(frozen=True)
class PreemphasisParams:
    """Per-section overshoot applied at a switch edge."""

    sections: Mapping[str, SectionPreemphasis] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sections", dict(self.sections))

    def get(self, name: str) -> SectionPreemphasis:
        return self.sections.get(name, SectionPreemphasis())

    def mirrored(self) -> "PreemphasisParams":
        return PreemphasisParams({k: replace(v, overshoot_amplitude_ma=-v.overshoot_amplitude_ma)
                                  for k, v in self.sections.items()})

    def amplitudes(self) -> Dict[str, float]:
        return {k: v.overshoot_amplitude_ma for k, v in self.sections.items()}

    def to_json_dict(self) -> dict:
        return {k: {"overshoot_amplitude_ma": v.overshoot_amplitude_ma,
                    "overshoot_duration_s": v.overshoot_duration_s,
                    "decay_tau_s": v.decay_tau_s}
                for k, v in sorted(self.sections.items())}

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "PreemphasisParams":
        out = {}
        for k, v in d.items():
            unknown = set(v) - {"overshoot_amplitude_ma", "overshoot_duration_s", "decay_tau_s"}
            if unknown:
                raise InvalidArgument(f"unknown pre-emphasis fields {sorted(unknown)}")
            out[k] = SectionPreemphasis(**v)
        return cls(out)


@dataclass(frozen=True)
class RegressionConfig:
    """Settings of the iterative pre-emphasis regression.

    The starting overshoot of each section lasts ``initial_duration_s`` and
    decays with ``initial_decay_tau_s``; when ``decay_matches_slowest_lag`` is
    set the decay instead follows the section's slowest lag, which keeps the
    per-section columns of the fit distinct.  ``measurement_range_ghz`` mimics the finite span over which the coherent
    receiver reports instantaneous frequency: error samples beyond it are left
    out of the fit.  ``None`` fits every sample in the window.
    """

    max_iterations: int = 20
    learning_rate: float = 1.0
    error_window_s: Tuple[float, float] = (0.0, 40e-9)
    tol_ghz: float = 5.0
    deadline_s: float = 20e-9
    basis: str = "amplitude_only"
    measurement_range_ghz: Optional[float] = 22.0
    initial_duration_s: float = 40e-9
    initial_decay_tau_s: Optional[float] = None
    decay_matches_slowest_lag: bool = True
    max_duration_s: float = 40e-9
    ridge: float = 1e-9
    period_s: float = 80e-9
    n_periods: int = 3
    sim_rate_hz: float = 10e9

    def __post_init__(self):
        if not self.tol_ghz > 0:
            raise InvalidArgument("tol_ghz must be > 0")
        if not self.error_window_s[0] < self.error_window_s[1]:
            raise InvalidArgument("error window start must precede its end")
        if self.basis not in ("amplitude_only", "amplitude_and_duration"):
            raise InvalidArgument(f"unknown basis {self.basis!r}")
        if self.max_iterations < 0:
            raise InvalidArgument("max_iterations must be >= 0")
        if self.n_periods < 1:
            raise InvalidArgument("n_periods must be >= 1")
        object.__setattr__(self, "error_window_s", tuple(self.error_window_s))

    @property
    def half_period_s(self) -> float:
        return self.period_s / 2

    def to_json_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["error_window_s"] = list(self.error_window_s)
        return d

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "RegressionConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgument(f"unknown regression config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class SwitchEvent:
    from_channel: int
    to_channel: int
    currents: Mapping[str, Tuple[float, float]]

    @property
    def key(self) -> Tuple[int, int]:
        return (self.from_channel, self.to_channel)

    @property
    def swings(self) -> Dict[str, float]:
        return {k: b - a for k, (a, b) in self.currents.items()}


def make_event(from_ch: int, to_ch: int, laser: DsdbrParams) -> SwitchEvent:
    return SwitchEvent(from_ch, to_ch, switch_event_currents(from_ch, to_ch, laser))


# ---------------------------------------------------------------------------
# drive construction and simulation
# ---------------------------------------------------------------------------

def _edge_indices(period_n: int, n_periods: int):
    """Forward edges at ``k*P + P/2``, return edges at ``k*P`` (k >= 1), in samples."""
    half = period_n // 2
    fwd = [k * period_n + half for k in range(n_periods)]
    ret = [k * period_n for k in range(1, n_periods)]
    return fwd, ret


def _period_samples(period_s: float, rate: float) -> int:
    period_n = int(round(period_s * rate))
    if period_n < 2 or period_n % 2 or not math.isclose(period_n / rate, period_s, rel_tol=1e-9):
        raise InvalidArgument("period must span an even whole number of samples")
    return period_n


def _ideal_drives(event: SwitchEvent, pe: PreemphasisParams, period_s: float,
                  n_periods: int, rate: float, include_base: bool = True) -> Dict[str, np.ndarray]:
    period_n = _period_samples(period_s, rate)
    half = period_n // 2
    n = n_periods * period_n
    on = (np.arange(n) % period_n) >= half
    # an overshoot never runs past the next edge
    rel = np.arange(half) / rate
    fwd, ret = _edge_indices(period_n, n_periods)
    out = {}
    for name, (i_from, i_to) in event.currents.items():
        x = np.where(on, float(i_to), float(i_from)) if include_base else np.zeros(n)
        sp = pe.get(name)
        if sp.overshoot_amplitude_ma != 0 and sp.overshoot_duration_s > 0:
            bump = sp.shape(rel)
            for i in fwd:
                x[i:i + half] += sp.overshoot_amplitude_ma * bump
            for i in ret:
                x[i:i + half] -= sp.overshoot_amplitude_ma * bump
        out[name] = x
    return out


def build_drive_with_preemphasis(event: SwitchEvent, pe: PreemphasisParams, period_s: float,
                                 awg: Optional[AwgModel], laser: Optional[DsdbrParams] = None,
                                 n_periods: int = 1, sim_rate_hz: float = DEFAULT_SIM_RATE_HZ,
                                 ) -> Dict[str, SampledWaveform]:
    """Square-wave section drives with overshoot at each edge.

    The drive sits at ``I_from`` for the first half period and ``I_to`` for
    the second; the forward edge carries ``pe`` and the return edge its
    mirror.  The ideal drive is checked against the laser's current limits
    (when ``laser`` is given) and then passed through ``awg`` (skipped when
    ``awg`` is None), resampled back to ``sim_rate_hz``.
    """
    unknown = set(pe.sections) - set(event.currents)
    if unknown:
        raise InvalidArgument(f"pre-emphasis names unknown sections {sorted(unknown)}")
    ideal = _ideal_drives(event, pe, period_s, n_periods, sim_rate_hz)
    if laser is not None:
        for name, x in ideal.items():
            if x.max() > laser.max_current_ma + 1e-9 or x.min() < laser.min_current_ma - 1e-9:
                raise InvalidArgument(
                    f"section {name} drive leaves [{laser.min_current_ma}, {laser.max_current_ma}] mA")
    out = {}
    for name, x in ideal.items():
        if awg is not None:
            x = apply_awg_array(x, sim_rate_hz, awg, sim_rate_hz)
        out[name] = SampledWaveform(x, sim_rate_hz, 0.0, Units.MA)
    return out


def build_sequence_drive(channels: Sequence[int], table: Mapping[Tuple[int, int], PreemphasisParams],
                         burst_s: float, n_bursts: int, laser: DsdbrParams,
                         awg: Optional[AwgModel], sim_rate_hz: float = DEFAULT_SIM_RATE_HZ
                         ) -> Dict[str, np.ndarray]:
    """Section drives for a laser cycling through ``channels``, one per burst.

    Burst ``k`` sits at ``channels[k % len(channels)]``; every channel change
    carries the overshoot stored under ``(from, to)`` in ``table``.  The
    record starts in the steady state of the first channel.

    Raises
    ------
    NotFound
        If a channel change has no table entry.
    InvalidArgument
        If an overshoot drives a section outside the laser's current range.
    """
    burst_n = int(round(burst_s * sim_rate_hz))
    if burst_n < 1 or not math.isclose(burst_n / sim_rate_hz, burst_s, rel_tol=1e-9):
        raise InvalidArgument("burst must span a whole number of samples")
    seq = [channels[k % len(channels)] for k in range(n_bursts)]
    rel = np.arange(burst_n) / sim_rate_hz
    out = {}
    for name in laser.section_names:
        x = np.empty(n_bursts * burst_n)
        for k, ch in enumerate(seq):
            x[k * burst_n:(k + 1) * burst_n] = laser.currents(ch)[name]
        out[name] = x
    for k in range(1, n_bursts):
        a, b = seq[k - 1], seq[k]
        if a == b:
            continue
        try:
            pe = table[(a, b)]
        except KeyError:
            raise NotFound(f"no pre-emphasis entry for switch event {a}->{b}") from None
        for name in laser.section_names:
            sp = pe.get(name)
            if sp.overshoot_amplitude_ma != 0 and sp.overshoot_duration_s > 0:
                out[name][k * burst_n:(k + 1) * burst_n] += sp.overshoot_amplitude_ma * sp.shape(rel)
    for name, x in out.items():
        if x.max() > laser.max_current_ma + 1e-9 or x.min() < laser.min_current_ma - 1e-9:
            raise InvalidArgument(
                f"section {name} drive leaves [{laser.min_current_ma}, {laser.max_current_ma}] mA")
        if awg is not None:
            out[name] = apply_awg_array(x, sim_rate_hz, awg, sim_rate_hz)
    return out


def _offset_from_drives(drives: Mapping[str, np.ndarray], targets: Mapping[str, float],
                        laser: DsdbrParams, rate: float) -> np.ndarray:
    total = None
    for name, x in drives.items():
        sec = laser.section(name)
        y = sec.sensitivity_ghz_per_ma * lag_response_array(
            np.asarray(x) - targets[name], sec.lag_time_constants_s, rate)
        total = y if total is None else total + y
    return total


def simulate_event(event: SwitchEvent, pe: PreemphasisParams, laser: DsdbrParams,
                   cfg: RegressionConfig, awg: Optional[AwgModel]) -> SampledWaveform:
    """Frequency offset (GHz) from the target during the last forward burst.

    Time zero of the returned record is the forward edge.
    """
    drives = build_drive_with_preemphasis(event, pe, cfg.period_s, awg, laser,
                                          cfg.n_periods, cfg.sim_rate_hz)
    targets = {k: b for k, (a, b) in event.currents.items()}
    off = _offset_from_drives({k: w.samples for k, w in drives.items()}, targets,
                              laser, cfg.sim_rate_hz)
    return _last_burst(off, cfg)


def _last_burst(off: np.ndarray, cfg: RegressionConfig) -> SampledWaveform:
    period_n = _period_samples(cfg.period_s, cfg.sim_rate_hz)
    start = (cfg.n_periods - 1) * period_n + period_n // 2
    stop = cfg.n_periods * period_n
    return SampledWaveform(off[start:stop], cfg.sim_rate_hz, 0.0, Units.GHZ)


def _linear_awg(awg: Optional[AwgModel]) -> Optional[AwgModel]:
    if awg is None:
        return None
    return replace(awg, quantization_bits=None, amplitude_min=-1e12, amplitude_max=1e12)


def basis_responses(event: SwitchEvent, pe: PreemphasisParams, laser: DsdbrParams,
                    cfg: RegressionConfig, awg: Optional[AwgModel]
                    ) -> List[Tuple[str, str, SampledWaveform]]:
    """Sensitivity of the last-burst offset to each free parameter.

    Amplitude columns are the responses to a unit-amplitude overshoot (with
    the current duration and shape) through the linear part of the AWG and
    the laser's lags.  Duration columns, when enabled, are forward
    differences of the full overshoot response.
    """
    lin = _linear_awg(awg)
    rate = cfg.sim_rate_hz
    cols = []
    for name in event.currents:
        sp = pe.get(name)
        if sp.overshoot_duration_s <= 0:
            continue
        unit = PreemphasisParams({name: replace(sp, overshoot_amplitude_ma=1.0)})
        cols.append((name, "amplitude", _pe_only_offset(event, unit, name, laser, cfg, lin)))
        if cfg.basis == "amplitude_and_duration" and sp.overshoot_amplitude_ma != 0:
            h = 1.0 / rate * 4
            longer = replace(sp, overshoot_duration_s=sp.overshoot_duration_s + h)
            a = _pe_only_offset(event, PreemphasisParams({name: longer}), name, laser, cfg, lin)
            b = _pe_only_offset(event, PreemphasisParams({name: sp}), name, laser, cfg, lin)
            cols.append((name, "duration", a.with_samples((a.samples - b.samples) / h)))
    return cols


def _pe_only_offset(event, pe, name, laser, cfg, lin_awg) -> SampledWaveform:
    rate = cfg.sim_rate_hz
    x = _ideal_drives(SwitchEvent(event.from_channel, event.to_channel,
                                  {name: event.currents[name]}),
                      pe, cfg.period_s, cfg.n_periods, rate, include_base=False)[name]
    if lin_awg is not None:
        x = apply_awg_array(x, rate, lin_awg, rate)
    sec = laser.section(name)
    y = sec.sensitivity_ghz_per_ma * lag_response_array(x, sec.lag_time_constants_s, rate)
    return _last_burst(y, cfg)


def _headroom(event: SwitchEvent, laser: Optional[DsdbrParams]) -> Dict[str, Tuple[float, float]]:
    """Amplitude limits keeping both the forward and mirrored edges in range."""
    if laser is None:
        return {k: (-math.inf, math.inf) for k in event.currents}
    lo_i, hi_i = laser.min_current_ma, laser.max_current_ma
    out = {}
    for k, (a, b) in event.currents.items():
        lo = max(lo_i - b, a - hi_i)
        hi = min(hi_i - b, a - lo_i)
        out[k] = (lo, hi)
    return out


def regression_update(error_trace: SampledWaveform, pe: PreemphasisParams, cfg: RegressionConfig,
                      basis: Sequence[Tuple[str, str, SampledWaveform]],
                      headroom: Optional[Mapping[str, Tuple[float, float]]] = None
                      ) -> PreemphasisParams:
    """One least-squares step on the windowed frequency error.

    Solves ``min ||e + B d||^2`` over the error window (ridge ``cfg.ridge`` on
    the column-normalised normal equations) and moves each parameter by
    ``learning_rate * d``.  Amplitudes are clamped to ``headroom``, durations
    to ``[0, cfg.max_duration_s]``.

    Raises
    ------
    DegenerateBasis
        If the normalised Gram matrix has an eigenvalue at or below the ridge.
    """
    t = error_trace.times()
    lo_t, hi_t = cfg.error_window_s
    mask = (t >= lo_t - 1e-15) & (t < hi_t - 1e-15)
    e = error_trace.samples
    if cfg.measurement_range_ghz is not None:
        mask &= np.abs(e) <= cfg.measurement_range_ghz
    if not basis or not np.any(mask) or not np.any(e[mask]):
        return pe
    B = np.column_stack([col.samples[: e.size] for _, _, col in basis])[mask]
    y = e[mask]
    scale = np.linalg.norm(B, axis=0)
    if np.any(scale == 0):
        raise DegenerateBasis("a basis column is identically zero over the window")
    Bn = B / scale
    gram = Bn.T @ Bn
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= cfg.ridge * max(eig[-1], 1.0):
        raise DegenerateBasis(
            f"regression basis is rank deficient (min eigenvalue {eig[0]:.3g})")
    step = -np.linalg.solve(gram + cfg.ridge * np.eye(gram.shape[0]), Bn.T @ y) / scale

    sections = dict(pe.sections)
    for (name, kind, _), d in zip(basis, step):
        sp = sections.get(name, SectionPreemphasis())
        if kind == "amplitude":
            amp = sp.overshoot_amplitude_ma + cfg.learning_rate * d
            if headroom is not None and name in headroom:
                amp = min(max(amp, headroom[name][0]), headroom[name][1])
            sp = replace(sp, overshoot_amplitude_ma=float(amp))
        else:
            dur = sp.overshoot_duration_s + cfg.learning_rate * d
            sp = replace(sp, overshoot_duration_s=float(min(max(dur, 0.0), cfg.max_duration_s)))
        sections[name] = sp
    return PreemphasisParams(sections)


# ---------------------------------------------------------------------------
# optimisation loop and switch matrix
# ---------------------------------------------------------------------------

@dataclass
class EventResult:
    event: SwitchEvent
    params: PreemphasisParams
    metrics: SwitchMetrics
    iterations: int
    converged: bool
    error: Optional[str] = None
    unoptimized: Optional[SwitchMetrics] = None


def _score(offset: SampledWaveform, cfg: RegressionConfig) -> SwitchMetrics:
    at, within = freq_offset_stats(offset, cfg.deadline_s, cfg.tol_ghz)
    return SwitchMetrics(freq_offset_at_deadline_ghz=at, time_to_within_5ghz_s=within)


def _passes(m: SwitchMetrics, cfg: RegressionConfig) -> bool:
    return (m.time_to_within_5ghz_s <= cfg.deadline_s
            and abs(m.freq_offset_at_deadline_ghz) <= cfg.tol_ghz)


def _initial_params(event: SwitchEvent, laser: DsdbrParams, cfg: RegressionConfig) -> PreemphasisParams:
    out = {}
    for name, (a, b) in event.currents.items():
        if a == b:
            continue
        tau = cfg.initial_decay_tau_s
        if cfg.decay_matches_slowest_lag:
            tau = max(t for _, t in laser.section(name).lag_time_constants_s)
        out[name] = SectionPreemphasis(0.0, cfg.initial_duration_s, tau)
    return PreemphasisParams(out)


def optimize_preemphasis(event: SwitchEvent, laser: DsdbrParams, cfg: Optional[RegressionConfig] = None,
                         awg: Optional[AwgModel] = None,
                         initial: Optional[PreemphasisParams] = None) -> EventResult:
    """Iterate build, simulate, measure and regress until the event passes.

    Returns the best parameters seen, ranked by time-to-within; a run that
    never meets the criterion comes back with ``converged=False``.
    """
    cfg = cfg or RegressionConfig()
    awg = awg if awg is not None else laser_awg()
    pe = initial if initial is not None else _initial_params(event, laser, cfg)
    headroom = _headroom(event, laser)

    offset = simulate_event(event, pe, laser, cfg, awg)
    metrics = _score(offset, cfg)
    first = metrics
    best = (metrics.time_to_within_5ghz_s, abs(metrics.freq_offset_at_deadline_ghz))
    best_pe, best_metrics = pe, metrics
    if _passes(metrics, cfg):
        return EventResult(event, pe, metrics, 0, True, unoptimized=first)

    for it in range(1, cfg.max_iterations + 1):
        basis = basis_responses(event, pe, laser, cfg, awg)
        pe = regression_update(offset, pe, cfg, basis, headroom)
        offset = simulate_event(event, pe, laser, cfg, awg)
        metrics = _score(offset, cfg)
        key = (metrics.time_to_within_5ghz_s, abs(metrics.freq_offset_at_deadline_ghz))
        if key < best:
            best, best_pe, best_metrics = key, pe, metrics
        if _passes(metrics, cfg):
            return EventResult(event, pe, metrics, it, True, unoptimized=first)
    return EventResult(event, best_pe, best_metrics, cfg.max_iterations,
                       _passes(best_metrics, cfg), unoptimized=first)


@dataclass
class MatrixResult:
    events: List[EventResult]
    cdf: Optional[Cdf]
    worst_time_s: float
    worst_offset_ghz: float

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.events)

    def events_csv(self, header_comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header_comment:
            for line in header_comment.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["from_ch", "to_ch", "time_to_within_ns", "offset_at_deadline_ghz",
                    "iterations", "converged"])
        for r in self.events:
            m = r.metrics
            t = m.time_to_within_5ghz_s
            w.writerow([r.event.from_channel, r.event.to_channel,
                        "" if t is None else repr(float(t * 1e9)),
                        "" if m.freq_offset_at_deadline_ghz is None
                        else repr(float(m.freq_offset_at_deadline_ghz)),
                        r.iterations, int(r.converged)])
        return buf.getvalue()

    def preemphasis_table(self) -> Dict[Tuple[int, int], PreemphasisParams]:
        return {r.event.key: r.params for r in self.events if r.error is None}


def table_to_json_dict(table: Mapping[Tuple[int, int], PreemphasisParams]) -> dict:
    return {"events": [{"from": a, "to": b, "params": table[(a, b)].to_json_dict()}
                       for a, b in sorted(table)]}


def table_from_json_dict(d: Mapping) -> Dict[Tuple[int, int], PreemphasisParams]:
    try:
        return {(int(e["from"]), int(e["to"])): PreemphasisParams.from_json_dict(e["params"])
                for e in d["events"]}
    except (KeyError, TypeError) as exc:
        raise InvalidArgument(f"malformed pre-emphasis table: {exc}") from None


def default_channel_subset(count: int, plan_count: int = 122) -> List[int]:
    """``count`` channels spread evenly over the plan, extremes included."""
    if count < 1:
        raise InvalidArgument("need at least one channel")
    if count == 1:
        return [0]
    return sorted({int(round(k * (plan_count - 1) / (count - 1))) for k in range(count)})


def run_switch_matrix(channels: Sequence[int], laser: DsdbrParams,
                      cfg: Optional[RegressionConfig] = None, awg: Optional[AwgModel] = None,
                      executor: Optional[Executor] = None) -> MatrixResult:
    """Optimise every ordered channel pair and summarise the switch times."""
    channels = list(channels)
    if len(channels) < 2:
        raise InvalidArgument("switch matrix needs at least two channels")
    cfg = cfg or RegressionConfig()
    awg = awg if awg is not None else laser_awg()
    pairs = [(a, b) for a in channels for b in channels if a != b]

    def one(pair):
        a, b = pair
        try:
            return optimize_preemphasis(make_event(a, b, laser), laser, cfg, awg)
        except SwiftError as exc:
            ev = SwitchEvent(a, b, {})
            return EventResult(ev, PreemphasisParams(), SwitchMetrics(), 0, False, error=str(exc))

    results = list(executor.map(one, pairs)) if executor is not None else [one(p) for p in pairs]
    times = [r.metrics.time_to_within_5ghz_s for r in results
             if r.error is None and r.metrics.time_to_within_5ghz_s is not None]
    offsets = [r.metrics.freq_offset_at_deadline_ghz for r in results
               if r.error is None and r.metrics.freq_offset_at_deadline_ghz is not None]
    cdf = build_cdf(times) if times else None
    worst_t = max(times) if times else math.nan
    worst_o = max(offsets, key=abs) if offsets else math.nan
    return MatrixResult(results, cdf, worst_t, worst_o)
