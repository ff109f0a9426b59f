"""
Time-multiplexed two-laser, two-gate transmitter.

Two tunable lasers take turns: while one is lasing on its current channel
the other retunes in the dark.  Each laser feeds its own SOA gate, the two
gates open alternately, and the gated outputs are summed.  A laser burst
lasts two slots; its gate blanks the head of the burst (while the laser
settles) and a short tail, leaving one slot of clean light.

Also holds the power and endpoint scaling models used to compare this
design against one gated source per channel.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .device import (DsdbrParams, SoaParams, lag_response_array, soa_response_array,
                     soa_steady_output_mw)
from .errors import InvalidArgument, NoTransition, OutOfRange
from .metrics import transition_time_90_90
from .preemph import PreemphasisParams, build_sequence_drive
from .signal import DEFAULT_SIM_RATE_HZ, AwgModel, SampledWaveform, Units, apply_awg_array

__all__ = [
    "GateSchedule",
    "build_schedule",
    "SlotAssignment",
    "default_assignment",
    "SimulationOptions",
    "SlotMetrics",
    "SwiftResult",
    "simulate_swift",
    "ValidationReport",
    "validate_slots",
    "PowerModelParams",
    "power_swift",
    "power_per_channel_design",
    "crossover_channels",
    "PulseScale",
    "pulse_endpoints",
]

# durations of the reference 20 ns slot, scaled with the slot length
_REF_SLOT_S = 20e-9
_REF_BLANK_HEAD_S = 15e-9
_REF_BLANK_TAIL_S = 5e-9


@dataclass(frozen=True)
class GateSchedule:
    slot_s: float
    laser_period_s: float
    laser_phase_offset_s: float
    gate_period_s: float
    gate_open_s: float
    blank_head_s: float
    blank_tail_s: float

    def __post_init__(self):
        if not self.slot_s > 0:
            raise InvalidArgument("slot_s must be > 0")
        burst = self.laser_period_s / 2
        if not math.isclose(self.blank_head_s + self.gate_open_s + self.blank_tail_s, burst,
                            rel_tol=1e-9):
            raise InvalidArgument("blank head + open + blank tail must equal the laser burst")
        if not math.isclose(self.gate_period_s, 2 * self.gate_open_s, rel_tol=1e-9):
            raise InvalidArgument("gates must be open for half their period to be complementary")
        if not math.isclose(self.laser_phase_offset_s, self.gate_open_s, rel_tol=1e-9):
            raise InvalidArgument("the lasers must be offset by one open window")

    @property
    def laser_burst_s(self) -> float:
        return self.laser_period_s / 2

    @property
    def slots_per_period(self) -> int:
        return int(round(self.laser_period_s / self.slot_s))

    def slot_window(self, k: int) -> Tuple[float, float]:
        """Absolute open window of slot ``k`` (served by laser ``k % 2 + 1``)."""
        start = self.blank_head_s + k * self.slot_s
        return start, start + self.slot_s

    def gate_masks(self, n: int, sample_rate_hz: float) -> np.ndarray:
        """Nominal open state of each gate, shape ``(2, n)``, for samples from t=0.

        Works on integer sample counts so the two masks tile time exactly.
        """
        slot_n = _whole_samples(self.slot_s, sample_rate_hz, "slot")
        head_n = _whole_samples(self.blank_head_s, sample_rate_hz, "blank head")
        idx = np.arange(n)
        first = ((idx - head_n) // slot_n) % 2 == 0
        return np.vstack([first, ~first])

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _whole_samples(t: float, rate: float, what: str) -> int:
    n = int(round(t * rate))
    if not math.isclose(n / rate, t, rel_tol=1e-9, abs_tol=1e-18):
        raise InvalidArgument(f"{what} must span a whole number of samples at {rate:g} Hz")
    return n


def build_schedule(slot_s: float = 20e-9) -> GateSchedule:
    """Gate timing for a given slot length, scaled from the 20 ns reference."""
    if not slot_s > 0:
        raise InvalidArgument("slot_s must be > 0")
    k = slot_s / _REF_SLOT_S
    return GateSchedule(
        slot_s=slot_s,
        laser_period_s=4 * slot_s,
        laser_phase_offset_s=slot_s,
        gate_period_s=2 * slot_s,
        gate_open_s=slot_s,
        blank_head_s=_REF_BLANK_HEAD_S * k,
        blank_tail_s=_REF_BLANK_TAIL_S * k,
    )


@dataclass(frozen=True)
class SlotAssignment:
    """One laser period of slots as ``(slot_index, laser_id, channel)``."""

    slots: Tuple[Tuple[int, int, int], ...]

    def __post_init__(self):
        slots = tuple(tuple(int(v) for v in s) for s in self.slots)
        object.__setattr__(self, "slots", slots)
        if not slots:
            raise InvalidArgument("assignment has no slots")
        for i, (k, lid, _) in enumerate(slots):
            if k != i:
                raise InvalidArgument("slot indices must run 0, 1, 2, ... in order")
            if lid not in (1, 2):
                raise InvalidArgument(f"laser id must be 1 or 2, got {lid}")
        for (_, a, _), (_, b, _) in zip(slots, slots[1:]):
            if a == b:
                raise InvalidArgument("consecutive slots must alternate lasers")
        if len(slots) % 2 or slots[0][1] != 1:
            raise InvalidArgument("assignment must start on laser 1 and hold an even number of slots")

    def __len__(self):
        return len(self.slots)

    def channel(self, k: int) -> int:
        return self.slots[k % len(self.slots)][2]

    def laser_channels(self, laser_id: int) -> List[int]:
        return [ch for _, lid, ch in self.slots if lid == laser_id]

    def switch_events(self, laser_id: Optional[int] = None) -> List[Tuple[int, int]]:
        """Ordered channel changes each laser makes over one period (with wrap)."""
        out = []
        for lid in ((1, 2) if laser_id is None else (laser_id,)):
            chans = self.laser_channels(lid)
            for a, b in zip(chans, chans[1:] + chans[:1]):
                if a != b and (a, b) not in out:
                    out.append((a, b))
        return out

    def to_json_dict(self) -> dict:
        return {"slots": [{"slot": k, "laser": lid, "channel": ch} for k, lid, ch in self.slots]}

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "SlotAssignment":
        try:
            return cls(tuple((s["slot"], s["laser"], s["channel"]) for s in d["slots"]))
        except (KeyError, TypeError) as exc:
            raise InvalidArgument(f"malformed slot assignment: {exc}") from None


def default_assignment() -> SlotAssignment:
    """Four slots spanning both ends of the band, every boundary a channel change."""
    return SlotAssignment(((0, 1, 0), (1, 2, 121), (2, 1, 60), (3, 2, 30)))


@dataclass(frozen=True)
class SimulationOptions:
    """Knobs of :func:`simulate_swift`.

    ``crosstalk_db``: a laser counts as visible in the output (and its
    frequency error is reported) while its gated power is within this many dB
    of the strongest contribution.  ``edge_guard_s`` is trimmed from both
    ends of each open window before judging frequency and flatness, leaving
    the slot boundary itself to the transition metric.
    """

    n_periods: int = 3
    sim_rate_hz: float = DEFAULT_SIM_RATE_HZ
    gates_off: bool = False
    dip_db: float = 3.0
    dip_s: float = 5e-9
    crosstalk_db: float = 20.0
    edge_guard_s: float = 1.5e-9
    equalize_slot_power: bool = False

    def __post_init__(self):
        if self.n_periods < 2:
            raise InvalidArgument("need at least two laser periods (one to settle)")
        if self.dip_db < 0 or self.dip_s < 0 or self.edge_guard_s < 0:
            raise InvalidArgument("dip and guard settings must be >= 0")

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "SimulationOptions":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgument(f"unknown simulation option(s) {sorted(unknown)}")
        return cls(**d)


@dataclass
class SlotMetrics:
    slot_index: int
    laser_id: int
    channel: int
    start_s: float
    end_s: float
    transition_90_90_s: Optional[float]
    max_abs_freq_offset_ghz: float
    flatness_db: float
    mean_power_mw: float

    @staticmethod
    def csv_header() -> list:
        return ["slot", "laser", "channel", "start_ns", "end_ns", "transition_90_90_ns",
                "max_abs_freq_offset_ghz", "flatness_db", "mean_power_mw"]

    def csv_row(self) -> list:
        tr = "" if self.transition_90_90_s is None else repr(float(self.transition_90_90_s * 1e9))
        return [self.slot_index, self.laser_id, self.channel, repr(float(self.start_s * 1e9)),
                repr(float(self.end_s * 1e9)), tr, repr(float(self.max_abs_freq_offset_ghz)),
                repr(float(self.flatness_db)), repr(float(self.mean_power_mw))]


@dataclass
class SwiftResult:
    power_out: SampledWaveform
    freq_out: SampledWaveform
    slots: List[SlotMetrics]
    gate_outputs: Tuple[SampledWaveform, SampledWaveform]
    gate_masks: np.ndarray
    laser_offsets: Tuple[SampledWaveform, SampledWaveform]
    extinction_db: float

    @property
    def transitions_s(self) -> List[float]:
        return [s.transition_90_90_s for s in self.slots if s.transition_90_90_s is not None]

    def slots_csv(self, header_comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header_comment:
            for line in header_comment.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SlotMetrics.csv_header())
        for s in self.slots:
            w.writerow(s.csv_row())
        return buf.getvalue()


def _laser_trace(lid: int, assignment: SlotAssignment, laser: DsdbrParams, schedule: GateSchedule,
                 awg: Optional[AwgModel], table, n_out: int, rate: float, opts: SimulationOptions):
    """Frequency offset from the burst target and optical power for one laser."""
    chans = assignment.laser_channels(lid)
    burst_n = _whole_samples(schedule.laser_burst_s, rate, "laser burst")
    phase_n = (lid - 1) * _whole_samples(schedule.laser_phase_offset_s, rate, "laser offset")
    # start one burst early (on the last channel of the cycle) so t=0 is mid-sequence
    lead = burst_n - phase_n
    n_bursts = -(-(n_out + lead) // burst_n)
    seq = chans[-1:] + chans[:-1]
    drives = build_sequence_drive(seq, table, schedule.laser_burst_s, n_bursts, laser, awg, rate)
    burst_ch = np.repeat([seq[k % len(seq)] for k in range(n_bursts)], burst_n)

    ref = laser.currents(seq[0])
    rel = np.zeros(n_bursts * burst_n)
    target = np.zeros_like(rel)
    for name, x in drives.items():
        sec = laser.section(name)
        rel += sec.sensitivity_ghz_per_ma * lag_response_array(x - ref[name], sec.lag_time_constants_s, rate)
        cur = np.array([laser.currents(int(c))[name] for c in seq])
        per_burst = cur[np.arange(n_bursts) % len(seq)]
        target += sec.sensitivity_ghz_per_ma * np.repeat(per_burst - ref[name], burst_n)
    offset = (rel - target)[lead:lead + n_out]

    power = np.array([laser.channel_power_mw(int(c)) for c in burst_ch], dtype=float)
    if opts.dip_db > 0 and opts.dip_s > 0:
        dip_n = min(int(round(opts.dip_s * rate)), burst_n)
        in_dip = (np.arange(power.size) % burst_n) < dip_n
        in_dip[:burst_n] = False  # the record starts settled
        power = np.where(in_dip, power * 10 ** (-opts.dip_db / 10), power)
    return offset, power[lead:lead + n_out], burst_ch[lead:lead + n_out]


def _carrier_for_output(p: SoaParams, pin: float, target_mw: float) -> float:
    f = lambda c: soa_steady_output_mw(p, pin, c) - target_mw
    lo, hi = 0.0, 8.0
    if f(lo) >= 0:
        return lo
    if f(hi) <= 0:
        return hi
    return brentq(f, lo, hi, xtol=1e-12)


def _gate_trace(gid: int, soa: SoaParams, schedule: GateSchedule, awg: AwgModel,
                drive: SampledWaveform, assignment: SlotAssignment, laser: DsdbrParams,
                pin: np.ndarray, n_out: int, rate: float, opts: SimulationOptions) -> np.ndarray:
    if opts.gates_off:
        return soa_response_array(np.full(n_out, soa.bias_current_ma), soa, pin, rate)

    period_n = drive.samples.size
    gp = schedule.gate_period_s
    if not math.isclose(period_n / drive.sample_rate_hz, gp, rel_tol=1e-9):
        raise InvalidArgument("SOA drive must cover exactly one gate period")
    # the drive's closed half precedes its open half; align the opening with the slot,
    # then start m whole periods earlier so the record opens in periodic steady state
    start = schedule.blank_head_s + (gid - 1) * schedule.slot_s - schedule.gate_open_s
    m = math.ceil((start + gp) / gp - 1e-9)
    lead_s = m * gp - start
    n_gp = int(math.ceil((n_out / rate + lead_s) / gp - 1e-9))
    periods = np.tile(drive.samples, (n_gp, 1))
    if opts.equalize_slot_power:
        # tiled period j opens on slot 2 * (j - m) + gid - 1
        p_ch = [laser.channel_power_mw(assignment.channel(k)) for k in range(len(assignment))]
        want = float(np.mean([soa_steady_output_mw(soa, p, 1.0) for p in p_ch]))
        i_tr = soa.transparency_current_ma
        for j in range(n_gp):
            k = 2 * (j - m) + gid - 1
            c = _carrier_for_output(soa, p_ch[k % len(assignment)], want)
            periods[j] = i_tr + (periods[j] - i_tr) * c
    tiled = periods.ravel()
    analog = apply_awg_array(tiled, drive.sample_rate_hz, awg, rate)
    lead_n = _whole_samples(lead_s, rate, "gate lead")
    analog = analog[lead_n:lead_n + n_out]
    return soa_response_array(analog, soa, pin, rate)


def simulate_swift(assignment: SlotAssignment, laser1: DsdbrParams, laser2: DsdbrParams,
                   soa1: SoaParams, soa2: SoaParams, schedule: GateSchedule,
                   awg_laser: Optional[AwgModel], awg_soa: AwgModel,
                   preemph_table: Mapping[Tuple[int, int], PreemphasisParams],
                   soa_drive: SampledWaveform, options: Optional[SimulationOptions] = None
                   ) -> SwiftResult:
    """Simulate the gated two-laser output and score the last laser period.

    Raises
    ------
    NotFound
        If a laser's channel change has no pre-emphasis entry.
    InvalidArgument
        If the assignment does not fill one laser period of the schedule.
    """
    opts = options or SimulationOptions()
    if len(assignment) != schedule.slots_per_period:
        raise InvalidArgument(f"assignment has {len(assignment)} slots but the schedule "
                              f"needs {schedule.slots_per_period} per laser period")
    if soa_drive.units != Units.MA:
        raise InvalidArgument("SOA drive must be in mA")
    rate = opts.sim_rate_hz
    t_end = opts.n_periods * schedule.laser_period_s + schedule.slot_s
    n = _whole_samples(t_end, rate, "record")

    offsets, powers, chans = [], [], []
    for lid, laser in ((1, laser1), (2, laser2)):
        o, p, c = _laser_trace(lid, assignment, laser, schedule, awg_laser, preemph_table, n, rate, opts)
        offsets.append(o)
        powers.append(p)
        chans.append(c)
    gates = []
    for gid, soa, laser in ((1, soa1, laser1), (2, soa2, laser2)):
        gates.append(_gate_trace(gid, soa, schedule, awg_soa, soa_drive, assignment, laser,
                                 powers[gid - 1], n, rate, opts))
    gates = np.vstack(gates)
    total = gates.sum(axis=0)

    # report the worst frequency error among visible contributions
    visible = gates >= gates.max(axis=0) * 10 ** (-opts.crosstalk_db / 10)
    offs = np.vstack(offsets)
    masked = np.where(visible, offs, 0.0)
    pick = np.argmax(np.abs(masked), axis=0)
    freq = masked[pick, np.arange(n)]

    masks = schedule.gate_masks(n, rate)
    power_w = SampledWaveform(total, rate, 0.0, Units.MW)
    freq_w = SampledWaveform(freq, rate, 0.0, Units.GHZ)

    n_slots = len(assignment)
    first = (opts.n_periods - 1) * n_slots
    slots = []
    for k in range(first, first + n_slots):
        t0, t1 = schedule.slot_window(k)
        lid = assignment.slots[k % n_slots][1]
        ch = assignment.channel(k)
        tr = None
        if assignment.channel(k - 1) != ch and not opts.gates_off:
            # channel-resolved: the outgoing gate carries the old channel, the incoming the new
            lo, hi = t0 - schedule.slot_s / 2, t0 + schedule.slot_s / 2
            out_w = SampledWaveform(gates[(k - 1) % 2], rate).window(lo, hi)
            in_w = SampledWaveform(gates[k % 2], rate).window(lo, hi)
            try:
                tr = transition_time_90_90(out_w, t0, lookback_s=opts.edge_guard_s, incoming=in_w)
            except NoTransition:
                tr = math.inf
        g0, g1 = t0 + opts.edge_guard_s, t1 - opts.edge_guard_s
        fw = freq_w.window(g0, g1).samples
        pw = power_w.window(g0, g1).samples
        med = float(np.median(pw))
        flat = float(np.max(np.abs(10 * np.log10(pw / med))))
        slots.append(SlotMetrics(k - first, lid, ch, t0, t1, tr,
                                 float(np.max(np.abs(fw))), flat, float(np.mean(pw))))

    # extinction: each gate's guarded open windows against its guarded closed ones
    er = math.inf
    for gid in (1, 2):
        on_vals, off_vals = [], []
        for k in range(first, first + n_slots):
            t0, t1 = schedule.slot_window(k)
            seg = SampledWaveform(gates[gid - 1], rate).window(t0 + opts.edge_guard_s,
                                                               t1 - opts.edge_guard_s).samples
            (on_vals if (k % 2) == gid - 1 else off_vals).append(seg)
        ratio = np.mean(np.concatenate(on_vals)) / np.mean(np.concatenate(off_vals))
        er = min(er, 10 * math.log10(ratio))

    return SwiftResult(
        power_out=power_w,
        freq_out=freq_w,
        slots=slots,
        gate_outputs=tuple(SampledWaveform(g, rate, 0.0, Units.MW) for g in gates),
        gate_masks=masks,
        laser_offsets=tuple(SampledWaveform(o, rate, 0.0, Units.GHZ) for o in offsets),
        extinction_db=er,
    )


@dataclass
class ValidationReport:
    freq_pass: List[bool]
    flatness_pass: List[bool]
    tol_ghz: float
    flatness_db: float

    @property
    def slot_pass(self) -> List[bool]:
        return [a and b for a, b in zip(self.freq_pass, self.flatness_pass)]

    @property
    def passed(self) -> bool:
        return all(self.slot_pass)

    def to_json_dict(self) -> dict:
        return {"passed": self.passed, "tol_ghz": self.tol_ghz, "flatness_db": self.flatness_db,
                "slots": [{"slot": i, "freq_pass": f, "flatness_pass": p, "pass": f and p}
                          for i, (f, p) in enumerate(zip(self.freq_pass, self.flatness_pass))]}


def validate_slots(slots: Sequence[SlotMetrics], tol_ghz: float = 5.0,
                   flatness_db: float = 1.0) -> ValidationReport:
    """Per-slot frequency and power-flatness verdicts; passes only if every slot does."""
    return ValidationReport(
        freq_pass=[bool(s.max_abs_freq_offset_ghz <= tol_ghz) for s in slots],
        flatness_pass=[bool(s.flatness_db <= flatness_db) for s in slots],
        tol_ghz=tol_ghz,
        flatness_db=flatness_db,
    )


# ---------------------------------------------------------------------------
# scaling models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerModelParams:
    laser_power_w: float = 2.5
    soa_power_w: float = 0.5
    per_channel_source_power_w: float = 0.6
    per_channel_gate_power_w: float = 0.2
    channels_per_band: int = 122
    bands: int = 3

    def __post_init__(self):
        for k in ("laser_power_w", "soa_power_w", "per_channel_source_power_w",
                  "per_channel_gate_power_w"):
            if getattr(self, k) < 0:
                raise InvalidArgument(f"{k} must be >= 0")
        if self.channels_per_band < 1:
            raise InvalidArgument("channels_per_band must be >= 1")
        if not 1 <= self.bands <= 3:
            raise InvalidArgument("bands must be between 1 and 3")

    @property
    def max_channels(self) -> int:
        return self.bands * self.channels_per_band

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "PowerModelParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgument(f"unknown power model field(s) {sorted(unknown)}")
        return cls(**d)


def power_swift(n_channels: int, p: PowerModelParams = PowerModelParams()) -> float:
    """Two lasers and two gates per band of ``channels_per_band`` channels (W)."""
    if n_channels < 1:
        raise InvalidArgument("n_channels must be >= 1")
    if n_channels > p.max_channels:
        raise OutOfRange(f"{n_channels} channels exceed {p.bands} band(s) of {p.channels_per_band}")
    bands = -(-n_channels // p.channels_per_band)
    return bands * (2 * p.laser_power_w + 2 * p.soa_power_w)


def power_per_channel_design(n_channels: int, p: PowerModelParams = PowerModelParams()) -> float:
    """One source and one gate per channel (W)."""
    if n_channels < 1:
        raise InvalidArgument("n_channels must be >= 1")
    return n_channels * (p.per_channel_source_power_w + p.per_channel_gate_power_w)


def crossover_channels(p: PowerModelParams = PowerModelParams()) -> Optional[int]:
    """Smallest channel count where the two-laser design draws less power, else None."""
    for n in range(1, p.max_channels + 1):
        if power_swift(n, p) < power_per_channel_design(n, p):
            return n
    return None


class PulseScale(NamedTuple):
    endpoints: int
    couplers: int


def pulse_endpoints(nodes_per_pod: int, pods_dim: int) -> PulseScale:
    """Endpoints ``N * x`` and star couplers ``x**2`` of the pod-based fabric."""
    if nodes_per_pod < 1 or pods_dim < 1:
        raise InvalidArgument("nodes_per_pod and pods_dim must be >= 1")
    return PulseScale(nodes_per_pod * pods_dim, pods_dim * pods_dim)
