"""
Particle swarm optimisation over sampled drive signals.

:func:`pso_optimize` is a plain global-best PSO on a bounded box.  Random
numbers are drawn from a generator keyed by ``(seed, iteration, particle)``,
so results do not depend on the order in which fitness values are computed;
fitness calls within one iteration may run serially, vectorised over the
whole swarm, or on an executor.

:func:`optimize_soa_drive` wraps it into the SOA gate experiment: each
particle is a drive current sampled over one gate period, scored by the mean
squared error between the simulated optical output and an ideal step.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from .device import SoaParams, soa_response_array, soa_steady_output_mw
from .errors import EvaluationError, InvalidArgument
from .metrics import (SwitchMetrics, extinction_ratio, overshoot_fraction,
                      rise_time_10_90, settling_time)
from .signal import (DEFAULT_SIM_RATE_HZ, AwgModel, SampledWaveform, Units,
                     apply_awg_array, soa_awg)

__all__ = [
    "PsoConfig",
    "PsoResult",
    "pso_optimize",
    "SoaDriveProblem",
    "SoaOptimization",
    "optimize_soa_drive",
    "square_gate_drive",
]


@dataclass(frozen=True)
class PsoConfig:
    """Swarm hyper-parameters.

    ``bounds`` is a ``(lo, hi)`` pair of scalars or per-dimension arrays.
    ``v_max`` defaults to 20 % of the bounds range.  ``init_spread`` is the
    fraction of the range used for initial velocities and for perturbing
    warm-start positions.
    """

    n_particles: int = 160
    n_dims: int = 240
    inertia_w: float = 0.729
    cognitive_c1: float = 1.49445
    social_c2: float = 1.49445
    max_iterations: int = 500
    bounds: Optional[Tuple] = None
    v_max: Optional[float] = None
    seed: int = 0
    init_spread: float = 0.1
    patience: int = 50
    min_improvement: float = 1e-12

    def __post_init__(self):
        if self.n_particles < 2:
            raise InvalidArgument("n_particles must be >= 2")
        if self.n_dims < 1:
            raise InvalidArgument("n_dims must be >= 1")
        if self.max_iterations < 0:
            raise InvalidArgument("max_iterations must be >= 0")
        if self.v_max is not None and not np.all(np.asarray(self.v_max) > 0):
            raise InvalidArgument("v_max must be > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")
        if self.bounds is not None:
            lo, hi = self.box()
            if np.any(lo >= hi):
                raise InvalidArgument("bounds require lo < hi in every dimension")

    def box(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.bounds is None:
            raise InvalidArgument("PsoConfig.bounds is not set")
        lo, hi = self.bounds
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (self.n_dims,)).copy()
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (self.n_dims,)).copy()
        return lo, hi

    def velocity_limit(self) -> np.ndarray:
        lo, hi = self.box()
        if self.v_max is None:
            return 0.2 * (hi - lo)
        return np.broadcast_to(np.asarray(self.v_max, dtype=float), (self.n_dims,)).copy()

    def to_json_dict(self) -> dict:
        def plain(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, tuple):
                return [plain(x) for x in v]
            return v
        return {k: plain(getattr(self, k)) for k in self.__dataclass_fields__}

    @classmethod
    def from_json_dict(cls, d: dict) -> "PsoConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgument(f"unknown PSO config fields: {sorted(unknown)}")
        d = dict(d)
        if d.get("bounds") is not None:
            d["bounds"] = tuple(d["bounds"])
        return cls(**d)


@dataclass(eq=False)
class PsoResult:
    best_position: np.ndarray
    best_fitness: float
    fitness_history: List[float]
    evaluations: int
    iterations: int = 0
    stop_reason: str = "max_iterations"

    def __eq__(self, other):
        if not isinstance(other, PsoResult):
            return NotImplemented
        return (np.array_equal(self.best_position, other.best_position)
                and self.best_fitness == other.best_fitness
                and self.fitness_history == other.fitness_history
                and self.evaluations == other.evaluations
                and self.iterations == other.iterations
                and self.stop_reason == other.stop_reason)

    def to_json_dict(self, include_positions: bool = False) -> dict:
        d = {
            "best_fitness": self.best_fitness,
            "evaluations": self.evaluations,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "fitness_history": list(self.fitness_history),
        }
        if include_positions:
            d["best_position"] = self.best_position.tolist()
        return d

    def history_csv(self, header_comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header_comment:
            for line in header_comment.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "best_fitness"])
        for i, f in enumerate(self.fitness_history):
            w.writerow([i, repr(float(f))])
        return buf.getvalue()


def _rng(seed: int, iteration: int, particle: int) -> np.random.Generator:
    return np.random.default_rng([seed, iteration, particle])


def _evaluate(fitness, X, vectorized, executor, iteration) -> np.ndarray:
    if vectorized:
        f = np.asarray(fitness(X), dtype=float).reshape(-1)
        if f.size != X.shape[0]:
            raise InvalidArgument("vectorised fitness must return one value per particle")
    elif executor is not None:
        f = np.fromiter(executor.map(fitness, list(X)), dtype=float, count=X.shape[0])
    else:
        f = np.array([float(fitness(x)) for x in X])
    bad = np.flatnonzero(~np.isfinite(f))
    if bad.size:
        i = int(bad[0])
        raise EvaluationError(
            f"fitness returned {f[i]} for particle {i} at iteration {iteration}",
            particle=i, iteration=iteration)
    return f


def pso_optimize(fitness: Callable, cfg: PsoConfig, *, vectorized: bool = False,
                 executor=None, init_positions: Optional[np.ndarray] = None) -> PsoResult:
    """Minimise ``fitness`` over the box in ``cfg.bounds``.

    Parameters
    ----------
    fitness : callable
        ``fitness(x) -> float`` for a position vector, or, with
        ``vectorized=True``, ``fitness(X) -> array`` for the whole swarm.
    cfg : PsoConfig
    executor : concurrent.futures.Executor, optional
        Evaluate particles with ``executor.map``.  Results are identical to
        serial evaluation.
    init_positions : ndarray, optional
        Up to ``n_particles`` starting positions (clipped to bounds); the
        remaining particles start uniformly in the box.

    Returns
    -------
    PsoResult
        ``fitness_history[0]`` is the best of the initial swarm; one entry per
        completed iteration follows.
    """
    lo, hi = cfg.box()
    vmax = cfg.velocity_limit()
    n, d = cfg.n_particles, cfg.n_dims
    span = hi - lo

    x = np.empty((n, d))
    v = np.empty((n, d))
    n_seeded = 0
    if init_positions is not None:
        init = np.atleast_2d(np.asarray(init_positions, dtype=float))
        if init.shape[1] != d:
            raise InvalidArgument(f"init_positions must have {d} columns")
        n_seeded = min(init.shape[0], n)
        x[:n_seeded] = np.clip(init[:n_seeded], lo, hi)
    for i in range(n):
        g = _rng(cfg.seed, 0, i)
        u = g.random(d)
        if i >= n_seeded:
            x[i] = lo + u * span
        v[i] = (2.0 * g.random(d) - 1.0) * np.minimum(vmax, cfg.init_spread * span)

    f = _evaluate(fitness, x, vectorized, executor, 0)
    evaluations = n
    pbest = x.copy()
    pbest_f = f.copy()
    j = int(np.argmin(pbest_f))
    gbest, gbest_f = pbest[j].copy(), float(pbest_f[j])
    history = [gbest_f]

    w, c1, c2 = cfg.inertia_w, cfg.cognitive_c1, cfg.social_c2
    stall = 0
    stop = "max_iterations"
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        r1 = np.empty((n, d))
        r2 = np.empty((n, d))
        for i in range(n):
            g = _rng(cfg.seed, it, i)
            r = g.random((2, d))
            r1[i], r2[i] = r[0], r[1]
        v = w * v + c1 * r1 * (pbest - x) + c2 * r2 * (gbest - x)
        np.clip(v, -vmax, vmax, out=v)
        x = np.clip(x + v, lo, hi)

        f = _evaluate(fitness, x, vectorized, executor, it)
        evaluations += n
        improved = f < pbest_f
        pbest[improved] = x[improved]
        pbest_f[improved] = f[improved]
        # argmin takes the lowest index on ties
        j = int(np.argmin(pbest_f))
        prev = gbest_f
        if pbest_f[j] < gbest_f:
            gbest, gbest_f = pbest[j].copy(), float(pbest_f[j])
        history.append(gbest_f)

        if prev - gbest_f > cfg.min_improvement:
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                stop = "stagnation"
                break
    else:
        it = cfg.max_iterations

    return PsoResult(gbest, gbest_f, history, evaluations, it, stop)


# ---------------------------------------------------------------------------
# SOA drive optimisation
# ---------------------------------------------------------------------------

def square_gate_drive(p: SoaParams, n_points: int, low_ma: Optional[float] = None,
                      high_ma: Optional[float] = None) -> np.ndarray:
    """One gate period: first half closed (transparency), second half open (bias)."""
    low = p.transparency_current_ma if low_ma is None else low_ma
    high = p.bias_current_ma if high_ma is None else high_ma
    half = n_points // 2
    return np.r_[np.full(half, low, dtype=float), np.full(n_points - half, high, dtype=float)]


@dataclass
class SoaDriveProblem:
    """Simulation and scoring of candidate gate drives.

    A candidate is one gate period (``2 * slot_s``) of drive current sampled at
    ``n_points / (2 * slot_s)``; the gate opens half way through.  Candidates
    are tiled over two periods so both the closing and the opening edge are
    in the periodic steady state, and the second period is scored.
    """

    soa: SoaParams
    awg: AwgModel
    slot_s: float = 20e-9
    n_points: int = 240
    input_power_mw: float = 0.1
    sim_rate_hz: float = DEFAULT_SIM_RATE_HZ
    settle_guard_s: float = 2e-9

    def __post_init__(self):
        if self.awg.units != Units.MA:
            raise InvalidArgument("SOA AWG must be expressed in mA")
        self.period_s = 2.0 * self.slot_s
        self.drive_rate_hz = self.n_points / self.period_s
        self.on_level = soa_steady_output_mw(self.soa, self.input_power_mw, 1.0)
        self.off_level = soa_steady_output_mw(self.soa, self.input_power_mw, 0.0)
        n_sim = int(round(self.period_s * self.sim_rate_hz))
        sp = np.full(n_sim, self.off_level)
        sp[int(round(self.slot_s * self.sim_rate_hz)):] = self.on_level
        self.set_point = SampledWaveform(sp, self.sim_rate_hz, self.period_s, Units.MW)
        self._sp_norm = sp / self.on_level

    @property
    def gate_open_time_s(self) -> float:
        """Absolute time of the scored rising edge."""
        return self.period_s + self.slot_s

    def simulate_array(self, drives: np.ndarray) -> np.ndarray:
        """Scored-period optical output for each row of ``drives`` (mW)."""
        drives = np.atleast_2d(drives)
        tiled = np.concatenate([drives, drives], axis=-1)
        analog = apply_awg_array(tiled, self.drive_rate_hz, self.awg, self.sim_rate_hz)
        out = soa_response_array(analog, self.soa, self.input_power_mw, self.sim_rate_hz)
        return out[:, -self._sp_norm.size:]

    def simulate(self, drive: np.ndarray) -> SampledWaveform:
        out = self.simulate_array(np.asarray(drive, dtype=float)[None, :])[0]
        return SampledWaveform(out, self.sim_rate_hz, self.period_s, Units.MW)

    def fitness_array(self, drives: np.ndarray) -> np.ndarray:
        """MSE against the ideal step, on outputs normalised to the on level."""
        out = self.simulate_array(drives) / self.on_level
        return np.mean((out - self._sp_norm) ** 2, axis=-1)

    def drive_waveform(self, drive: np.ndarray) -> SampledWaveform:
        return SampledWaveform(drive, self.drive_rate_hz, 0.0, Units.MA)

    def metrics(self, drive: np.ndarray) -> SwitchMetrics:
        """Gate metrics; settling is judged up to ``settle_guard_s`` before closing."""
        out = self.simulate(drive)
        t_open = self.gate_open_time_s
        open_part = out.window(self.period_s, 2 * self.period_s - self.settle_guard_s)
        try:
            rise = rise_time_10_90(out, t_open)
        except ValueError:
            rise = None
        try:
            over = overshoot_fraction(out, t_open)
        except ValueError:
            over = None
        settle = settling_time(open_part, self.on_level, 0.05, t_open)
        closed = out.window(self.period_s, t_open)
        opened = out.window(t_open, self.period_s * 2)
        er = extinction_ratio(opened, closed)
        return SwitchMetrics(rise_10_90_s=rise, settle_pm5pct_s=settle,
                             overshoot_fraction=over, extinction_db=er)


@dataclass
class SoaOptimization:
    drive: SampledWaveform
    result: PsoResult
    metrics: SwitchMetrics
    baseline_drive: SampledWaveform
    baseline_metrics: SwitchMetrics


def _warm_start(problem: SoaDriveProblem, cfg: PsoConfig, lo, hi) -> np.ndarray:
    """Perturbed square pulses for half the swarm; row 0 is the plain square."""
    base = np.clip(square_gate_drive(problem.soa, cfg.n_dims), lo, hi)
    n_half = cfg.n_particles // 2
    rows = [base]
    span = hi - lo
    for i in range(1, n_half):
        g = np.random.default_rng([cfg.seed, 0, cfg.n_particles + i])
        scale = cfg.init_spread * g.random()
        rows.append(np.clip(base + scale * span * (2 * g.random(cfg.n_dims) - 1), lo, hi))
    return np.array(rows)


def optimize_soa_drive(p: SoaParams, awg: Optional[AwgModel] = None,
                       cfg: Optional[PsoConfig] = None, slot_s: float = 20e-9,
                       input_power_mw: float = 0.1, *, executor=None,
                       sim_rate_hz: float = DEFAULT_SIM_RATE_HZ,
                       drive_rate_hz: float = 6e9) -> SoaOptimization:
    """Optimise an SOA gate drive against an ideal step set point.

    ``cfg.n_dims`` must equal the drive points in one gate period at
    ``drive_rate_hz`` (240 for 20 ns slots at 6 GS/s).  ``cfg.bounds`` defaults to ``(0, min(awg max, 2 * bias))`` mA.  The
    result always carries the square-drive baseline alongside, and the
    returned drive is never worse than that baseline in settling time: if
    the swarm's best-MSE drive settles later, the square is returned.
    """
    awg = awg or soa_awg()
    cfg = cfg or PsoConfig()
    expected = int(round(2 * slot_s * drive_rate_hz))
    if cfg.n_dims != expected:
        raise InvalidArgument(f"n_dims is {cfg.n_dims} but one gate period holds {expected} "
                              f"drive points at {drive_rate_hz:g} S/s")
    problem = SoaDriveProblem(p, awg, slot_s, cfg.n_dims, input_power_mw, sim_rate_hz)
    if cfg.bounds is None:
        cfg = replace(cfg, bounds=(max(awg.amplitude_min, 0.0),
                                   min(awg.amplitude_max, 2.0 * p.bias_current_ma)))
    lo, hi = cfg.box()
    if lo.size != problem.n_points:
        raise InvalidArgument("n_dims must equal the drive points per gate period")

    if executor is None:
        result = pso_optimize(problem.fitness_array, cfg, vectorized=True,
                              init_positions=_warm_start(problem, cfg, lo, hi))
    else:
        result = pso_optimize(lambda x: float(problem.fitness_array(x[None, :])[0]), cfg,
                              executor=executor,
                              init_positions=_warm_start(problem, cfg, lo, hi))

    base = square_gate_drive(p, cfg.n_dims)
    base_metrics = problem.metrics(base)
    best = result.best_position
    best_metrics = problem.metrics(best)
    if best_metrics.settle_pm5pct_s > base_metrics.settle_pm5pct_s:
        best, best_metrics = base, base_metrics
    return SoaOptimization(problem.drive_waveform(best), result, best_metrics,
                           problem.drive_waveform(base), base_metrics)
