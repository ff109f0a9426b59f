"""Command-line driver: ``swiftsim <command> [options]``.

Commands
--------
optimize-soa      swarm-optimise the SOA gate drive
optimize-laser    regression pre-emphasis over a channel switch matrix
simulate-system   gated two-laser simulation and slot validation
power-scaling     power of the two-laser design against one source per channel

Every output file carries the config hash and seed; a rerun with the same
config and seed rewrites identical bytes.  Exit codes: 0 success, 2 config
error, 3 missing artifact, 4 validation failure, 5 internal error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from .device import load_device_params
from .errors import InvalidArgument, NotFound, OutOfRange, SwiftError
from .preemph import (RegressionConfig, default_channel_subset, make_event, optimize_preemphasis,
                      run_switch_matrix, table_from_json_dict, table_to_json_dict)
from .pso import PsoConfig, SoaDriveProblem, optimize_soa_drive
from .signal import SampledWaveform, Units, laser_awg, soa_awg
from .system import (PowerModelParams, SimulationOptions, SlotAssignment, build_schedule,
                     crossover_channels, default_assignment, power_per_channel_design,
                     power_swift, simulate_swift, validate_slots)

log = logging.getLogger("swiftsim")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_VALIDATION, EXIT_INTERNAL = 0, 2, 3, 4, 5

DEFAULT_CONFIG = {
    "device_params": None,
    "soa": {"slot_s": 20e-9, "input_power_mw": 0.1, "pso": {}},
    "laser": {"channels": None, "channel_count": 5, "full_channel_count": 21, "regression": {}},
    "system": {
        "slot_s": 20e-9,
        "assignment": None,
        "options": {},
        "tol_ghz": 5.0,
        "flatness_db": 1.0,
        "soa_drive": None,
        "preemph_table": None,
    },
    "power": {"n_min": 1, "n_max": 366, "params": {}},
}


class ConfigError(Exception):
    pass


class MissingArtifact(Exception):
    pass


class ValidationFailed(Exception):
    pass


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and base[k] and isinstance(v, dict):
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        with open(path) as fh:
            user = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return _merge(DEFAULT_CONFIG, user)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


class _Run:
    """Per-invocation context: effective config, provenance and output writing."""

    def __init__(self, args, cfg: dict, extra: dict):
        self.args = args
        self.cfg = cfg
        self.seed = args.seed if args.seed is not None else int(cfg["soa"]["pso"].get("seed", 0))
        self.effective = {"command": args.command, "config": cfg, "seed": self.seed, **extra}
        self.hash = config_hash(self.effective)
        self.out = args.out
        os.makedirs(self.out, exist_ok=True)

    @property
    def header(self) -> str:
        return f"config_sha256={self.hash} seed={self.seed} command={self.args.command}"

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def write_text(self, name: str, text: str):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(text)
        log.info("wrote %s", self.path(name))

    def write_json(self, name: str, payload: dict):
        doc = {"config_sha256": self.hash, "seed": self.seed, **payload}
        self.write_text(name, json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")

    def write_columns(self, name: str, names: Sequence[str], columns: Sequence[Sequence]):
        buf = io.StringIO()
        buf.write(f"# {self.header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for row in zip(*columns):
            w.writerow([_cell(v) for v in row])
        self.write_text(name, buf.getvalue())

    def devices(self) -> dict:
        src = self.cfg["device_params"]
        if src is None:
            return load_device_params({})
        try:
            return load_device_params(src)
        except FileNotFoundError:
            raise ConfigError(f"device parameter file not found: {src}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"device parameter file {src} is not valid JSON: {exc}") from None

    def pso_config(self) -> PsoConfig:
        d = dict(self.cfg["soa"]["pso"])
        d["seed"] = self.seed
        return PsoConfig.from_json_dict(d)

    def regression_config(self) -> RegressionConfig:
        return RegressionConfig.from_json_dict(self.cfg["laser"]["regression"])

    def executor(self):
        return ThreadPoolExecutor(self.args.workers) if self.args.workers > 1 else None


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_drive_csv(path: str) -> SampledWaveform:
    """Load a drive written by ``optimize-soa`` (columns ``time_ns, current_ma``)."""
    rows = []
    with open(path) as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header != ["time_ns", "current_ma"]:
            raise ConfigError(f"{path}: expected columns time_ns,current_ma")
        for r in reader:
            rows.append((float(r[0]), float(r[1])))
    if len(rows) < 2:
        raise ConfigError(f"{path}: drive needs at least two samples")
    t = np.array([r[0] for r in rows])
    rate = round((len(t) - 1) / (t[-1] - t[0]) * 1e9)
    return SampledWaveform(np.array([r[1] for r in rows]), float(rate), t[0] * 1e-9, Units.MA)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _soa_stage(run: _Run, devices: dict):
    scfg = run.cfg["soa"]
    cfg = run.pso_config()
    log.info("optimising SOA drive: %d particles x %d dims, <= %d iterations",
             cfg.n_particles, cfg.n_dims, cfg.max_iterations)
    opt = optimize_soa_drive(devices["soa"], soa_awg(), cfg, slot_s=scfg["slot_s"],
                             input_power_mw=scfg["input_power_mw"])
    return opt


def _write_soa_artifacts(run: _Run, devices: dict, opt) -> None:
    scfg = run.cfg["soa"]
    d = opt.drive
    run.write_columns("soa_drive.csv", ["time_ns", "current_ma"],
                      [d.times() * 1e9, d.samples])
    run.write_text("soa_convergence.csv", opt.result.history_csv(run.header))
    problem = SoaDriveProblem(devices["soa"], soa_awg(), scfg["slot_s"], d.samples.size,
                              scfg["input_power_mw"])
    base_out = problem.simulate(opt.baseline_drive.samples)
    best_out = problem.simulate(d.samples)
    run.write_columns("soa_output.csv", ["time_ns", "baseline_mw", "optimized_mw"],
                      [base_out.times() * 1e9, base_out.samples, best_out.samples])
    fell_back = bool(np.array_equal(d.samples, opt.baseline_drive.samples))
    run.write_json("soa_metrics.json", {
        "baseline": opt.baseline_metrics.to_json_dict(),
        "optimized": opt.metrics.to_json_dict(),
        "fell_back_to_square": fell_back,
        "pso": opt.result.to_json_dict(include_positions=run.args.verbose),
    })


def cmd_optimize_soa(run: _Run) -> int:
    devices = run.devices()
    opt = _soa_stage(run, devices)
    _write_soa_artifacts(run, devices, opt)
    b, o = opt.baseline_metrics, opt.metrics
    print(f"baseline : settle {b.settle_pm5pct_s * 1e9:.3f} ns, rise {b.rise_10_90_s * 1e9:.3f} ns")
    print(f"optimized: settle {o.settle_pm5pct_s * 1e9:.3f} ns, rise {o.rise_10_90_s * 1e9:.3f} ns")
    return EXIT_OK


def cmd_optimize_laser(run: _Run) -> int:
    devices = run.devices()
    lcfg = run.cfg["laser"]
    plan = devices["channel_plan"]
    if lcfg["channels"] is not None:
        channels = [int(c) for c in lcfg["channels"]]
    else:
        count = lcfg["full_channel_count"] if run.args.full else lcfg["channel_count"]
        channels = default_channel_subset(count, plan.count)
    for c in channels:
        if not 0 <= c < plan.count:
            raise ConfigError(f"channel {c} outside the {plan.count}-channel plan")
    laser = devices["dsdbr"]
    rcfg = run.regression_config()
    log.info("switch matrix over %d channels (%d events)", len(channels),
             len(channels) * (len(channels) - 1))
    ex = run.executor()
    try:
        res = run_switch_matrix(channels, laser, rcfg, laser_awg(), executor=ex)
    finally:
        if ex is not None:
            ex.shutdown()
    run.write_text("laser_events.csv", res.events_csv(run.header))
    if res.cdf is not None:
        run.write_text("laser_cdf.csv", res.cdf.to_csv(1e9, "time_to_within_ns", run.header))
    lo, hi = min(channels), max(channels)
    widest = next((r for r in res.events if r.event.key == (lo, hi)), None)
    summary = {
        "channels": channels,
        "n_events": len(res.events),
        "all_converged": res.all_converged,
        "failed_events": [[r.event.from_channel, r.event.to_channel, r.error]
                          for r in res.events if r.error is not None],
        "worst_case_time_ns": res.worst_time_s * 1e9,
        "worst_offset_at_deadline_ghz": res.worst_offset_ghz,
        "regression": rcfg.to_json_dict(),
    }
    if widest is not None:
        summary["widest_swing_event"] = {
            "from": lo, "to": hi, "iterations": widest.iterations,
            "converged": widest.converged,
            "unoptimized": widest.unoptimized.to_json_dict() if widest.unoptimized else None,
            "optimized": widest.metrics.to_json_dict(),
        }
    run.write_json("laser_summary.json", summary)
    table = res.preemphasis_table()
    run.write_json("preemph_table.json", table_to_json_dict(table))
    print(f"{len(res.events)} events, worst time-to-within {res.worst_time_s * 1e9:.2f} ns, "
          f"all converged: {res.all_converged}")
    return EXIT_OK


def _system_regression(run: _Run, schedule) -> RegressionConfig:
    # a laser must be settled by the time its gate opens, not just by the usual deadline
    rcfg = run.regression_config()
    return replace(rcfg, deadline_s=min(rcfg.deadline_s, schedule.blank_head_s))


def cmd_simulate_system(run: _Run) -> int:
    devices = run.devices()
    scfg = run.cfg["system"]
    laser, soa = devices["dsdbr"], devices["soa"]
    assignment = (SlotAssignment.from_json_dict(scfg["assignment"])
                  if scfg["assignment"] is not None else default_assignment())
    schedule = build_schedule(scfg["slot_s"])
    opts = SimulationOptions.from_json_dict(scfg["options"])
    if run.args.gates_off:
        opts = replace(opts, gates_off=True)
    tol = run.args.tol_ghz if run.args.tol_ghz is not None else scfg["tol_ghz"]

    drive_path = scfg["soa_drive"] or run.path("soa_drive.csv")
    table_path = scfg["preemph_table"] or run.path("preemph_table.json")
    missing = [p for p in (drive_path, table_path) if not os.path.exists(p)]
    if missing and not run.args.auto_optimize:
        raise MissingArtifact("missing optimizer artifact(s): " + ", ".join(missing)
                              + " (run optimize-soa / optimize-laser or pass --auto-optimize)")

    if os.path.exists(drive_path):
        drive = read_drive_csv(drive_path)
    else:
        if not math.isclose(run.cfg["soa"]["slot_s"], scfg["slot_s"]):
            raise ConfigError("soa.slot_s and system.slot_s must agree for --auto-optimize")
        opt = _soa_stage(run, devices)
        _write_soa_artifacts(run, devices, opt)
        drive = opt.drive
    if os.path.exists(table_path):
        with open(table_path) as fh:
            table = table_from_json_dict(json.load(fh))
    else:
        table = {}
        rcfg = _system_regression(run, schedule)
        for a, b in assignment.switch_events():
            table[(a, b)] = optimize_preemphasis(make_event(a, b, laser), laser, rcfg, laser_awg()).params
        run.write_json("preemph_table.json", table_to_json_dict(table))
    # auto-optimise any events a supplied table is missing
    if run.args.auto_optimize:
        rcfg = _system_regression(run, schedule)
        for a, b in assignment.switch_events():
            if (a, b) not in table:
                table[(a, b)] = optimize_preemphasis(make_event(a, b, laser), laser, rcfg,
                                                     laser_awg()).params

    try:
        res = simulate_swift(assignment, laser, laser, soa, soa, schedule, laser_awg(), soa_awg(),
                             table, drive, opts)
    except NotFound as exc:
        raise MissingArtifact(str(exc)) from None
    report = validate_slots(res.slots, tol, scfg["flatness_db"])

    t_ns = res.power_out.times() * 1e9
    run.write_columns("system_power.csv", ["time_ns", "power_mw"], [t_ns, res.power_out.samples])
    run.write_columns("system_freq.csv", ["time_ns", "freq_offset_ghz"], [t_ns, res.freq_out.samples])
    run.write_text("system_slots.csv", res.slots_csv(run.header))
    masks = res.gate_masks
    complementary = bool(np.all(masks[0] ^ masks[1]))
    run.write_json("system_validation.json", {
        **report.to_json_dict(),
        "gates_off": opts.gates_off,
        "extinction_db": res.extinction_db,
        "transitions_90_90_ns": [t * 1e9 for t in res.transitions_s],
        "gate_complementary": complementary,
        "assignment": assignment.to_json_dict(),
        "schedule": schedule.to_json_dict(),
    })
    for s in res.slots:
        tr = "-" if s.transition_90_90_s is None else f"{s.transition_90_90_s * 1e9:.3f} ns"
        print(f"slot {s.slot_index} laser {s.laser_id} ch {s.channel:3d}: transition {tr}, "
              f"max |offset| {s.max_abs_freq_offset_ghz:.2f} GHz, flatness {s.flatness_db:.2f} dB")
    print(f"extinction {res.extinction_db:.1f} dB; validation {'PASS' if report.passed else 'FAIL'}")
    if not report.passed:
        raise ValidationFailed("slot validation failed")
    return EXIT_OK


def cmd_power_scaling(run: _Run) -> int:
    pcfg = run.cfg["power"]
    params = PowerModelParams.from_json_dict(pcfg["params"])
    n_min = run.args.n_min if run.args.n_min is not None else pcfg["n_min"]
    n_max = run.args.n_max if run.args.n_max is not None else pcfg["n_max"]
    if not 1 <= n_min <= n_max:
        raise ConfigError("power range needs 1 <= n_min <= n_max")
    ns = list(range(n_min, n_max + 1))
    swift = [power_swift(n, params) for n in ns]
    per_ch = [power_per_channel_design(n, params) for n in ns]
    run.write_columns("power_scaling.csv", ["n_channels", "power_swift_w", "power_per_channel_w"],
                      [ns, swift, per_ch])
    cross = crossover_channels(params)
    run.write_json("power_summary.json", {"crossover_channels": cross, "n_min": n_min,
                                          "n_max": n_max, "params": params.to_json_dict()})
    print(f"crossover at {cross} channels" if cross is not None else "no crossover")
    return EXIT_OK


COMMANDS = {
    "optimize-soa": cmd_optimize_soa,
    "optimize-laser": cmd_optimize_laser,
    "simulate-system": cmd_simulate_system,
    "power-scaling": cmd_power_scaling,
}


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the command name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=_u64, metavar="U64", default=argparse.SUPPRESS)
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS)
    common.add_argument("--workers", type=int, metavar="N", default=argparse.SUPPRESS)
    common.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="swiftsim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("optimize-soa", parents=[common], help="optimise the SOA gate drive")
    p = sub.add_parser("optimize-laser", parents=[common], help="pre-emphasis switch matrix")
    p.add_argument("--full", action="store_true", help="use the full channel subset")
    p = sub.add_parser("simulate-system", parents=[common], help="simulate and validate slots")
    p.add_argument("--auto-optimize", action="store_true",
                   help="run the optimisers for any missing artifact")
    p.add_argument("--gates-off", action="store_true", help="hold both SOAs on")
    p.add_argument("--tol-ghz", type=float, default=None, help="slot frequency tolerance")
    p = sub.add_parser("power-scaling", parents=[common], help="power model sweep")
    p.add_argument("--n-min", type=int, default=None)
    p.add_argument("--n-max", type=int, default=None)
    return parser


def _command_extras(args) -> dict:
    keys = {"optimize-laser": ("full",),
            "simulate-system": ("auto_optimize", "gates_off", "tol_ghz"),
            "power-scaling": ("n_min", "n_max")}.get(args.command, ())
    return {k: getattr(args, k) for k in keys}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    for k, v in (("config", None), ("seed", None), ("out", "out"), ("workers", 1), ("verbose", False)):
        if not hasattr(args, k):
            setattr(args, k, v)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        run = _Run(args, cfg, _command_extras(args))
        return COMMANDS[args.command](run)
    except (ConfigError, InvalidArgument, OutOfRange) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ValidationFailed as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SwiftError, ArithmeticError, RuntimeError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
