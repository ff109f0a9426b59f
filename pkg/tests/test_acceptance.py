"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

from swiftsim.cli import main
from swiftsim.device import ChannelPlan, SoaParams, channel_frequencies, channel_wavelengths_nm, default_dsdbr
from swiftsim.metrics import overshoot_fraction, rise_time_10_90, settling_time
from swiftsim.preemph import (RegressionConfig, default_channel_subset, make_event,
                              optimize_preemphasis, run_switch_matrix)
from swiftsim.pso import PsoConfig, SoaDriveProblem, optimize_soa_drive, pso_optimize, square_gate_drive
from swiftsim.signal import SampledWaveform, laser_awg, soa_awg
from swiftsim.system import (build_schedule, crossover_channels, default_assignment,
                             power_per_channel_design, power_swift, simulate_swift, validate_slots)

LASER = default_dsdbr()
SOA = SoaParams()


@pytest.fixture(scope="module")
def pso_drive():
    # the full default budget: 160 particles x 240 points x up to 500 iterations, seed 0
    return optimize_soa_drive(SOA, soa_awg(), PsoConfig())


def test_criterion_1_channel_plan(criterion):
    with criterion(1) as note:
        plan = ChannelPlan()
        f = channel_frequencies(plan)
        wl = channel_wavelengths_nm(plan)
        span = f[-1] - f[0]
        note(f"{len(f)} channels, span {span / 1e3:.4f} THz, "
             f"{min(wl):.3f}-{max(wl):.3f} nm")
        assert len(f) == 122
        assert span == pytest.approx(6050.0, abs=1e-6)
        assert abs(min(wl) - 1524.11) <= 0.02 and abs(max(wl) - 1572.48) <= 0.02


def test_criterion_2_metric_oracles(criterion):
    with criterion(2) as note:
        rate, tau, pre = 50e9, 1e-9, 400
        t = np.arange(3000) / rate
        w = SampledWaveform(np.r_[np.zeros(pre), 1 - np.exp(-t / tau)], rate)
        ds = settling_time(w, 1.0, 0.05, pre / rate) - tau * math.log(20)
        dr = rise_time_10_90(w, pre / rate) - tau * math.log(9)
        assert abs(ds) <= 2 / rate and abs(dr) <= 2 / rate
        worst = 0.0
        for zeta in (0.2, 0.35, 0.5):
            srate = 500e9
            ts = np.arange(15000) / srate
            wn = 2 * np.pi * 1e9
            wd = wn * math.sqrt(1 - zeta ** 2)
            y = 1 - np.exp(-zeta * wn * ts) * np.sin(wd * ts + math.acos(zeta)) / math.sqrt(1 - zeta ** 2)
            got = overshoot_fraction(SampledWaveform(np.r_[np.zeros(2000), y], srate), 2000 / srate)
            want = math.exp(-math.pi * zeta / math.sqrt(1 - zeta ** 2))
            worst = max(worst, abs(got / want - 1))
        note(f"settle err {ds * rate:+.2f} samples, rise err {dr * rate:+.2f} samples, "
             f"overshoot rel err {worst:.2e}")
        assert worst <= 0.01


def test_criterion_3_pso_bowl(criterion):
    target = np.array([1.3, -2.1])

    def bowl(x):
        return float(np.sum((np.asarray(x) - target) ** 2))

    with criterion(3) as note:
        cfg = PsoConfig(n_particles=40, n_dims=2, max_iterations=200, bounds=(-5.0, 5.0), seed=0)
        res = pso_optimize(bowl, cfg)
        assert res.best_fitness < 1e-6 and res.iterations <= 200
        for seed in range(20):
            h = pso_optimize(bowl, replace(cfg, seed=seed)).fitness_history
            assert all(b <= a for a, b in zip(h, h[1:]))
        assert pso_optimize(bowl, cfg) == res
        with ThreadPoolExecutor(4) as ex:
            assert pso_optimize(bowl, cfg, executor=ex) == res
        note(f"best {res.best_fitness:.2e} after {res.iterations} iterations; 20 seeds monotone; "
             "reruns and parallel runs identical")


def test_criterion_4_soa_gate(criterion, pso_drive):
    with criterion(4) as note:
        prob = SoaDriveProblem(SOA, soa_awg())
        base = prob.metrics(square_gate_drive(SOA, 240))
        opt = pso_drive.metrics
        note(f"square settle {base.settle_pm5pct_s * 1e9:.3f} ns rise {base.rise_10_90_s * 1e9:.3f} ns; "
             f"PSO settle {opt.settle_pm5pct_s * 1e9:.3f} ns rise {opt.rise_10_90_s * 1e9:.3f} ns "
             f"({pso_drive.result.iterations} iterations)")
        assert 3.5e-9 <= base.settle_pm5pct_s <= 4.0e-9
        assert 0.6e-9 <= base.rise_10_90_s <= 0.8e-9
        assert pso_drive.result.iterations <= 500
        assert opt.settle_pm5pct_s <= 0.5 * base.settle_pm5pct_s
        assert opt.rise_10_90_s <= base.rise_10_90_s


def test_criterion_5_preemphasis(criterion, tmp_path):
    with criterion(5) as note:
        worst = optimize_preemphasis(make_event(0, 121, LASER), LASER)
        u = worst.unoptimized
        assert u.time_to_within_5ghz_s > 20e-9 or abs(u.freq_offset_at_deadline_ghz) > 5
        assert worst.converged and worst.iterations <= 20
        matrix = run_switch_matrix(default_channel_subset(5), LASER)
        assert len(matrix.events) == 20 and matrix.all_converged
        assert np.all(np.diff(matrix.cdf.values) >= 0) and np.all(np.diff(matrix.cdf.fractions) >= 0)
        assert matrix.cdf.max == matrix.worst_time_s
        out = str(tmp_path / "full")
        assert main(["optimize-laser", "--full", "--out", out]) == 0
        summary = json.load(open(os.path.join(out, "laser_summary.json")))
        assert summary["n_events"] == 420
        note(f"0->121 unoptimized {u.time_to_within_5ghz_s * 1e9:.1f} ns, optimized "
             f"{worst.metrics.time_to_within_5ghz_s * 1e9:.2f} ns in {worst.iterations} iteration(s); "
             f"20/20 converged, worst {matrix.worst_time_s * 1e9:.2f} ns; --full ran "
             f"{summary['n_events']} events, worst {summary['worst_case_time_ns']:.2f} ns")


def test_criterion_6_system(criterion, pso_drive):
    with criterion(6) as note:
        sch = build_schedule()
        rcfg = replace(RegressionConfig(), deadline_s=sch.blank_head_s)
        table = {e: optimize_preemphasis(make_event(*e, LASER), LASER, rcfg, laser_awg()).params
                 for e in default_assignment().switch_events()}
        res = simulate_swift(default_assignment(), LASER, LASER, SOA, SOA, sch, laser_awg(),
                             soa_awg(), table, pso_drive.drive)
        report = validate_slots(res.slots)
        tr = res.transitions_s
        note(f"validation {'pass' if report.passed else 'fail'}, transitions max "
             f"{max(tr) * 1e9:.3f} ns, ER {res.extinction_db:.1f} dB")
        assert report.passed
        assert np.all(res.gate_masks[0] ^ res.gate_masks[1])
        assert len(tr) == 4 and all(t < 1.5e-9 for t in tr)
        assert res.extinction_db >= 22.0


def test_criterion_7_power(criterion):
    with criterion(7) as note:
        cross = crossover_channels()
        flat = {power_swift(n) for n in range(1, 123)}
        step = power_swift(123)
        per = np.array([power_per_channel_design(n) for n in range(1, 367)])
        note(f"crossover {cross}, power {sorted(flat)} W up to 122 channels, {step} W at 123")
        assert cross == 8
        assert len(flat) == 1 and step > flat.pop()
        assert np.allclose(np.diff(per), per[0], rtol=1e-12) and per[0] > 0
        assert np.allclose(per, per[0] * np.arange(1, 367), rtol=1e-12)


def test_criterion_8_determinism(criterion, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"soa": {"pso": {"n_particles": 60, "max_iterations": 100}},
                               "laser": {"channels": [0, 30, 60, 121]}}))
    commands = (["optimize-soa"], ["optimize-laser"], ["simulate-system"], ["power-scaling"])
    with criterion(8) as note:
        runs = []
        for name in ("a", "b"):
            out = str(tmp_path / name)
            for cmd in commands:
                assert main(cmd + ["--config", str(cfg), "--seed", "0", "--out", out]) == 0
            runs.append({f: open(os.path.join(out, f), "rb").read() for f in sorted(os.listdir(out))})
        assert runs[0].keys() == runs[1].keys()
        same = [f for f in runs[0] if runs[0][f] == runs[1][f]]
        note(f"{len(same)}/{len(runs[0])} output files byte-identical across reruns")
        assert len(same) == len(runs[0])
