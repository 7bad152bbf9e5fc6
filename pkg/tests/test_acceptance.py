"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The statistical
criteria (09, 10, 12) are pinned to fixed master seeds so their outcomes
are deterministic; 09 and 10 apply a majority rule over three seeds, and
12 allows one retry seed.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from cvcim.boxqp import BoxQpInstance, amplitude_to_box_unclipped, feedback_gradient, objective
from cvcim.config import ExperimentConfig, load_config
from cvcim.dynamics import (
    CimParams,
    amplitude_domain,
    initial_state,
    measured_amplitudes,
    pump_at,
    simulate,
    step,
)
from cvcim.feedback import PolicyConfig, compute_update, init_state
from cvcim.instances import grid_oracle, oracle_best
from cvcim.metrics import PercentileTrajectory, roundtrip_ratio, ttt
from cvcim.runner import run_experiment, sweep_experiment

pytestmark = pytest.mark.filterwarnings("ignore::cvcim.metrics.ReferenceBeatenWarning")

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def report(num: int, ok: bool, elapsed: float, detail: str) -> None:
    print(f"\nACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s): {detail}")
    assert ok, f"criterion {num:02d}: {detail}"


def test_01_mean_field_fixed_point():
    """Noise off, lam=0, frozen p=2, j=0.5, g=0.1: mu -> +-sqrt(50) within 1e-6."""
    t0 = time.perf_counter()
    params = CimParams(
        T=2, dt=0.01, g=0.1, lam=0.0, pump_max=4.0, j0=0.5, j_decay=0.0, noise_enabled=False
    )
    assert pump_at(1, params) == 2.0  # schedule frozen by stepping at t=1
    inst = BoxQpInstance(Q=np.eye(2), c=np.zeros(2))
    rng = np.random.default_rng(0)
    state = replace(initial_state(2, PolicyConfig.gd()), mu=np.array([1.0, -1.0]))
    for _ in range(4000):
        state = step(state, 1, inst, params, PolicyConfig.gd(), rng)
    target = math.sqrt(50.0)
    err = float(np.max(np.abs(np.abs(state.mu) - target)))
    elapsed = time.perf_counter() - t0
    report(1, err <= 1e-6 and elapsed < 1.0, elapsed,
           f"|mu| -> sqrt(50) with max error {err:.2e} (signs preserved: "
           f"{np.sign(state.mu).tolist()})")


def test_02_variance_fixed_point():
    """Noise off, p=0, j=1, mu pinned at 0: sigma -> 0.5 within 1e-8."""
    t0 = time.perf_counter()
    params = CimParams(
        T=2, dt=0.001, g=0.1, lam=0.0, pump_max=0.0, j0=1.0, j_decay=0.0, noise_enabled=False
    )
    inst = BoxQpInstance(Q=np.eye(2), c=np.zeros(2))
    rng = np.random.default_rng(0)
    state = replace(initial_state(2, PolicyConfig.gd()), sigma=np.array([0.3, 0.3]))
    for _ in range(12000):
        state = step(state, 1, inst, params, PolicyConfig.gd(), rng)
    assert np.array_equal(state.mu, [0.0, 0.0])
    err = float(np.max(np.abs(state.sigma - 0.5)))
    elapsed = time.perf_counter() - t0
    report(2, err <= 1e-8 and elapsed < 1.0, elapsed, f"sigma -> 1/2 with max error {err:.2e}")


def test_03_measurement_noise_scale():
    """j=25, dt=0.0025: std of the measurement shift is 1/sqrt(4 j dt) = 2."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(123)
    n = 100_000
    z = rng.standard_normal(n)
    shift = measured_amplitudes(np.zeros(n), z, 25.0, 0.0025)
    std = float(np.std(shift))
    elapsed = time.perf_counter() - t0
    report(3, 1.98 <= std <= 2.02 and elapsed < 5.0, elapsed,
           f"empirical std {std:.4f} in [1.98, 2.02]")


def test_04_feedback_gradient_correctness():
    """Feedback gradient matches central finite differences to 1e-6 relative."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(44)
    from cvcim.boxqp import AmplitudeDomain

    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 11))
        inst = BoxQpInstance(Q=rng.standard_normal((n, n)), c=rng.standard_normal(n))
        dom = AmplitudeDomain(float(rng.uniform(10.0, 3000.0)))
        mu = rng.standard_normal(n) * dom.sqrt_a
        fb = feedback_gradient(inst, mu, dom)
        fd = np.empty(n)
        for i in range(n):
            h = 1e-6 * max(1.0, abs(mu[i]))
            up, dn = mu.copy(), mu.copy()
            up[i] += h
            dn[i] -= h
            fd[i] = (
                objective(inst, amplitude_to_box_unclipped(up, dom))
                - objective(inst, amplitude_to_box_unclipped(dn, dom))
            ) / (2.0 * h)
        scale = np.maximum(np.abs(fd), 1e-12)
        worst = max(worst, float(np.max(np.abs(fb - fd) / scale)))
    elapsed = time.perf_counter() - t0
    report(4, worst <= 1e-6 and elapsed < 5.0, elapsed,
           f"worst relative error {worst:.2e} over 100 instances (n <= 10)")


def test_05_policy_reductions():
    """Momentum(theta=0) == GD bitwise on full trajectories; Adam first step is
    sign-normalized to 1e-12."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    inst = BoxQpInstance(Q=rng.standard_normal((6, 6)), c=rng.standard_normal(6))
    params = CimParams()  # full reference schedules, T=15000
    gd_state, gd_series = simulate(inst, params, PolicyConfig.gd(), seed=77, f_star=-5.0)
    m_state, m_series = simulate(
        inst, params, PolicyConfig.momentum(theta=0.0), seed=77, f_star=-5.0
    )
    bitwise = (
        np.array_equal(gd_state.mu, m_state.mu)
        and np.array_equal(gd_state.sigma, m_state.sigma)
        and np.array_equal(gd_series.gaps, m_series.gaps)
        and np.array_equal(gd_series.roundtrips, m_series.roundtrips)
    )
    adam_ok = True
    cfg = PolicyConfig.adam()
    for _ in range(20):
        grad = rng.standard_normal(5) * 10.0 ** rng.integers(-2, 3)
        direction, _ = compute_update(init_state(5, cfg), grad, cfg)
        expected = grad / (np.abs(grad) + cfg.epsilon)
        adam_ok &= bool(np.max(np.abs(direction - expected)) <= 1e-12)
    elapsed = time.perf_counter() - t0
    report(5, bitwise and adam_ok and elapsed < 5.0, elapsed,
           f"momentum(0) bitwise == gd: {bitwise}; adam first step sign-normalized: {adam_ok}")


def test_06_roundtrip_ratio_reproduction():
    """Synthetic minima 8e-3 at roundtrips 9500 and 30000 give ratio 9500/30000."""
    t0 = time.perf_counter()

    def descending(reach_at):
        roundtrips = np.arange(0, 30001, 500, dtype=np.int64)
        gaps = np.maximum(1.0 - (1.0 - 8e-3) * roundtrips / reach_at, 8e-3)
        return PercentileTrajectory(5.0, roundtrips, gaps)

    res = roundtrip_ratio(descending(9500), descending(30000), "momentum", "gd")
    expected = 9500 / 30000  # 0.31667 to five figures
    ok = (
        abs(res.ratio - expected) <= 1e-9
        and res.faster == "momentum"
        and res.roundtrip_a == 9500
        and res.roundtrip_b == 30000
        and abs(res.target_gap - 8e-3) < 1e-15
    )
    elapsed = time.perf_counter() - t0
    report(6, ok and elapsed < 1.0, elapsed,
           f"ratio {res.ratio:.5f} vs {expected:.5f}, faster={res.faster}")


def test_07_time_to_target():
    """Closed-form spot value, infinite at p=0, clamped at p >= s."""
    t0 = time.perf_counter()
    spot = ttt(1.0, 0.5, 0.99)
    ok = (
        abs(spot - 6.6439) <= 1e-3
        and ttt(1.0, 0.0, 0.99) == math.inf
        and ttt(1.0, 0.99, 0.99) == 1.0
        and ttt(3.5, 1.0, 0.5) == 3.5
    )
    elapsed = time.perf_counter() - t0
    report(7, ok and elapsed < 1.0, elapsed, f"ttt(1, 0.5, 0.99) = {spot:.4f}")


def test_08_oracle_cross_validation():
    """Multi-start oracle never exceeds the brute-force grid value (+1e-6),
    including after refining the grid from 21 to 41 points per axis."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(88)
    worst = -math.inf
    ok = True
    for _ in range(20):
        inst = BoxQpInstance(Q=rng.standard_normal((4, 4)), c=rng.standard_normal(4))
        _, f = oracle_best(inst, n_starts=1000, max_iters=1000, seed=13)
        g21 = grid_oracle(inst, 21)
        g41 = grid_oracle(inst, 41)
        assert g41 <= g21 + 1e-15  # nested grids refine downward
        worst = max(worst, f - g41)
        ok &= f <= g21 + 1e-6 and f <= g41 + 1e-6
    elapsed = time.perf_counter() - t0
    report(8, ok and elapsed < 120.0, elapsed,
           f"oracle - refined grid <= {worst:.2e} on 20 instances (bound 1e-6)")


def _sweep_cells(out_dir):
    """Parse sweep.csv into cell aggregates and per-sample gap pools."""
    lines = (out_dir / "sweep.csv").read_text().splitlines()
    header = lines[0].split(",")
    col = {name: i for i, name in enumerate(header)}
    cells = {}
    samples = {}
    for line in lines[1:]:
        row = line.split(",")
        key = (float(row[col["kappa"]]), float(row[col["lambda"]]), row[col["policy"]])
        if row[col["row"]] == "cell":
            cells[key] = float(row[col["frac_diverged"]])
        else:
            samples.setdefault(key, []).append(float(row[col["best_gap"]]))
    return cells, samples


def test_09_feedback_strength_sensitivity(tmp_path):
    """kappa x lambda sensitivity grid: adaptive feedback never diverges while
    gd and momentum blow up at kappa=1000; weak feedback hampers adaptive
    convergence.  Majority over master seeds 1, 2, 3."""
    t0 = time.perf_counter()
    seed_pass = []
    details = []
    for master in (1, 2, 3):
        config = ExperimentConfig(
            policies=("gd", "momentum", "adam"),
            samples=20,
            master_seed=master,
            stride=10,
            oracle_starts=100,
            oracle_iters=1000,
            cim=CimParams(),
            kappa_list=(1.0, 10.0, 100.0, 1000.0),
            lambda_list=(0.04, 326.0, 701.0, 1076.0),
            sweep_n=20,
        )
        out = tmp_path / f"sweep-{master}"
        sweep_experiment(config, out_dir=out)
        cells, samples = _sweep_cells(out)

        adam_never = all(frac == 0.0 for (k, l, p), frac in cells.items() if p == "adam")
        gd_blows = any(
            frac >= 0.5 for (k, l, p), frac in cells.items() if p == "gd" and k == 1000.0
        )
        mom_blows = any(
            frac >= 0.5 for (k, l, p), frac in cells.items() if p == "momentum" and k == 1000.0
        )
        weak = np.median(
            np.concatenate([samples[(k, 0.04, "adam")] for k in (1.0, 10.0, 100.0, 1000.0)])
        )
        tuned = np.median(
            np.concatenate([samples[(k, 326.0, "adam")] for k in (1.0, 10.0, 100.0, 1000.0)])
        )
        ok = adam_never and gd_blows and mom_blows and weak > tuned
        seed_pass.append(ok)
        details.append(
            f"seed {master}: adam_div0={adam_never} gd_blowup={gd_blows} "
            f"mom_blowup={mom_blows} adam med(0.04)={weak:.3g} > med(326)={tuned:.3g}"
        )
    elapsed = time.perf_counter() - t0
    report(9, sum(seed_pass) >= 2, elapsed, " | ".join(details))


def test_10_sample_diversity_direction(tmp_path):
    """Momentum's gap spread should exceed plain gradient descent's on a
    majority of generated kappa=1 instances.  Majority over master seeds
    1, 2, 3 with 50 samples per cell."""
    t0 = time.perf_counter()
    instance_labels = tuple(f"cond-n20-k1-s{s}" for s in (201, 202, 203, 204, 205))
    seed_pass = []
    details = []
    for master in (1, 2, 3):
        config = ExperimentConfig(
            instances=instance_labels,
            policies=("gd", "momentum"),
            samples=50,
            master_seed=master,
            stride=10,
            oracle_starts=100,
            oracle_iters=1000,
            cim=CimParams(),
        )
        paths = run_experiment(config, out_dir=tmp_path / f"div-{master}")
        lines = paths["summary"].read_text().splitlines()
        col = {name: i for i, name in enumerate(lines[0].split(","))}
        stddev = {}
        for line in lines[1:]:
            row = line.split(",")
            stddev[(row[col["instance"]], row[col["policy"]])] = float(row[col["gap_stddev"]])
        wins = sum(
            1 for label in instance_labels if stddev[(label, "momentum")] >= stddev[(label, "gd")]
        )
        seed_pass.append(wins >= 3)
        details.append(f"seed {master}: momentum spread wins {wins}/5")
    elapsed = time.perf_counter() - t0
    report(10, sum(seed_pass) >= 2, elapsed, " | ".join(details))


def test_11_end_to_end_determinism(tmp_path):
    """The checked-in convergence config produces byte-identical outputs on
    rerun and under a different worker count."""
    import hashlib

    t0 = time.perf_counter()
    config = load_config(CONFIG_DIR / "experiment1_convergence.toml")
    runs = [
        run_experiment(config, workers=1, out_dir=tmp_path / "r1"),
        run_experiment(config, workers=1, out_dir=tmp_path / "r2"),
        run_experiment(config, workers=2, out_dir=tmp_path / "r3"),
    ]
    digests = []
    for paths in runs:
        digests.append(
            tuple(
                hashlib.sha256(paths[name].read_bytes()).hexdigest()
                for name in ("runs", "percentiles", "summary")
            )
        )
    ok = digests[0] == digests[1] == digests[2]
    elapsed = time.perf_counter() - t0
    report(11, ok, elapsed,
           f"runs.jsonl/percentiles.csv/summary.csv digests identical across "
           f"rerun and workers=2: {ok}")


def test_12_full_parameter_smoke(tmp_path):
    """Reference operating point, 50 samples per policy: the adaptive policy
    never diverges and some policy reaches gap <= 1e-3; one retry seed."""
    import json

    t0 = time.perf_counter()

    def attempt(master):
        config = ExperimentConfig(
            instances=("cond-n20-k1-s301",),
            policies=("gd", "momentum", "adam"),
            samples=50,
            master_seed=master,
            stride=10,
            oracle_starts=200,
            oracle_iters=1000,
            cim=CimParams(),  # T=15000, dt=0.0025, g=0.01, lam=550
        )
        paths = run_experiment(config, out_dir=tmp_path / f"smoke-{master}")
        records = [json.loads(ln) for ln in paths["runs"].read_text().splitlines()]
        adam_divergences = sum(
            1 for r in records if r["policy"] == "adam" and r["diverged_at"] is not None
        )
        best = {}
        for r in records:
            best[r["policy"]] = min(best.get(r["policy"], math.inf), r["best_gap"])
        return adam_divergences, best

    master = 11
    adam_div, best = attempt(master)
    ok = adam_div == 0 and min(best.values()) <= 1e-3
    if not ok:  # soft criterion: retry once with a second seed
        master = 12
        adam_div, best = attempt(master)
        ok = adam_div == 0 and min(best.values()) <= 1e-3
    elapsed = time.perf_counter() - t0
    report(12, ok, elapsed,
           f"seed {master}: adam divergences {adam_div}, best gaps "
           + ", ".join(f"{k}={v:.2e}" for k, v in sorted(best.items())))
