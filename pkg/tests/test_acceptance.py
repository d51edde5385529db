"""End-to-end acceptance checks, one group per criterion.

A PASS/FAIL line per criterion is printed in the terminal summary (see conftest.py).
"""

import itertools
import math
import time

import numpy as np
import pytest

from bmgate import fixtures
from bmgate.cli import EXIT_OK, main
from bmgate.engine import AfterGate, Blinding, Honest, OptimalState, TimeShift, run_simulation
from bmgate.measure import MeasurementSetting, QubitState, averaged_povm, detection_probability, qber_min
from bmgate.monitor import MonitorConfig, required_test_pulses, run_monitor
from bmgate.multiphoton import cell_minima_corner, cell_minima_exhaustive, verify_bound
from bmgate.security import analyze, rate_unpatched

PLATEAU = fixtures.plateau_gate()
CENTER = len(PLATEAU) // 2
RAMP_OFFSET = 20  # plateau half-width in samples; ramp sample k sits at theta = k * pi / 24


def ramp_time(k):
    i = CENTER + RAMP_OFFSET + k
    assert math.isclose(PLATEAU.theta[i], k * math.pi / 24, abs_tol=1e-12)
    return float(PLATEAU.t_grid[i])


def five_sigma(result, expected):
    return 5 * math.sqrt(expected * (1 - expected) / result.n_sifted)


# -- 1 ---------------------------------------------------------------------


@pytest.mark.criterion(1)
def test_worked_security_example():
    start = time.perf_counter()
    rep = analyze(PLATEAU, E=0.0568, E_prime=0.45, delta=0.0)
    gaussians = fixtures.shifted_gaussians()
    rep_g = analyze(gaussians, E=0.0568, E_prime=0.45)
    elapsed = time.perf_counter() - start

    assert rep.eta_restricted == pytest.approx(0.9, abs=1e-12)
    assert 0.784 <= rep.effective_blinding <= 0.788
    assert 0.222 <= rep.rate_patched <= 0.229
    assert rep_g.eta_global < 0.01
    assert rate_unpatched(0.0568, rep_g.eta_global) == 0.0
    assert rep_g.rate_unpatched == 0.0
    assert rep.rate_unpatched == 0.0
    assert elapsed < 1.0


# -- 2 ---------------------------------------------------------------------


@pytest.mark.criterion(2)
def test_spectra_closed_form():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    n = 2000
    worst_eig = worst_sum = 0.0
    for ea, eb, th in zip(rng.random(n), rng.random(n), rng.random(n) * math.pi / 2):
        s = MeasurementSetting(float(ea), float(eb), float(th))
        povm = averaged_povm(s)
        c = math.cos(s.theta)
        expected = np.array([s.p_det * (1 - c) / 2, s.p_det * (1 + c) / 2])
        for op in (povm.e0, povm.e1):
            worst_eig = max(worst_eig, np.max(np.abs(np.linalg.eigvalsh(op) - expected)))
        worst_sum = max(worst_sum, np.max(np.abs(povm.e0 + povm.e1 + povm.ev - np.eye(2))))
    elapsed = time.perf_counter() - start
    assert worst_eig <= 1e-10
    assert worst_sum <= 1e-12
    assert elapsed < 1.0


# -- 3 ---------------------------------------------------------------------


@pytest.mark.criterion(3)
def test_detection_state_independent():
    rng = np.random.default_rng(3)
    for ea, eb, th in [(0.1, 0.05, 0.4), (0.2, 0.1, math.pi / 3), (0.9, 0.3, math.pi / 2), (0.5, 0.5, 0.0)]:
        s = MeasurementSetting(ea, eb, th)
        probs = []
        for _ in range(200):
            g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            rho = g @ g.conj().T
            probs.append(detection_probability(s, QubitState(rho / np.trace(rho))))
        assert max(probs) - min(probs) < 1e-12
        assert probs[0] == pytest.approx(s.p_det, abs=1e-12)


# -- 4 ---------------------------------------------------------------------

FLOOR_STRATEGIES = [
    Honest(),
    Honest(time=0.3),
    TimeShift(-0.3, 0.3),
    TimeShift(-0.25, 0.25, "alice_bit"),
    AfterGate(0.45),
    OptimalState((ramp_time(4),)),
    OptimalState((ramp_time(4), ramp_time(8))),
    OptimalState((0.0, ramp_time(12))),
]


@pytest.mark.criterion(4)
def test_qber_floor():
    start = time.perf_counter()
    for k in (4, 8, 12):  # pi/6, pi/3, pi/2
        theta = k * math.pi / 24
        expected = (1 - math.cos(theta)) / 2
        r = run_simulation(PLATEAU, OptimalState((ramp_time(k),)), 1_000_000, seed=40 + k)
        assert abs(r.empirical_qber - expected) <= five_sigma(r, expected), (k, r.empirical_qber)

    for i, strategy in enumerate(FLOOR_STRATEGIES):
        r = run_simulation(PLATEAU, strategy, 300_000, seed=500 + i)
        floor = min(float(qber_min(PLATEAU.theta[PLATEAU.index_of(t)])) for t in strategy.arrival_times(PLATEAU))
        sigma = math.sqrt(max(floor * (1 - floor), 1e-12) / r.n_sifted)
        assert r.empirical_qber >= floor - 5 * sigma, (strategy, r.empirical_qber, floor)
    assert time.perf_counter() - start < 60.0


# -- 5 ---------------------------------------------------------------------


@pytest.mark.criterion(5)
def test_after_gate_exposed():
    t = ramp_time(12)
    assert PLATEAU.theta[PLATEAU.index_of(t)] == math.pi / 2
    patched = run_simulation(PLATEAU, AfterGate(t), 1_000_000, seed=5)
    assert abs(patched.empirical_qber - 0.5) <= five_sigma(patched, 0.5)

    unpatched_curve = fixtures.by_name("plateau_gate_unpatched")
    assert np.all(unpatched_curve.theta == 0)
    unpatched = run_simulation(unpatched_curve, AfterGate(t), 1_000_000, seed=5)
    assert unpatched.n_sifted > 1000
    assert unpatched.empirical_qber == 0.0


# -- 6 ---------------------------------------------------------------------

QS = (0.0, 0.1, 0.25, 0.3, 0.5)


@pytest.mark.criterion(6)
def test_two_photon_bound():
    start = time.perf_counter()
    for q1, q2 in itertools.product(QS, QS):
        # Exact minimum over every record with n1 + n2 + c <= 60.
        res = verify_bound(q1, q2, 60)
        assert res.holds, res
        assert res.min_qber >= min(q1, q2) - 1 / 120
        # Brute-force enumeration of every assignment at N = 30 agrees cell by cell.
        brute = cell_minima_exhaustive(q1, q2, 30)
        assert np.array_equal(brute[:, 0], cell_minima_corner(q1, q2, 30)[:, 0])
        assert verify_bound(q1, q2, 30, exhaustive=True).holds

    # Two-photon Monte Carlo: each photon placed at its own mode with the optimal state.
    for i, (ka, kb) in enumerate([(4, 8), (8, 12), (4, 12), (0, 12)]):
        ta, tb = (ramp_time(ka) if ka else 0.0), ramp_time(kb)
        r = run_simulation(PLATEAU, OptimalState((ta, tb)), 300_000, seed=600 + i)
        bound = min(float(qber_min(ka * math.pi / 24)), float(qber_min(kb * math.pi / 24)))
        sigma = math.sqrt(max(bound * (1 - bound), 1e-12) / r.n_sifted)
        assert r.empirical_qber >= bound - 5 * sigma, (ka, kb, r.empirical_qber)
    assert time.perf_counter() - start < 30.0


# -- 7 ---------------------------------------------------------------------


@pytest.mark.criterion(7)
def test_blindness_monitor():
    cfg = MonitorConfig(mu=1.0, p_test=0.01, alpha=1e-6, eta_expected=0.1)
    assert required_test_pulses(cfg) == 139

    verdicts = [
        run_monitor(PLATEAU, Blinding(), cfg, 100_000, seed=s, simulate_key=False).verdict
        for s in range(100)
    ]
    assert verdicts.count("blind") == 100

    honest = run_monitor(PLATEAU, Honest(), cfg, 1_000_000_000, seed=2, simulate_key=False)
    assert honest.n_test_pulses >= 10_000_000
    assert honest.false_alarm_rate <= cfg.alpha
    assert honest.verdict == "sensitive"


# -- 8 ---------------------------------------------------------------------


@pytest.mark.criterion(8)
@pytest.mark.parametrize("command", ["simulate", "analyze", "optimize", "monitor", "figures"])
def test_determinism(tmp_path, command):
    def run(name, workers):
        out = tmp_path / name
        argv = [
            command, "--curve", "fixture:plateau_gate", "--n-gates", "200000", "--seed", "8",
            "--strategy", '{"tag": "time_shift", "t_early": -0.25, "t_late": 0.3}',
            "--workers", str(workers), "--out", str(out),
        ]
        if command == "analyze":
            argv += ["--E-prime", "0.45"]
        assert main(argv) == EXIT_OK
        return {p.name: p.read_bytes() for p in sorted(out.iterdir())}

    first = run("one", 1)
    assert first == run("two", 1)
    assert first == run("threads", 4)
