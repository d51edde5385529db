import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmgate import fixtures
from bmgate.engine import (
    AfterGate,
    Blinding,
    ChannelModel,
    Honest,
    OptimalState,
    SimResult,
    TimeShift,
    branch_probabilities,
    conditional_click_probabilities,
    merge_clicks,
    run_simulation,
    strategy_from_dict,
    trace_gates,
)
from bmgate.errors import ConfigError, DomainError
from bmgate.measure import QubitState, averaged_povm, qber_min
from bmgate.temporal import TemporalResponse


@pytest.fixture(scope="module")
def plateau():
    return fixtures.plateau_gate()


def time_at_theta(resp, theta):
    idx = np.flatnonzero(np.isclose(resp.theta, theta, atol=1e-12))
    assert len(idx), f"fixture has no sample at theta={theta}"
    # Nearest to the window on the late side, where the detectors still respond.
    late = idx[resp.t_grid[idx] >= resp.window_center]
    return float(resp.t_grid[late[0]])


def single_sample(eta_a, eta_b, theta):
    """Two-sample curve whose second sample carries the setting under test."""
    return TemporalResponse(
        np.array([0.0, 1.0]), np.array([eta_a, eta_a]), np.array([eta_b, eta_b]),
        np.array([0.0, theta]), (0.0, 0.0),
    )


def within(result, expected, n_sigma=5.0):
    sigma = math.sqrt(expected * (1 - expected) / result.n_sifted) if 0 < expected < 1 else 0.0
    return abs(result.empirical_qber - expected) <= n_sigma * sigma + 1e-12


class TestConditionalClicks:
    def test_aligned(self):
        resp = single_sample(0.5, 0.3, 0.0)
        p = conditional_click_probabilities(resp, 0.0, "a0b1", "a0b1", QubitState.basis(0))
        assert p.p_click_a == pytest.approx(0.5, abs=1e-15)
        assert p.p_click_b == pytest.approx(0.0, abs=1e-15)
        assert p.exclusive

    def test_full_swap_registers_bit_one(self):
        # Uncorrelated mappings (theta = pi/2) route bit 0 into the bit-1 detector.
        resp = single_sample(0.5, 0.5, math.pi / 2)
        p = conditional_click_probabilities(resp, 1.0, "a0b1", "a1b0", QubitState.basis(0))
        assert p.p_click_a == pytest.approx(0.0, abs=1e-15)
        assert p.p_click_b == pytest.approx(0.5, abs=1e-15)

    def test_swap_inert_inside_window(self):
        resp = single_sample(0.5, 0.5, math.pi / 2)
        p = conditional_click_probabilities(resp, 0.0, "a0b1", "a1b0", QubitState.basis(0))
        assert p.p_click_a == pytest.approx(0.5, abs=1e-15)
        assert p.p_click_b == pytest.approx(0.0, abs=1e-15)

    def test_branch_average_matches_povm(self):
        resp = single_sample(0.2, 0.1, math.pi / 3)
        state = QubitState.basis(0)
        bit0 = bit1 = 0.0
        for sw in ("a0b1", "a1b0"):
            for opt in ("a0b1", "a1b0"):
                p = conditional_click_probabilities(resp, 1.0, sw, opt, state)
                zero, one = (p.p_click_a, p.p_click_b) if sw == "a0b1" else (p.p_click_b, p.p_click_a)
                bit0 += zero / 4
                bit1 += one / 4
        povm = averaged_povm(resp.setting_at(1))
        assert bit0 == pytest.approx(state.expectation(povm.e0), abs=1e-12)
        assert bit1 == pytest.approx(state.expectation(povm.e1), abs=1e-12)

    def test_bad_mapping(self):
        with pytest.raises(DomainError):
            conditional_click_probabilities(single_sample(0.1, 0.1, 0.0), 0.0, "ab", 0, QubitState.basis(0))

    @settings(max_examples=200)
    @given(
        st.floats(0, 1), st.floats(0, 1), st.floats(0, math.pi / 2),
        st.integers(0, 1), st.integers(0, 1),
        st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
    )
    def test_vectorized_matches_scalar(self, ea, eb, th, sw, opt, x, y, z):
        norm = math.sqrt(x * x + y * y + z * z) or 1.0
        v = np.array([1.0 + 0j, 0.0])
        if norm > 1e-3:
            # Pure state from a Bloch direction.
            x, y, z = x / norm, y / norm, z / norm
            a = math.acos(max(-1.0, min(1.0, z)))
            v = np.array([math.cos(a / 2), np.exp(1j * math.atan2(y, x)) * math.sin(a / 2)])
        resp = single_sample(ea, eb, th)
        p0, p1 = branch_probabilities(ea, eb, th, sw, opt, v)
        ref = conditional_click_probabilities(resp, 1.0, sw, opt, QubitState.pure(v))
        zero, one = (ref.p_click_a, ref.p_click_b) if sw == 0 else (ref.p_click_b, ref.p_click_a)
        assert float(p0) == pytest.approx(zero, abs=1e-12)
        assert float(p1) == pytest.approx(one, abs=1e-12)


class TestMergeClicks:
    def test_single(self):
        rng = np.random.default_rng(0)
        assert merge_clicks([(True, False), (False, False)], rng) == ("bit0", 0)
        assert merge_clicks([(False, False)], rng) == ("vacuum", None)
        assert merge_clicks([(False, True)], rng) == ("bit1", 1)

    def test_three_photons_double(self):
        rng = np.random.default_rng(0)
        label, bit = merge_clicks([(True, False), (True, False), (False, True)], rng)
        assert label == "double" and bit in (0, 1)

    def test_double_resolves_uniformly(self):
        rng = np.random.default_rng(12345)
        n = 100_000
        ones = sum(merge_clicks([(True, False), (False, True)], rng)[1] for _ in range(n))
        assert abs(ones / n - 0.5) <= 5 * math.sqrt(0.25 / n)

    def test_empty(self):
        with pytest.raises(DomainError):
            merge_clicks([], np.random.default_rng(0))


class TestRunSimulation:
    def test_honest_ideal(self):
        resp = fixtures.ideal_gate()
        r = run_simulation(resp, Honest(), 100_000, seed=3)
        assert r.n_errors == 0 and r.empirical_qber == 0.0
        frac = r.n_sifted / r.n_gates
        assert abs(frac - 0.5) <= 5 * math.sqrt(0.25 / r.n_gates)

    def test_determinism_and_workers(self, plateau):
        s = TimeShift(-0.25, 0.25)
        a = run_simulation(plateau, s, 200_000, seed=99)
        b = run_simulation(plateau, s, 200_000, seed=99)
        c = run_simulation(plateau, s, 200_000, seed=99, workers=4)
        assert a == b == c
        d = run_simulation(plateau, s, 200_000, seed=100)
        assert d != a

    def test_trace_matches_counts(self, plateau):
        channel = ChannelModel(dark_count_prob=0.01)
        strategy = OptimalState((time_at_theta(plateau, math.pi / 3), plateau.window_center))
        n = 70_000  # spans two batches
        r = run_simulation(plateau, strategy, n, seed=8, channel=channel)
        recs = trace_gates(plateau, strategy, n, seed=8, channel=channel)
        assert len(recs) == n
        sifted = [x for x in recs if x.resolved_bit is not None and x.alice_basis == x.bob_basis]
        assert len(sifted) == r.n_sifted
        assert sum(x.resolved_bit != x.alice_bit for x in sifted) == r.n_errors
        assert sum(x.double_click for x in recs) == r.n_double_clicks
        assert sum(x.resolved_bit is not None for x in recs) == r.n_detected
        assert all(x.eve_action["n_photons"] == 2 for x in recs[:10])

    def test_trace_merge_consistency(self, plateau):
        recs = trace_gates(plateau, OptimalState((time_at_theta(plateau, math.pi / 3), 0.0)), 2000, seed=4)
        for x in recs:
            bit0 = [a if x.software_map == "a0b1" else b for a, b in zip(x.clicks_a, x.clicks_b)]
            bit1 = [b if x.software_map == "a0b1" else a for a, b in zip(x.clicks_a, x.clicks_b)]
            if any(bit0) and any(bit1):
                assert x.merged_outcome == "double"
            elif any(bit0):
                assert x.merged_outcome == "bit0"
            elif any(bit1):
                assert x.merged_outcome == "bit1"
            else:
                assert x.merged_outcome == "vacuum"

    def test_detection_rate_state_independent(self, plateau):
        # Detection probability per photon equals p_det whatever the state.
        t = time_at_theta(plateau, math.pi / 3)
        i = plateau.index_of(t)
        p_det = 0.5 * (plateau.eta_a[i] + plateau.eta_b[i])
        n = 400_000
        for strategy in (OptimalState((t,)), AfterGate(t)):
            r = run_simulation(plateau, strategy, n, seed=21)
            rate = r.n_detected / n
            assert abs(rate - p_det) <= 5 * math.sqrt(p_det * (1 - p_det) / n)

    def test_exclude_gates(self, plateau):
        exclude = np.arange(0, 1000, 7)
        r = run_simulation(plateau, Honest(), 1000, seed=1, exclude=exclude)
        assert r.n_test_gates == len(exclude)
        assert r.n_gates == 1000 - len(exclude)
        recs = trace_gates(plateau, Honest(), 1000, seed=1, exclude=exclude)
        assert [x.gate for x in recs if x.merged_outcome == "test"] == exclude.tolist()

    def test_blinding_silences(self, plateau):
        r = run_simulation(plateau, Blinding(), 10_000, seed=1, channel=ChannelModel(0.1))
        assert r.n_detected == 0
        r = run_simulation(plateau, Blinding(start_gate=5000), 10_000, seed=1)
        assert r.n_detected > 0

    def test_transmittance_and_dark_counts(self):
        resp = fixtures.ideal_gate()
        r = run_simulation(resp, Honest(), 100_000, seed=5, channel=ChannelModel(0.0, 0.3))
        assert abs(r.n_detected / 1e5 - 0.3) <= 5 * math.sqrt(0.21 / 1e5)
        r = run_simulation(resp, Honest(), 100_000, seed=5, channel=ChannelModel(0.05, 0.0))
        # Dark counts alone give random bits.
        assert within(r, 0.5)

    def test_arrival_outside_support(self, plateau):
        for s in (Honest(time=5.0), AfterGate(-3.0), OptimalState((0.0, 9.0)), TimeShift(0.0, 2.0)):
            with pytest.raises(ConfigError):
                run_simulation(plateau, s, 10, seed=0)

    def test_bad_arguments(self, plateau):
        with pytest.raises(ConfigError):
            run_simulation(plateau, Honest(), 0, seed=0)
        with pytest.raises(ConfigError):
            run_simulation(plateau, Honest(), 10, seed=0, workers=0)
        with pytest.raises(ConfigError):
            ChannelModel(dark_count_prob=1.5)

    def test_result_json_round_trip(self, plateau):
        r = run_simulation(plateau, Honest(), 5000, seed=2)
        again = SimResult.from_dict(json.loads(json.dumps(r.to_dict())))
        assert again == r
        lines = r.histogram_csv().splitlines()
        assert lines[0] == "t_ns,detections"
        assert sum(int(x.split(",")[1]) for x in lines[1:]) <= r.n_detected + r.n_double_clicks


class TestStrategies:
    @pytest.mark.parametrize(
        "spec",
        [
            {"tag": "honest"},
            {"tag": "time_shift", "t_early": -0.3, "t_late": 0.3, "selection": "alice_bit"},
            {"tag": "after_gate", "t_outside": 0.45},
            {"tag": "optimal_state", "times": [0.0, 0.3]},
            {"tag": "blinding", "detectors": ["a"], "start_gate": 10},
        ],
    )
    def test_round_trip(self, spec):
        s = strategy_from_dict(spec)
        again = strategy_from_dict(json.loads(json.dumps(s.to_dict())))
        assert again == s

    @pytest.mark.parametrize(
        "spec",
        [
            {"tag": "nope"},
            {},
            {"tag": "time_shift", "t_early": 0.0},
            {"tag": "time_shift", "t_early": 0.0, "t_late": 1.0, "selection": "x"},
            {"tag": "blinding", "detectors": ["c"]},
            {"tag": "optimal_state", "times": []},
        ],
    )
    def test_bad_specs(self, spec):
        with pytest.raises(ConfigError):
            strategy_from_dict(spec)


def floor_for(resp, strategy):
    """Lowest QBER_min across the modes a strategy can put photons in."""
    return min(float(qber_min(resp.theta[resp.index_of(t)])) for t in strategy.arrival_times(resp))


class TestQberFloor:
    @pytest.mark.slow
    @pytest.mark.parametrize("theta", [math.pi / 6, math.pi / 3, math.pi / 2])
    def test_optimal_state_hits_floor(self, plateau, theta):
        t = time_at_theta(plateau, theta)
        r = run_simulation(plateau, OptimalState((t,)), 1_000_000, seed=11)
        assert within(r, (1 - math.cos(theta)) / 2)

    def test_after_gate_exposed(self, plateau):
        t = time_at_theta(plateau, math.pi / 2)
        r = run_simulation(plateau, AfterGate(t), 300_000, seed=6)
        assert within(r, 0.5)
        unpatched = fixtures.by_name("plateau_gate_unpatched")
        r0 = run_simulation(unpatched, AfterGate(t), 300_000, seed=6)
        assert r0.n_errors == 0

    @pytest.mark.parametrize(
        "strategy",
        [
            Honest(),
            Honest(time=0.3),
            TimeShift(-0.3, 0.3),
            TimeShift(-0.3, 0.3, "alice_bit"),
            AfterGate(0.45),
            OptimalState((0.0, 0.3)),
        ],
        ids=lambda s: s.tag,
    )
    def test_nothing_beats_floor(self, plateau, strategy):
        r = run_simulation(plateau, strategy, 200_000, seed=17)
        floor = floor_for(plateau, strategy)
        assert r.empirical_qber >= floor - 5 * max(r.qber_stderr, math.sqrt(floor * (1 - floor) / r.n_sifted))
