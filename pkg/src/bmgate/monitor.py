"""Self-test of single-photon sensitivity with a calibrated faint source.

A Poissonian test pulse is fired into randomly chosen gates.  The test
pulses of each detector are grouped into consecutive, non-overlapping
windows of K pulses; a window in which every pulse went undetected flags the
detector as blind.  K is the smallest window for which a sensitive detector
misses all K pulses with probability at most ``alpha``, so the false-alarm
rate per window is bounded by ``alpha`` exactly.

Test-gate positions come from a stream separate from the key simulation, and
those gates are excluded from the sifted key.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .engine import Blinding, ChannelModel, SimResult, run_simulation, stream
from .errors import AnalysisError, ConfigError, DomainError
from .temporal import TemporalResponse

MONITOR_STREAM = 1
DETECTORS = ("a", "b")
WINDOWS_PER_CHUNK = 4096


def click_probability(mu: float, eta: float) -> float:
    """Probability that a Poisson pulse of mean ``mu`` is detected with efficiency ``eta``."""
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu}")
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta}")
    return -math.expm1(-mu * eta)


@dataclass(frozen=True)
class MonitorConfig:
    mu: float = 1.0
    p_test: float = 0.01
    alpha: float = 1e-6
    eta_expected: float = 0.1

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if not 0.0 <= self.p_test < 1.0:
            raise ConfigError(f"p_test must lie in [0, 1), got {self.p_test}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 < self.eta_expected <= 1.0:
            raise ConfigError(f"eta_expected must lie in (0, 1], got {self.eta_expected}")

    @property
    def q(self) -> float:
        return click_probability(self.mu, self.eta_expected)


def required_test_pulses(cfg: MonitorConfig) -> int:
    """Smallest K with ``(1 - q)**K <= alpha``."""
    q = cfg.q
    if q <= 0.0:
        raise AnalysisError("test pulse cannot certify: its click probability is zero")
    miss = 1.0 - q
    if miss == 0.0:
        return 0 if cfg.alpha >= 1.0 else 1
    k = max(0, math.ceil(math.log(cfg.alpha) / math.log(miss)))
    # Guard the float estimate against off-by-one at exact powers.
    while miss**k > cfg.alpha:
        k += 1
    while k > 0 and miss ** (k - 1) <= cfg.alpha:
        k -= 1
    return k


@dataclass
class MonitorReport:
    verdict: str  # blind | sensitive | unknown
    flagged_detectors: list[str]
    K: int
    click_probability: float
    n_gates: int
    n_test_pulses: int
    n_windows: int
    n_flagged_windows: int
    n_false_alarms: int
    n_sensitive_windows: int
    false_alarm_rate: float | None
    first_flag_gate: int | None
    latency_gates: int | None
    expected_latency_gates: float | None
    seed: int
    key: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> MonitorReport:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})

    @property
    def key_result(self) -> SimResult | None:
        return None if self.key is None else SimResult.from_dict(self.key)


def _test_positions(rng: np.random.Generator, p_test: float, n_gates: int, chunk: int):
    """Yield sorted arrays of test-gate indices, ``chunk`` at a time."""
    last = -1
    while True:
        gaps = rng.geometric(p_test, size=chunk)
        positions = last + np.cumsum(gaps)
        last = int(positions[-1])
        if last >= n_gates:
            positions = positions[positions < n_gates]
            if len(positions):
                yield positions
            return
        yield positions


def run_monitor(
    resp: TemporalResponse,
    strategy,
    cfg: MonitorConfig,
    n_gates: int,
    seed: int,
    channel: ChannelModel | None = None,
    simulate_key: bool = True,
    workers: int = 1,
) -> MonitorReport:
    """Interleave test pulses with ``n_gates`` gates and judge detector sensitivity.

    With ``simulate_key`` the non-test gates are run through the protocol
    engine and their statistics attached as ``key``; switch it off for very
    long runs where only the monitor statistics matter.
    """
    if n_gates < 1:
        raise ConfigError(f"n_gates must be at least 1, got {n_gates}")
    q = cfg.q
    K = required_test_pulses(cfg) if cfg.p_test > 0 else 0
    rng = stream(seed, MONITOR_STREAM)
    blinding = strategy if isinstance(strategy, Blinding) else None

    n_test = n_windows = n_flagged = n_false = n_sensitive_windows = 0
    first_flag = None
    flagged = set()
    kept_positions = []
    leftover = {d: np.empty(0, dtype=bool) for d in DETECTORS}
    leftover_blind = {d: np.empty(0, dtype=bool) for d in DETECTORS}
    leftover_pos = np.empty(0, dtype=np.int64)

    if cfg.p_test > 0:
        chunk = max(K, 1) * WINDOWS_PER_CHUNK
        for positions in _test_positions(rng, cfg.p_test, n_gates, chunk):
            n_test += len(positions)
            if simulate_key:
                kept_positions.append(positions)
            u = rng.random((len(positions), len(DETECTORS)))
            if K == 0:
                # alpha = 1: every decision flags, starting with the first test pulse.
                if first_flag is None:
                    first_flag = int(positions[0])
                flagged.update(DETECTORS)
                continue
            pos = np.concatenate([leftover_pos, positions])
            usable = (len(pos) // K) * K
            for col, det in enumerate(DETECTORS):
                if blinding is not None and det in blinding.detectors:
                    blind = positions >= blinding.start_gate
                else:
                    blind = np.zeros(len(positions), dtype=bool)
                miss = np.concatenate([leftover[det], blind | (u[:, col] >= q)])
                blind = np.concatenate([leftover_blind[det], blind])
                windows = miss[:usable].reshape(-1, K).all(axis=1)
                truly_sensitive = ~blind[:usable].reshape(-1, K).any(axis=1)
                n_windows += len(windows)
                n_flagged += int(windows.sum())
                n_false += int((windows & truly_sensitive).sum())
                n_sensitive_windows += int(truly_sensitive.sum())
                hits = np.flatnonzero(windows)
                if hits.size:
                    flagged.add(det)
                    gate = int(pos[(hits[0] + 1) * K - 1])
                    first_flag = gate if first_flag is None else min(first_flag, gate)
                leftover[det] = miss[usable:]
                leftover_blind[det] = blind[usable:]
            leftover_pos = pos[usable:]

    if flagged:
        verdict = "blind"
    elif n_windows:
        verdict = "sensitive"
    else:
        verdict = "unknown"

    latency = None
    if blinding is not None and first_flag is not None:
        latency = first_flag - blinding.start_gate

    key = None
    if simulate_key:
        exclude = np.concatenate(kept_positions) if kept_positions else None
        key = run_simulation(resp, strategy, n_gates, seed, channel, exclude, workers).to_dict()

    return MonitorReport(
        verdict=verdict,
        flagged_detectors=sorted(flagged),
        K=K,
        click_probability=q,
        n_gates=n_gates,
        n_test_pulses=n_test,
        n_windows=n_windows,
        n_flagged_windows=n_flagged,
        n_false_alarms=n_false,
        n_sensitive_windows=n_sensitive_windows,
        false_alarm_rate=(n_false / n_sensitive_windows) if n_sensitive_windows else None,
        first_flag_gate=first_flag,
        latency_gates=latency,
        expected_latency_gates=(K / cfg.p_test) if cfg.p_test > 0 else None,
        seed=seed,
        key=key,
    )
