"""Gate-by-gate Monte Carlo of BB84 with bit-mapped gating.

Every gate draws Alice's bit and basis, Bob's basis, his software bit-mapping
and the optical bit-mapping applied between gates.  Inside the bit-mapped
window the optical mapping follows the software mapping; elsewhere the
branch whose optical mapping differs is rotated by the transition angle
``theta(t)`` of the response curve.  Each photon is measured by its own set
of detectors and the clicks are merged as for threshold detectors, with
double clicks resolved to a uniformly random bit.

Gates are processed in fixed-size batches.  Batch ``i`` draws from its own
Philox stream keyed by ``(seed, i)``, so results are identical for any
number of worker threads.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import ClassVar, NamedTuple

import numpy as np

from .errors import ConfigError, DomainError
from .measure import QubitState, conditional_measurements, eigh2, optimal_attack_state
from .temporal import TemporalResponse

log = logging.getLogger(__name__)

BATCH_SIZE = 1 << 16
ENGINE_STREAM = 0
BASES = ("Z", "X")
MAPS = ("a0b1", "a1b0")  # software / optical mapping: which detector carries bit 0
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
KET0 = np.array([1.0, 0.0], dtype=complex)
KET1 = np.array([0.0, 1.0], dtype=complex)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one independent sub-stream of ``seed``."""
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


class Photons(NamedTuple):
    """One photon slot for every gate of a batch.

    ``index`` is the arrival sample on the response grid, ``kets`` the pure
    state in Alice's encoding basis.  ``through_channel`` photons are subject
    to the channel transmittance; states injected by Eve at Bob's entrance
    are not.
    """

    index: np.ndarray
    kets: np.ndarray
    through_channel: bool


def _alice_kets(alice_bit: np.ndarray) -> np.ndarray:
    kets = np.zeros((len(alice_bit), 2), dtype=complex)
    kets[np.arange(len(alice_bit)), alice_bit] = 1.0
    return kets


class _Strategy:
    tag: ClassVar[str]

    def arrival_times(self, resp: TemporalResponse) -> tuple[float, ...]:
        raise NotImplementedError

    def validate(self, resp: TemporalResponse) -> None:
        lo, hi = resp.t_grid[0], resp.t_grid[-1]
        for t in self.arrival_times(resp):
            if not lo <= t <= hi:
                raise ConfigError(
                    f"{self.tag}: arrival time {t} ns is outside the curve support [{lo}, {hi}]"
                )

    def emit(self, resp, alice_bit, alice_basis, rng) -> list[Photons]:
        raise NotImplementedError

    def blind(self, gates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        none = np.zeros(len(gates), dtype=bool)
        return none, none

    def to_dict(self) -> dict:
        out = {"tag": self.tag}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            out[name] = list(value) if isinstance(value, tuple) else value
        return out


@dataclass(frozen=True)
class Honest(_Strategy):
    """No eavesdropper: Alice's photon arrives at ``time`` (default: window centre)."""

    time: float | None = None
    tag: ClassVar[str] = "honest"

    def arrival_times(self, resp):
        return (resp.window_center if self.time is None else self.time,)

    def emit(self, resp, alice_bit, alice_basis, rng):
        i = resp.index_of(self.arrival_times(resp)[0])
        return [Photons(np.full(len(alice_bit), i), _alice_kets(alice_bit), True)]


@dataclass(frozen=True)
class TimeShift(_Strategy):
    """Eve delays or advances Alice's photon to exploit efficiency mismatch.

    ``selection`` is ``"random"`` (uniform choice per gate) or ``"alice_bit"``
    (early for bit 0, late for bit 1, the faked-state variant).
    """

    t_early: float
    t_late: float
    selection: str = "random"
    tag: ClassVar[str] = "time_shift"

    def __post_init__(self):
        if self.selection not in ("random", "alice_bit"):
            raise ConfigError(f"unknown time-shift selection rule {self.selection!r}")

    def arrival_times(self, resp):
        return (self.t_early, self.t_late)

    def emit(self, resp, alice_bit, alice_basis, rng):
        early, late = resp.index_of(self.t_early), resp.index_of(self.t_late)
        if self.selection == "random":
            pick_late = rng.integers(0, 2, len(alice_bit)).astype(bool)
        else:
            pick_late = alice_bit == 1
        index = np.where(pick_late, late, early)
        return [Photons(index, _alice_kets(alice_bit), True)]


@dataclass(frozen=True)
class AfterGate(_Strategy):
    """Eve resends Alice's state at ``t_outside``, typically past the gate."""

    t_outside: float
    tag: ClassVar[str] = "after_gate"

    def arrival_times(self, resp):
        return (self.t_outside,)

    def emit(self, resp, alice_bit, alice_basis, rng):
        i = resp.index_of(self.t_outside)
        return [Photons(np.full(len(alice_bit), i), _alice_kets(alice_bit), False)]


def optimal_kets(resp: TemporalResponse, index: int) -> np.ndarray:
    """Optimal attack kets for Alice's bit 0 and bit 1 at one sample, shape (2, 2)."""
    setting = resp.setting_at(index)
    kets = np.empty((2, 2), dtype=complex)
    for bit in (0, 1):
        rho = optimal_attack_state(setting, bit).state.rho
        kets[bit] = eigh2(rho)[1][:, 1]
    return kets


@dataclass(frozen=True)
class OptimalState(_Strategy):
    """Eve sends, per photon, the state with the lowest error rate at its mode.

    Eve knows Alice's bit and basis (faked-state model) but not Bob's draws.
    Several times give a multiphoton state with one photon per time.
    """

    times: tuple[float, ...]
    tag: ClassVar[str] = "optimal_state"

    def __post_init__(self):
        times = (self.times,) if np.ndim(self.times) == 0 else tuple(self.times)
        if not times:
            raise ConfigError("optimal_state needs at least one arrival time")
        object.__setattr__(self, "times", tuple(float(t) for t in times))

    def arrival_times(self, resp):
        return self.times

    def emit(self, resp, alice_bit, alice_basis, rng):
        out = []
        for t in self.times:
            i = resp.index_of(t)
            kets = optimal_kets(resp, i)[alice_bit]
            out.append(Photons(np.full(len(alice_bit), i), kets, False))
        return out


@dataclass(frozen=True)
class Blinding(_Strategy):
    """Detectors in ``detectors`` lose single-photon sensitivity from ``start_gate`` on.

    Alice's photon still arrives at the window centre; blind detectors give
    neither photon clicks nor dark counts.
    """

    detectors: tuple[str, ...] = ("a", "b")
    start_gate: int = 0
    tag: ClassVar[str] = "blinding"

    def __post_init__(self):
        dets = (self.detectors,) if isinstance(self.detectors, str) else tuple(self.detectors)
        if not dets or any(d not in ("a", "b") for d in dets):
            raise ConfigError(f"blinding detectors must be drawn from ('a', 'b'), got {dets}")
        if self.start_gate < 0:
            raise ConfigError("blinding start_gate must be non-negative")
        object.__setattr__(self, "detectors", dets)

    def arrival_times(self, resp):
        return (resp.window_center,)

    def emit(self, resp, alice_bit, alice_basis, rng):
        i = resp.index_of(resp.window_center)
        return [Photons(np.full(len(alice_bit), i), _alice_kets(alice_bit), True)]

    def blind(self, gates):
        active = gates >= self.start_gate
        none = np.zeros(len(gates), dtype=bool)
        return (
            active if "a" in self.detectors else none,
            active if "b" in self.detectors else none,
        )

    def is_blind(self, detector: str, gate: int) -> bool:
        return detector in self.detectors and gate >= self.start_gate


AttackStrategy = Honest | TimeShift | AfterGate | OptimalState | Blinding

STRATEGIES = {cls.tag: cls for cls in (Honest, TimeShift, AfterGate, OptimalState, Blinding)}


def strategy_from_dict(spec: dict) -> AttackStrategy:
    spec = dict(spec)
    tag = spec.pop("tag", None)
    if tag not in STRATEGIES:
        raise ConfigError(f"unknown strategy tag {tag!r}; choose from {sorted(STRATEGIES)}")
    try:
        return STRATEGIES[tag](**spec)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for strategy {tag!r}: {exc}") from exc


def branch_probabilities(eta_a, eta_b, theta, software, optical, kets):
    """Per-branch bit-0 and bit-1 click probabilities, vectorized over gates.

    ``kets`` are in Bob's measurement basis.  With ``software == optical`` the
    bit-0 detector projects on ``|0>``; otherwise the optical mapping is
    rotated by ``theta`` and it projects on ``cos(theta)|0> + sin(theta)|1>``.
    Returns ``(p_bit0, p_bit1)``; the two outcomes are mutually exclusive for
    a single photon.
    """
    eta_a = np.asarray(eta_a, dtype=float)
    eta_b = np.asarray(eta_b, dtype=float)
    theta = np.asarray(theta, dtype=float)
    kets = np.asarray(kets, dtype=complex)
    software = np.asarray(software)
    matched = software == np.asarray(optical)
    c = np.where(matched, 1.0, np.cos(theta))
    s = np.where(matched, 0.0, np.sin(theta))
    amp0 = c * kets[..., 0] + s * kets[..., 1]
    amp1 = s * kets[..., 0] - c * kets[..., 1]
    eff0 = np.where(software == 0, eta_a, eta_b)
    eff1 = np.where(software == 0, eta_b, eta_a)
    return eff0 * np.abs(amp0) ** 2, eff1 * np.abs(amp1) ** 2


class ClickProbabilities(NamedTuple):
    p_click_a: float
    p_click_b: float
    exclusive: bool  # a single photon fires at most one detector


def _map_code(mapping) -> int:
    if mapping in (0, 1):
        return int(mapping)
    try:
        return MAPS.index(mapping)
    except ValueError:
        raise DomainError(f"mapping must be one of {MAPS} or 0/1, got {mapping!r}") from None


def conditional_click_probabilities(
    resp: TemporalResponse, t: float, software_map, optical_map, state: QubitState
) -> ClickProbabilities:
    """Detector click probabilities for one drawn measurement branch.

    ``state`` is expressed in Bob's measurement basis and ``optical_map`` is
    the mapping drawn between gates; inside the bit-mapped window
    ``theta(t) = 0`` makes it irrelevant.
    """
    i = resp.index_of(t)
    sw, opt = _map_code(software_map), _map_code(optical_map)
    branch = {(0, 0): 0, (1, 1): 1, (0, 1): 2, (1, 0): 3}[(sw, opt)]
    povm = conditional_measurements(resp.setting_at(i))[branch]
    p_bit0, p_bit1, _ = povm.probabilities(state)
    if sw == 0:
        return ClickProbabilities(p_bit0, p_bit1, True)
    return ClickProbabilities(p_bit1, p_bit0, True)


@dataclass
class SimResult:
    n_gates: int
    n_sifted: int
    n_detected: int
    n_errors: int
    n_double_clicks: int
    n_test_gates: int = 0
    t_grid: tuple[float, ...] = ()
    histogram: tuple[int, ...] = ()

    @property
    def empirical_qber(self) -> float:
        return self.n_errors / self.n_sifted if self.n_sifted else math.nan

    @property
    def qber_stderr(self) -> float:
        if not self.n_sifted:
            return math.nan
        q = self.empirical_qber
        return math.sqrt(q * (1.0 - q) / self.n_sifted)

    def to_dict(self) -> dict:
        out = {
            "n_gates": self.n_gates,
            "n_sifted": self.n_sifted,
            "n_detected": self.n_detected,
            "n_errors": self.n_errors,
            "n_double_clicks": self.n_double_clicks,
            "n_test_gates": self.n_test_gates,
            "empirical_qber": None if not self.n_sifted else self.empirical_qber,
            "qber_stderr": None if not self.n_sifted else self.qber_stderr,
            "t_grid": list(self.t_grid),
            "histogram": list(self.histogram),
        }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> SimResult:
        return cls(
            n_gates=int(d["n_gates"]),
            n_sifted=int(d["n_sifted"]),
            n_detected=int(d["n_detected"]),
            n_errors=int(d["n_errors"]),
            n_double_clicks=int(d["n_double_clicks"]),
            n_test_gates=int(d.get("n_test_gates", 0)),
            t_grid=tuple(float(x) for x in d.get("t_grid", ())),
            histogram=tuple(int(x) for x in d.get("histogram", ())),
        )

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t_ns", "detections"])
        for t, n in zip(self.t_grid, self.histogram):
            writer.writerow([repr(float(t)), int(n)])
        return buf.getvalue()


@dataclass(frozen=True)
class ChannelModel:
    dark_count_prob: float = 0.0  # per detector per gate
    transmittance: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.dark_count_prob <= 1.0:
            raise ConfigError(f"dark_count_prob must lie in [0, 1], got {self.dark_count_prob}")
        if not 0.0 <= self.transmittance <= 1.0:
            raise ConfigError(f"transmittance must lie in [0, 1], got {self.transmittance}")


@dataclass
class GateTrialRecord:
    gate: int
    alice_bit: int
    alice_basis: str
    bob_basis: str
    software_map: str
    optical_map: str
    eve_action: dict
    clicks_a: tuple[bool, ...]
    clicks_b: tuple[bool, ...]
    dark_a: bool
    dark_b: bool
    merged_outcome: str  # bit0 | bit1 | vacuum | double | test
    resolved_bit: int | None = None
    double_click: bool = False


@dataclass
class _Batch:
    n_active: int
    n_sifted: int
    n_detected: int
    n_errors: int
    n_double: int
    histogram: np.ndarray
    arrays: dict | None = field(default=None, repr=False)


def _simulate_batch(resp, strategy, channel, seed, batch, start, n, exclude, keep=False):
    rng = stream(seed, ENGINE_STREAM, batch)
    alice_bit = rng.integers(0, 2, n, dtype=np.int64)
    alice_basis = rng.integers(0, 2, n, dtype=np.int64)
    bob_basis = rng.integers(0, 2, n, dtype=np.int64)
    software = rng.integers(0, 2, n, dtype=np.int64)
    optical = rng.integers(0, 2, n, dtype=np.int64)
    photons = strategy.emit(resp, alice_bit, alice_basis, rng)

    gates = np.arange(start, start + n)
    active = np.ones(n, dtype=bool)
    if exclude is not None and len(exclude):
        lo, hi = np.searchsorted(exclude, [start, start + n])
        active[exclude[lo:hi] - start] = False
    blind_a, blind_b = strategy.blind(gates)
    mismatch = alice_basis != bob_basis

    hit = np.zeros((2, n), dtype=bool)
    histogram = np.zeros(len(resp), dtype=np.int64)
    outcomes = []
    for ph in photons:
        kets = ph.kets.copy()
        kets[mismatch] = kets[mismatch] @ HADAMARD.T
        eta_a = np.where(blind_a, 0.0, resp.eta_a[ph.index])
        eta_b = np.where(blind_b, 0.0, resp.eta_b[ph.index])
        p0, p1 = branch_probabilities(eta_a, eta_b, resp.theta[ph.index], software, optical, kets)
        if ph.through_channel:
            p0 = p0 * channel.transmittance
            p1 = p1 * channel.transmittance
        u = rng.random(n)
        out = np.where(u < p0, 0, np.where(u < p0 + p1, 1, -1))
        out[~active] = -1
        hit[0] |= out == 0
        hit[1] |= out == 1
        histogram += np.bincount(ph.index[out >= 0], minlength=len(resp))
        outcomes.append(out)

    dark_a = (rng.random(n) < channel.dark_count_prob) & ~blind_a & active
    dark_b = (rng.random(n) < channel.dark_count_prob) & ~blind_b & active
    # Detector a carries bit `software`, detector b the other bit.
    hit[0] |= (dark_a & (software == 0)) | (dark_b & (software == 1))
    hit[1] |= (dark_a & (software == 1)) | (dark_b & (software == 0))

    resolve = rng.integers(0, 2, n, dtype=np.int64)
    double = hit[0] & hit[1]
    merged = np.where(double, resolve, np.where(hit[0], 0, np.where(hit[1], 1, -1)))
    detected = merged >= 0
    sifted = detected & ~mismatch
    errors = sifted & (merged != alice_bit)

    arrays = None
    if keep:
        arrays = dict(
            alice_bit=alice_bit, alice_basis=alice_basis, bob_basis=bob_basis,
            software=software, optical=optical, photons=photons, outcomes=outcomes,
            dark_a=dark_a, dark_b=dark_b, merged=merged, double=double, active=active,
        )
    return _Batch(
        n_active=int(active.sum()),
        n_sifted=int(sifted.sum()),
        n_detected=int(detected.sum()),
        n_errors=int(errors.sum()),
        n_double=int(double.sum()),
        histogram=histogram,
        arrays=arrays,
    )


def _batches(n_gates: int):
    for b, start in enumerate(range(0, n_gates, BATCH_SIZE)):
        yield b, start, min(BATCH_SIZE, n_gates - start)


def run_simulation(
    resp: TemporalResponse,
    strategy: AttackStrategy,
    n_gates: int,
    seed: int,
    channel: ChannelModel | None = None,
    exclude=None,
    workers: int = 1,
) -> SimResult:
    """Simulate ``n_gates`` gates and return the sifted statistics.

    ``exclude`` lists gate indices reserved for other uses (detector test
    pulses); they produce no outcome and are reported as ``n_test_gates``.
    """
    if n_gates < 1:
        raise ConfigError(f"n_gates must be at least 1, got {n_gates}")
    if workers < 1:
        raise ConfigError(f"workers must be at least 1, got {workers}")
    channel = channel or ChannelModel()
    strategy.validate(resp)
    if exclude is not None:
        exclude = np.unique(np.asarray(exclude, dtype=np.int64))
        exclude = exclude[(exclude >= 0) & (exclude < n_gates)]

    def job(args):
        b, start, n = args
        return _simulate_batch(resp, strategy, channel, seed, b, start, n, exclude)

    jobs = list(_batches(n_gates))
    if workers == 1 or len(jobs) == 1:
        parts = [job(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, jobs))

    histogram = sum((p.histogram for p in parts), np.zeros(len(resp), dtype=np.int64))
    n_active = sum(p.n_active for p in parts)
    result = SimResult(
        n_gates=n_active,
        n_sifted=sum(p.n_sifted for p in parts),
        n_detected=sum(p.n_detected for p in parts),
        n_errors=sum(p.n_errors for p in parts),
        n_double_clicks=sum(p.n_double for p in parts),
        n_test_gates=n_gates - n_active,
        t_grid=tuple(float(t) for t in resp.t_grid),
        histogram=tuple(int(x) for x in histogram),
    )
    log.info(
        "simulated %d gates (%s): qber=%s sifted=%d",
        n_gates, strategy.tag, result.empirical_qber, result.n_sifted,
    )
    return result


def trace_gates(
    resp: TemporalResponse,
    strategy: AttackStrategy,
    n_gates: int,
    seed: int,
    channel: ChannelModel | None = None,
    exclude=None,
) -> list[GateTrialRecord]:
    """Per-gate records for the first ``n_gates`` gates of the same random stream.

    The records come from the same batches that :func:`run_simulation` counts,
    so aggregating them reproduces its totals exactly.
    """
    if n_gates < 1:
        raise ConfigError(f"n_gates must be at least 1, got {n_gates}")
    channel = channel or ChannelModel()
    strategy.validate(resp)
    if exclude is not None:
        exclude = np.unique(np.asarray(exclude, dtype=np.int64))
    records = []
    for b, start, n in _batches(n_gates):
        arr = _simulate_batch(resp, strategy, channel, seed, b, start, n, exclude, keep=True).arrays
        for j in range(n):
            sw = int(arr["software"][j])
            outs = [int(o[j]) for o in arr["outcomes"]]
            # A bit-0 click fires detector a when software maps a -> 0.
            clicks_a = tuple(o >= 0 and (o == 0) == (sw == 0) for o in outs)
            clicks_b = tuple(o >= 0 and (o == 0) == (sw == 1) for o in outs)
            merged = int(arr["merged"][j])
            double = bool(arr["double"][j])
            if not arr["active"][j]:
                label = "test"
            elif double:
                label = "double"
            elif merged < 0:
                label = "vacuum"
            else:
                label = f"bit{merged}"
            eve = {
                "tag": strategy.tag,
                "times": [float(resp.t_grid[ph.index[j]]) for ph in arr["photons"]],
                "states": [
                    [[float(a.real), float(a.imag)] for a in ph.kets[j]] for ph in arr["photons"]
                ],
                "n_photons": len(arr["photons"]),
            }
            records.append(
                GateTrialRecord(
                    gate=start + j,
                    alice_bit=int(arr["alice_bit"][j]),
                    alice_basis=BASES[arr["alice_basis"][j]],
                    bob_basis=BASES[arr["bob_basis"][j]],
                    software_map=MAPS[sw],
                    optical_map=MAPS[arr["optical"][j]],
                    eve_action=eve,
                    clicks_a=clicks_a,
                    clicks_b=clicks_b,
                    dark_a=bool(arr["dark_a"][j]),
                    dark_b=bool(arr["dark_b"][j]),
                    merged_outcome=label,
                    resolved_bit=merged if merged >= 0 else None,
                    double_click=double,
                )
            )
    return records


def merge_clicks(clicks, rng: np.random.Generator) -> tuple[str, int | None]:
    """Merge per-photon logical-bit clicks into one threshold-detector outcome.

    ``clicks`` holds one ``(bit0_clicked, bit1_clicked)`` pair per photon slot.
    Returns ``(label, bit)`` with label ``bit0``, ``bit1``, ``vacuum`` or
    ``double``; a double click is resolved to a uniformly random bit.
    """
    clicks = list(clicks)
    if not clicks:
        raise DomainError("merge_clicks needs at least one photon slot")
    any0 = any(bool(c[0]) for c in clicks)
    any1 = any(bool(c[1]) for c in clicks)
    if any0 and any1:
        return "double", int(rng.integers(0, 2))
    if any0:
        return "bit0", 0
    if any1:
        return "bit1", 1
    return "vacuum", None
