"""Single-photon measurement statistics for a receiver with bit-mapped gating.

At a given temporal mode Bob's receiver is described by the two detector
efficiencies and the basis-selector transition angle ``theta``.  Depending on
the software and optical bit-mapping drawn for the gate, Bob performs one of
four three-outcome measurements (bit 0, bit 1, vacuum).  Averaging them with
equal weights gives the POVM that governs the statistics seen by an
eavesdropper who does not know Bob's random choices.

All operators are 2x2 complex matrices in Bob's measurement basis, with
``|0>`` and ``|1>`` the two bit-valued states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError

ATOL = 1e-12
IDENTITY = np.eye(2, dtype=complex)


def ket_theta(theta: float) -> np.ndarray:
    """Return ``cos(theta)|0> + sin(theta)|1>``."""
    return np.array([math.cos(theta), math.sin(theta)], dtype=complex)


def ket_theta_perp(theta: float) -> np.ndarray:
    """Return ``sin(theta)|0> - cos(theta)|1>``."""
    return np.array([math.sin(theta), -math.cos(theta)], dtype=complex)


def projector(ket: np.ndarray) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


def _hermitian_part(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    return 0.5 * (m + m.conj().T)


def eigh2(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigen-decomposition of a 2x2 Hermitian matrix.

    Returns ``(values, vectors)`` with values ascending and the eigenvectors
    as the columns of ``vectors``, matching :func:`numpy.linalg.eigh`.
    The input is symmetrized first, so round-off asymmetry below ~1e-12 is
    harmless.
    """
    h = _hermitian_part(m)
    a = h[0, 0].real
    d = h[1, 1].real
    b = h[0, 1]
    mean = 0.5 * (a + d)
    radius = math.hypot(0.5 * (a - d), abs(b))
    values = np.array([mean - radius, mean + radius])

    # Bloch form: h = mean*I + radius*(cos(2p) Z + sin(2p) (cos(beta) X - sin(beta) Y)).
    half = 0.5 * math.atan2(abs(b), 0.5 * (a - d))
    phase = np.exp(-1j * np.angle(b)) if abs(b) > 0 else 1.0
    c, s = math.cos(half), math.sin(half)
    vectors = np.array([[s, c], [-phase * c, phase * s]], dtype=complex)
    return values, vectors


@dataclass(frozen=True, eq=False)
class QubitState:
    """Density matrix of a single photon in one temporal mode."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (2, 2):
            raise DomainError(f"density matrix must be 2x2, got shape {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > ATOL:
            raise DomainError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > ATOL:
            raise DomainError(f"density matrix trace is {np.trace(rho).real}, expected 1")
        if eigh2(rho)[0][0] < -ATOL:
            raise DomainError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def pure(cls, ket) -> QubitState:
        ket = np.asarray(ket, dtype=complex)
        norm = np.linalg.norm(ket)
        if norm == 0:
            raise DomainError("zero vector is not a state")
        return cls(projector(ket / norm))

    @classmethod
    def basis(cls, bit: int) -> QubitState:
        if bit not in (0, 1):
            raise DomainError(f"bit must be 0 or 1, got {bit!r}")
        return cls.pure(IDENTITY[bit])

    def probability(self, ket: np.ndarray) -> float:
        """Born-rule probability of projecting onto ``ket``."""
        ket = np.asarray(ket, dtype=complex)
        return float(np.real(ket.conj() @ self.rho @ ket))

    def expectation(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(self.rho @ op)))


@dataclass(frozen=True)
class MeasurementSetting:
    eta_a: float
    eta_b: float
    theta: float

    def __post_init__(self):
        for name in ("eta_a", "eta_b"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value}")
        if not 0.0 <= self.theta <= math.pi / 2:
            raise DomainError(f"theta must lie in [0, pi/2], got {self.theta}")

    @property
    def p_det(self) -> float:
        return 0.5 * (self.eta_a + self.eta_b)


@dataclass(frozen=True, eq=False)
class Povm:
    """Three-outcome POVM: bit 0, bit 1 and vacuum."""

    e0: np.ndarray
    e1: np.ndarray
    ev: np.ndarray

    def __post_init__(self):
        ops = []
        for name in ("e0", "e1", "ev"):
            op = np.array(getattr(self, name), dtype=complex)
            if op.shape != (2, 2):
                raise DomainError(f"{name} must be 2x2")
            a, b, c, d = op[0, 0], op[0, 1], op[1, 0], op[1, 1]
            if max(abs(a.imag), abs(d.imag), abs(b - c.conjugate())) > ATOL:
                raise DomainError(f"{name} is not Hermitian")
            # 2x2 Hermitian: PSD iff both diagonal entries and the determinant are >= 0.
            if min(a.real, d.real) < -ATOL or a.real * d.real - abs(b) ** 2 < -ATOL:
                raise DomainError(f"{name} is not positive semidefinite")
            op.setflags(write=False)
            object.__setattr__(self, name, op)
            ops.append(op)
        if np.max(np.abs(sum(ops) - IDENTITY)) > ATOL:
            raise DomainError("POVM elements do not sum to the identity")

    def probabilities(self, state: QubitState) -> tuple[float, float, float]:
        return (
            state.expectation(self.e0),
            state.expectation(self.e1),
            state.expectation(self.ev),
        )


def _triple(eff0: float, ket0: np.ndarray, eff1: float, ket1: np.ndarray) -> Povm:
    m0 = eff0 * projector(ket0)
    m1 = eff1 * projector(ket1)
    return Povm(m0, m1, IDENTITY - m0 - m1)


def conditional_measurements(s: MeasurementSetting) -> list[Povm]:
    """The four branch measurements ``[M, M', M'', M''']``.

    ``M`` and ``M'`` are the two software mappings with the optical mapping in
    step with them; ``M''`` and ``M'''`` are the same software mappings with
    the optical mapping rotated away by ``theta``.
    """
    zero, one = IDENTITY[0], IDENTITY[1]
    up, down = ket_theta(s.theta), ket_theta_perp(s.theta)
    return [
        _triple(s.eta_a, zero, s.eta_b, one),
        _triple(s.eta_b, zero, s.eta_a, one),
        _triple(s.eta_a, up, s.eta_b, down),
        _triple(s.eta_b, up, s.eta_a, down),
    ]


def averaged_povm(s: MeasurementSetting) -> Povm:
    """Equal-weight average of the four branch measurements."""
    branches = conditional_measurements(s)
    return Povm(
        sum(m.e0 for m in branches) / 4,
        sum(m.e1 for m in branches) / 4,
        sum(m.ev for m in branches) / 4,
    )


def detection_probability(s: MeasurementSetting, state: QubitState) -> float:
    """Probability that a single photon produces a click; state independent."""
    return 1.0 - state.expectation(averaged_povm(s).ev)


def povm_extremal_probabilities(s: MeasurementSetting) -> tuple[float, float]:
    """Smallest and largest eigenvalue of the bit-0 operator.

    The bit-1 operator has the same spectrum; callers that need both can use
    :func:`eigh2` on ``averaged_povm(s).e1``.
    """
    values, _ = eigh2(averaged_povm(s).e0)
    return float(values[0]), float(values[1])


def qber_min(theta):
    """Lowest error rate a single photon can cause at transition angle theta.

    Works elementwise on arrays.
    """
    if np.ndim(theta) == 0:
        if not 0.0 <= theta <= math.pi / 2:
            raise DomainError(f"theta must lie in [0, pi/2], got {theta}")
        return 0.5 * (1.0 - _cos(theta))
    theta = np.asarray(theta, dtype=float)
    if np.any((theta < 0) | (theta > math.pi / 2)):
        raise DomainError("theta must lie in [0, pi/2]")
    return 0.5 * (1.0 - _cos(theta))


def _cos(theta):
    # cos(pi/2) evaluates to 6e-17; snap it so the fully uncorrelated mode gives exactly 1/2.
    c = np.cos(theta)
    return np.where(np.abs(c) < 1e-15, 0.0, c) if np.ndim(c) else (0.0 if abs(c) < 1e-15 else float(c))


class AttackState(NamedTuple):
    state: QubitState
    unique: bool


def optimal_attack_state(s: MeasurementSetting, alice_bit: int) -> AttackState:
    """Pure state minimizing the wrong-bit probability per detection.

    With Alice's bit 0 the wrong outcome is bit 1, so the minimizer is the
    eigenvector of ``E_1`` with the smallest eigenvalue (and vice versa).
    Because both operators scale with ``p_det`` the minimizer does not depend
    on the efficiencies; when they vanish the unit-efficiency operator is used.
    ``unique`` is false where the spectrum is degenerate (``theta = pi/2``).
    """
    if alice_bit not in (0, 1):
        raise DomainError(f"alice_bit must be 0 or 1, got {alice_bit!r}")
    if s.p_det == 0.0:
        s = MeasurementSetting(1.0, 1.0, s.theta)
    povm = averaged_povm(s)
    wrong = povm.e1 if alice_bit == 0 else povm.e0
    values, vectors = eigh2(wrong)
    unique = (values[1] - values[0]) > 1e-12 * max(1.0, s.p_det)
    ket = vectors[:, 0]
    if not unique:
        ket = IDENTITY[alice_bit]
    # Fix the global phase so the first nonzero amplitude is real and positive.
    pivot = ket[0] if abs(ket[0]) > 1e-15 else ket[1]
    ket = ket * (abs(pivot) / pivot)
    return AttackState(QubitState.pure(ket), bool(unique))
