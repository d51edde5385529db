"""Enumeration check that extra photons cannot lower the minimum error rate.

A two-photon detection record is summarized by integer counts: ``n1`` and
``n2`` events where only photon 1 or only photon 2 clicked, ``c`` events where
both did, and for each photon how many of its clicks showed the wrong bit.
Each photon on its own cannot err less often than its single-photon minimum
``Q_i``, which becomes the integer constraints

    n_i1 >= ceil(n_i * Q_i),    c_i1 >= ceil(c * Q_i).

Double clicks are resolved to a random bit, so the merged error rate is

    Q = (n_11 + n_21 + (c_11 + c_21) / 2) / (n1 + n2 + c).

Correlations between the photons are left completely free; only these
marginal constraints are imposed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError

EXHAUSTIVE_LIMIT = 30
_EPS = 1e-9


def _min_wrong(n, q):
    """Smallest integer count of wrong bits compatible with rate ``q`` over ``n`` events."""
    return np.ceil(np.asarray(n) * q - _EPS).astype(np.int64)


def _check_q(name: str, q: float) -> None:
    if not 0.0 <= q <= 0.5:
        raise DomainError(f"{name} must lie in [0, 1/2], got {q}")


@dataclass(frozen=True)
class TwoPhotonScenario:
    Q1: float
    Q2: float
    n1: int
    n2: int
    c: int
    n11: int
    n21: int
    c11: int
    c21: int

    def __post_init__(self):
        _check_q("Q1", self.Q1)
        _check_q("Q2", self.Q2)
        for name in ("n1", "n2", "c", "n11", "n21", "c11", "c21"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        checks = (
            ("n11", self.n11, self.n1, self.Q1),
            ("n21", self.n21, self.n2, self.Q2),
            ("c11", self.c11, self.c, self.Q1),
            ("c21", self.c21, self.c, self.Q2),
        )
        for name, wrong, total, q in checks:
            if wrong > total:
                raise DomainError(f"{name} = {wrong} exceeds its event count {total}")
            if wrong < int(_min_wrong(total, q)):
                raise DomainError(f"{name} = {wrong} is below the single-photon minimum for Q = {q}")

    @property
    def total(self) -> int:
        return self.n1 + self.n2 + self.c


def merged_qber(s: TwoPhotonScenario) -> float:
    if s.total == 0:
        raise DomainError("merged QBER of a record with no detections is undefined")
    return (s.n11 + s.n21 + 0.5 * (s.c11 + s.c21)) / s.total


def cells(N: int) -> np.ndarray:
    """All ``(n1, n2, c)`` with ``1 <= n1 + n2 + c <= N``, ordered by total then lexicographically."""
    if N < 1:
        raise DomainError(f"count budget must be at least 1, got {N}")
    rows = [
        (n1, n2, total - n1 - n2)
        for total in range(1, N + 1)
        for n1 in range(total + 1)
        for n2 in range(total - n1 + 1)
    ]
    return np.array(rows, dtype=np.int64)


@dataclass
class BoundResult:
    Q1: float
    Q2: float
    N: int
    bound: float
    slack: float
    holds: bool
    min_qber: float
    minimizer: dict
    n_cells: int
    n_skipped: int
    n_scenarios: int
    method: str

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> BoundResult:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def cell_minima_exhaustive(Q1: float, Q2: float, N: int) -> np.ndarray:
    """Per-cell minimum of ``2 * D * Q`` over every feasible assignment, by brute force.

    Returns one row ``(min_numerator, n11, n21, c11, c21)`` per cell of
    :func:`cells`, where ``Q = min_numerator / (2 * D)``.  Cost grows like N^7.
    """
    out = []
    for n1, n2, c in cells(N):
        r11 = np.arange(_min_wrong(n1, Q1), n1 + 1)
        r21 = np.arange(_min_wrong(n2, Q2), n2 + 1)
        rc1 = np.arange(_min_wrong(c, Q1), c + 1)
        rc2 = np.arange(_min_wrong(c, Q2), c + 1)
        num = (
            2 * r11[:, None, None, None]
            + 2 * r21[None, :, None, None]
            + rc1[None, None, :, None]
            + rc2[None, None, None, :]
        )
        flat = int(np.argmin(num))
        i, j, k, l = np.unravel_index(flat, num.shape)
        out.append((num.flat[flat], r11[i], r21[j], rc1[k], rc2[l]))
    return np.array(out, dtype=np.int64)


def cell_minima_corner(Q1: float, Q2: float, N: int) -> np.ndarray:
    """Same as :func:`cell_minima_exhaustive`, evaluated at the lower corner of each cell.

    The feasible set of a cell is a product of four integer ranges and the
    numerator is a positive-weighted sum of one term per range, so its exact
    minimum is reached with every count at its lower end.
    """
    cs = cells(N)
    n11 = _min_wrong(cs[:, 0], Q1)
    n21 = _min_wrong(cs[:, 1], Q2)
    c11 = _min_wrong(cs[:, 2], Q1)
    c21 = _min_wrong(cs[:, 2], Q2)
    num = 2 * n11 + 2 * n21 + c11 + c21
    return np.column_stack([num, n11, n21, c11, c21])


def _scenario_count(Q1: float, Q2: float, cs: np.ndarray) -> int:
    n1, n2, c = cs[:, 0], cs[:, 1], cs[:, 2]
    sizes = (
        (n1 - _min_wrong(n1, Q1) + 1)
        * (n2 - _min_wrong(n2, Q2) + 1)
        * (c - _min_wrong(c, Q1) + 1)
        * (c - _min_wrong(c, Q2) + 1)
    )
    return int(sizes.sum())


def verify_bound(Q1: float, Q2: float, N: int, exhaustive: bool | None = None) -> BoundResult:
    """Check ``merged_qber >= min(Q1, Q2) - 1/(2N)`` for every record with at most N events.

    ``exhaustive`` selects brute-force enumeration of every assignment; by
    default it is used for ``N <= 30`` and the exact per-cell corner
    minimum above that.  The minimizing record is the first one reached in
    the order of :func:`cells`.
    """
    _check_q("Q1", Q1)
    _check_q("Q2", Q2)
    if exhaustive is None:
        exhaustive = N <= EXHAUSTIVE_LIMIT
    cs = cells(N)
    minima = cell_minima_exhaustive(Q1, Q2, N) if exhaustive else cell_minima_corner(Q1, Q2, N)
    den = 2 * cs.sum(axis=1)
    num = minima[:, 0]

    ratio = num / den
    candidates = np.flatnonzero(ratio <= ratio.min() + 1e-12)
    # Exact rational argmin among the float near-ties: a/b < c/d  <=>  a*d < c*b.
    best = int(candidates[0])
    for i in candidates[1:]:
        if num[i] * den[best] < num[best] * den[i]:
            best = int(i)
    min_q = float(num[best] / den[best])
    bound = min(Q1, Q2)
    slack = 1.0 / (2 * N)
    holds = bool(np.all(num / den >= bound - slack))

    n1, n2, c = (int(x) for x in cs[best])
    _, n11, n21, c11, c21 = (int(x) for x in minima[best])
    scenario = TwoPhotonScenario(Q1, Q2, n1, n2, c, n11, n21, c11, c21)
    return BoundResult(
        Q1=Q1,
        Q2=Q2,
        N=N,
        bound=bound,
        slack=slack,
        holds=holds,
        min_qber=min_q,
        minimizer=asdict(scenario),
        n_cells=len(cs),
        n_skipped=0,
        n_scenarios=_scenario_count(Q1, Q2, cs),
        method="exhaustive" if exhaustive else "corner",
    )


@dataclass
class InductionResult:
    qbers: list[float]
    N: int
    bound: float
    holds: bool
    steps: list[BoundResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "qbers": self.qbers,
            "N": self.N,
            "bound": self.bound,
            "holds": self.holds,
            "steps": [s.to_dict() for s in self.steps],
        }


def inductive_extension_check(qbers, N: int, exhaustive: bool | None = None) -> InductionResult:
    """Extend the two-photon check to more photons one photon at a time.

    The first ``k`` photons are treated as a single aggregated photon whose
    minimum is the bound already established for them, then paired with
    photon ``k + 1``.
    """
    qbers = [float(q) for q in qbers]
    if not 2 <= len(qbers) <= 4:
        raise DomainError(f"induction check supports 2 to 4 photons, got {len(qbers)}")
    for i, q in enumerate(qbers):
        _check_q(f"Q[{i}]", q)
    steps = []
    aggregate = qbers[0]
    for q in qbers[1:]:
        step = verify_bound(aggregate, q, N, exhaustive=exhaustive)
        steps.append(step)
        aggregate = min(aggregate, q)
    bound = min(qbers)
    holds = all(s.holds for s in steps) and math.isclose(aggregate, bound)
    return InductionResult(qbers, N, bound, holds, steps)
