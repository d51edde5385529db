"""Key-rate bookkeeping for a receiver with bit-mapped gating.

The measured error rate certifies that a fraction of the detections happened
in modes whose minimum error rate lies below a threshold chosen by Bob.  Only
those modes enter the restricted blinding parameter, which replaces the
(usually vanishing) blinding parameter of the whole gate in the rate formula.
Rates are asymptotic and assume symmetric bases.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import AnalysisError, DegenerateInputError, DomainError
from .temporal import TemporalResponse, blinding_parameter, subset_where_qber_below

DEFAULT_GRID_STEP = 0.01


def _check_unit(name: str, value: float, hi: float = 1.0) -> None:
    if not (0.0 <= value <= hi):
        raise DomainError(f"{name} must lie in [0, {hi:g}], got {value}")


def binary_entropy(p: float) -> float:
    _check_unit("p", p)
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def rate_unpatched(E: float, eta: float) -> float:
    """Key rate with the blinding parameter of the whole gate, clamped at 0."""
    _check_unit("E", E, 0.5)
    _check_unit("eta", eta)
    h = binary_entropy(E)
    return max(0.0, -h + eta * (1.0 - h))


def rate_patched(E: float, f: float, eta_restricted: float) -> float:
    """Key rate once the certified fraction ``f`` sees only ``eta_restricted``."""
    _check_unit("E", E, 0.5)
    _check_unit("f", f)
    _check_unit("eta_restricted", eta_restricted)
    h = binary_entropy(E)
    return max(0.0, -h + f * eta_restricted * (1.0 - h))


def in_gate_fraction(E: float, E_prime: float) -> float:
    """Lower bound on the fraction of detections in modes below the threshold.

    Every detection outside those modes errs with probability at least
    ``E_prime``, so an error rate ``E`` leaves at least ``(E' - E)/E'``
    of the detections inside.
    """
    if not 0.0 < E_prime <= 0.5:
        raise DomainError(f"E_prime must lie in (0, 1/2], got {E_prime}")
    _check_unit("E", E)
    return max(0.0, (E_prime - E) / E_prime)


def apply_mode_coupling(f: float, delta: float) -> float:
    """Discount ``f`` by the worst-case leakage ``delta`` out of the gate."""
    _check_unit("delta", delta)
    return f * (1.0 - delta)


@dataclass
class SecurityReport:
    E: float
    E_prime: float
    f: float
    eta_global: float
    eta_restricted: float
    delta: float
    f_adjusted: float
    effective_blinding: float
    rate_unpatched: float
    rate_patched: float
    E_source: str = "input"
    E_stderr: float | None = None
    finite_sample_note: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SecurityReport:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def _safe_blinding(resp: TemporalResponse, subset=None) -> float:
    try:
        return blinding_parameter(resp, subset)
    except DegenerateInputError:
        return 0.0


def analyze(
    resp: TemporalResponse,
    E: float,
    E_prime: float,
    delta: float = 0.0,
    E_source: str = "input",
    E_stderr: float | None = None,
) -> SecurityReport:
    """Security report for one fixed threshold ``E_prime``."""
    subset = subset_where_qber_below(resp, E_prime)
    if subset.is_empty():
        raise AnalysisError(f"no certifiable modes: no sample has minimum QBER below {E_prime}")
    eta_global = _safe_blinding(resp)
    eta_restricted = _safe_blinding(resp, subset)
    f = in_gate_fraction(E, E_prime)
    f_adj = apply_mode_coupling(f, delta)
    note = None
    if E_stderr is not None:
        note = (
            "E carries a binomial standard error that is not propagated "
            "into the asymptotic rates"
        )
    return SecurityReport(
        E=E,
        E_prime=E_prime,
        f=f,
        eta_global=eta_global,
        eta_restricted=eta_restricted,
        delta=delta,
        f_adjusted=f_adj,
        effective_blinding=f_adj * eta_restricted,
        rate_unpatched=rate_unpatched(E, eta_global),
        rate_patched=rate_patched(E, f_adj, eta_restricted),
        E_source=E_source,
        E_stderr=E_stderr,
        finite_sample_note=note,
    )


def default_grid(step: float = DEFAULT_GRID_STEP) -> list[float]:
    """Thresholds ``step, 2*step, ...`` up to and including 1/2."""
    if not 0.0 < step <= 0.5:
        raise DomainError(f"grid step must lie in (0, 1/2], got {step}")
    n = int(math.floor(0.5 / step + 1e-9))
    return [round(k * step, 12) for k in range(1, n + 1)]


@dataclass
class ScanRow:
    E_prime: float
    f: float
    eta_restricted: float | None  # None where no mode qualifies
    objective: float


def threshold_scan(resp: TemporalResponse, E: float, grid, delta: float = 0.0) -> list[ScanRow]:
    """Objective ``f (1 - delta) eta'`` for every threshold in ``grid``."""
    rows = []
    for e_prime in grid:
        subset = subset_where_qber_below(resp, e_prime)
        f = in_gate_fraction(E, e_prime)
        if subset.is_empty():
            rows.append(ScanRow(e_prime, f, None, 0.0))
            continue
        eta_r = _safe_blinding(resp, subset)
        rows.append(ScanRow(e_prime, f, eta_r, apply_mode_coupling(f, delta) * eta_r))
    return rows


def scan_csv(rows: list[ScanRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["E_prime", "f", "eta_restricted", "objective"])
    for r in rows:
        eta = "" if r.eta_restricted is None else repr(r.eta_restricted)
        writer.writerow([repr(r.E_prime), repr(r.f), eta, repr(r.objective)])
    return buf.getvalue()


def optimize_threshold(
    resp: TemporalResponse,
    E: float,
    grid=None,
    delta: float = 0.0,
    E_source: str = "input",
    E_stderr: float | None = None,
) -> tuple[float, SecurityReport]:
    """Pick the threshold maximizing ``f (1 - delta) eta'``.

    Ties go to the smallest threshold, which makes the choice independent of
    the grid order.  Thresholds with no qualifying mode are skipped.
    """
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise AnalysisError("threshold grid is empty")
    _check_unit("delta", delta)
    rows = [r for r in threshold_scan(resp, E, grid, delta) if r.eta_restricted is not None]
    if not rows:
        raise AnalysisError("no certifiable modes for any threshold in the grid")
    objectives = np.array([r.objective for r in rows])
    best_value = objectives.max()
    best = min(r.E_prime for r in rows if r.objective == best_value)
    report = analyze(resp, E, best, delta, E_source=E_source, E_stderr=E_stderr)
    return best, report
