"""Sampled detector and basis-selector responses over one gate period.

The continuum of temporal modes is represented by a finite sample grid.  All
minima and maxima are taken over samples and nothing is interpolated, so the
blinding parameter computed here is an estimate from above: superpositions of
temporal modes are not enumerated.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CurveFormatError,
    CurveOrderError,
    CurveRangeError,
    DegenerateInputError,
    DomainError,
    WindowConsistencyError,
)
from .measure import MeasurementSetting, qber_min

CURVE_HEADER = ("t_ns", "eta_a", "eta_b", "theta_rad")
THETA_TOL = 1e-12


def _frozen(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise CurveFormatError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise CurveRangeError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TemporalResponse:
    """Efficiency curves and transition angle sampled over one gate period.

    ``bitmapped_window`` is the closed interval (ns) where the software and
    optical bit-mappings coincide, so ``theta`` must vanish on every sample
    inside it.
    """

    t_grid: np.ndarray
    eta_a: np.ndarray
    eta_b: np.ndarray
    theta: np.ndarray
    bitmapped_window: tuple[float, float]

    def __post_init__(self):
        t = _frozen(self.t_grid, "t_grid")
        a = _frozen(self.eta_a, "eta_a")
        b = _frozen(self.eta_b, "eta_b")
        th = _frozen(self.theta, "theta")
        if len(t) < 2:
            raise CurveFormatError("a response needs at least two samples")
        if not (len(a) == len(b) == len(th) == len(t)):
            raise CurveFormatError("all curves must have the same length as t_grid")
        if np.any(np.diff(t) <= 0):
            raise CurveOrderError("t_grid must be strictly increasing")
        for name, arr in (("eta_a", a), ("eta_b", b)):
            bad = np.flatnonzero((arr < 0) | (arr > 1))
            if bad.size:
                i = bad[0]
                raise CurveRangeError(f"{name}[{i}] = {arr[i]} is outside [0, 1]")
        bad = np.flatnonzero((th < 0) | (th > math.pi / 2))
        if bad.size:
            i = bad[0]
            raise CurveRangeError(f"theta[{i}] = {th[i]} is outside [0, pi/2]")

        try:
            lo, hi = (float(x) for x in self.bitmapped_window)
        except (TypeError, ValueError) as exc:
            raise WindowConsistencyError("bitmapped_window must be a (start, end) pair") from exc
        if not lo <= hi:
            raise WindowConsistencyError(f"window start {lo} is after its end {hi}")
        if lo < t[0] or hi > t[-1]:
            raise WindowConsistencyError(
                f"window [{lo}, {hi}] is not inside the sampled range [{t[0]}, {t[-1]}]"
            )
        inside = (t >= lo) & (t <= hi)
        bad = np.flatnonzero(inside & (th > THETA_TOL))
        if bad.size:
            i = bad[0]
            raise WindowConsistencyError(
                f"theta = {th[i]} at t = {t[i]} ns inside the bit-mapped window"
            )

        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "eta_a", a)
        object.__setattr__(self, "eta_b", b)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "bitmapped_window", (lo, hi))

    def __len__(self) -> int:
        return len(self.t_grid)

    @property
    def window_mask(self) -> np.ndarray:
        lo, hi = self.bitmapped_window
        return (self.t_grid >= lo) & (self.t_grid <= hi)

    @property
    def window_center(self) -> float:
        lo, hi = self.bitmapped_window
        return 0.5 * (lo + hi)

    def index_of(self, t: float) -> int:
        """Index of the sample nearest to ``t``; ``t`` must be inside the grid."""
        grid = self.t_grid
        if not grid[0] <= t <= grid[-1]:
            raise DomainError(f"time {t} ns is outside the curve support [{grid[0]}, {grid[-1]}]")
        i = int(np.searchsorted(grid, t))
        if i == len(grid):
            return i - 1
        if i > 0 and (t - grid[i - 1]) <= (grid[i] - t):
            return i - 1
        return i

    def setting_at(self, index: int) -> MeasurementSetting:
        return MeasurementSetting(
            float(self.eta_a[index]), float(self.eta_b[index]), float(self.theta[index])
        )

    def qber_min(self) -> np.ndarray:
        return qber_min(self.theta)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for row in zip(self.t_grid, self.eta_a, self.eta_b, self.theta):
            writer.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class ModeSubset:
    """Boolean selection of temporal-mode samples; True means included."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        if mask.ndim != 1:
            raise DomainError("mode mask must be one-dimensional")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def full(cls, resp: TemporalResponse) -> ModeSubset:
        return cls(np.ones(len(resp), dtype=bool))

    def __len__(self) -> int:
        return len(self.mask)

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def is_empty(self) -> bool:
        return not self.mask.any()


def blinding_parameter(resp: TemporalResponse, subset: ModeSubset | None = None) -> float:
    """Global min over (modes, detectors) divided by the global max.

    With the full subset this is the blinding parameter of the whole gate;
    with a restricted subset it is the parameter of the certified modes.
    """
    if subset is None:
        subset = ModeSubset.full(resp)
    if len(subset) != len(resp):
        raise DomainError(
            f"subset has {len(subset)} samples but the response has {len(resp)}"
        )
    if subset.is_empty():
        raise DomainError("blinding parameter of an empty mode subset is undefined")
    effs = np.concatenate([resp.eta_a[subset.mask], resp.eta_b[subset.mask]])
    top = effs.max()
    if top <= 0.0:
        raise DegenerateInputError("all efficiencies vanish on the selected modes")
    return float(effs.min() / top)


def subset_where_qber_below(resp: TemporalResponse, threshold: float) -> ModeSubset:
    """Modes whose minimum single-photon QBER is strictly below ``threshold``."""
    if not 0.0 < threshold <= 0.5:
        raise DomainError(f"threshold must lie in (0, 1/2], got {threshold}")
    return ModeSubset(resp.qber_min() < threshold)


def load_response(text: str, bitmapped_window: tuple[float, float]) -> TemporalResponse:
    """Parse curve-file content; the bit-mapped window comes from the run config."""
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if any(cell.strip() for cell in row)]
    if not rows:
        raise CurveFormatError("curve file is empty")
    header = tuple(cell.strip() for cell in rows[0])
    if header != CURVE_HEADER:
        raise CurveFormatError(
            f"expected header {','.join(CURVE_HEADER)}, got {','.join(header)}"
        )
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CURVE_HEADER):
            raise CurveFormatError(f"line {lineno}: expected 4 fields, got {len(row)}")
        try:
            parsed = [float(cell) for cell in row]
        except ValueError as exc:
            raise CurveFormatError(f"line {lineno}: {exc}") from exc
        if not all(math.isfinite(x) for x in parsed):
            raise CurveFormatError(f"line {lineno}: non-finite value")
        values.append(parsed)
    if not values:
        raise CurveFormatError("curve file has a header but no samples")
    cols = np.array(values).T
    return TemporalResponse(cols[0], cols[1], cols[2], cols[3], tuple(bitmapped_window))


def read_response(path, bitmapped_window: tuple[float, float]) -> TemporalResponse:
    return load_response(Path(path).read_text(encoding="utf-8"), bitmapped_window)
