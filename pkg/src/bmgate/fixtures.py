"""Synthetic temporal responses.

Measured curves for real detectors are not bundled; these generators give
reproducible stand-ins with the qualitative shape of a gated detector pair
with timing mismatch.  All grids are built from integer sample indices so the
transition angle hits exact multiples of its ramp step.
"""

from __future__ import annotations

import math

import numpy as np

from .temporal import TemporalResponse

RAMP_STEP = math.pi / 24  # 12 samples from 0 to pi/2


def _grid(span: float, step: float) -> tuple[np.ndarray, np.ndarray]:
    n = int(round(span / step))
    k = np.arange(-n, n + 1)
    return k, k * step


def _ramp(k: np.ndarray, half_window: int, ramp_step: float) -> np.ndarray:
    """Zero for ``|k| <= half_window``, rising by ``ramp_step`` per sample, capped at pi/2."""
    excess = np.clip(np.abs(k) - half_window, 0, None)
    return np.minimum(excess * ramp_step, math.pi / 2)


def shifted_gaussians(
    peak: float = 0.1,
    sigma: float = 0.2,
    shift: float = 0.3,
    span: float = 1.0,
    step: float = 0.01,
    half_window: int = 10,
    ramp_step: float = RAMP_STEP,
) -> TemporalResponse:
    """Two Gaussian efficiency curves whose centres are ``shift`` ns apart.

    The edges of the sampled range dominate the minimum, so the global
    blinding parameter is tiny, as for a commercial gated receiver.
    """
    k, t = _grid(span, step)
    eta_a = peak * np.exp(-((t + shift / 2) ** 2) / (2 * sigma**2))
    eta_b = peak * np.exp(-((t - shift / 2) ** 2) / (2 * sigma**2))
    theta = _ramp(k, half_window, ramp_step)
    window = (float(t[len(t) // 2 - half_window]), float(t[len(t) // 2 + half_window]))
    return TemporalResponse(t, eta_a, eta_b, theta, window)


def flat_top(x: np.ndarray, half_width: float, edge_sigma: float) -> np.ndarray:
    excess = np.clip(np.abs(x) - half_width, 0, None)
    return np.exp(-(excess**2) / (2 * edge_sigma**2))


def plateau_gate(
    peak_a: float = 0.1,
    peak_b: float = 0.09,
    plateau: float = 0.4,
    edge_sigma: float = 0.1,
    shift: float = 0.1,
    span: float = 1.0,
    step: float = 0.01,
    half_window: int = 20,
    ramp_step: float = RAMP_STEP,
    with_ramp: bool = True,
) -> TemporalResponse:
    """Flat-topped gates with mismatched heights and shifted edges.

    With the defaults, every mode where the transition angle is below pi/2
    lies on both plateaus, so the restricted blinding parameter is exactly
    ``peak_b / peak_a`` (0.9) while the Gaussian edges drive the global one
    far below 0.01.  ``with_ramp=False`` gives the same detectors without
    bit-mapped gating (theta identically zero).
    """
    k, t = _grid(span, step)
    eta_a = peak_a * flat_top(t + shift / 2, plateau, edge_sigma)
    eta_b = peak_b * flat_top(t - shift / 2, plateau, edge_sigma)
    theta = _ramp(k, half_window, ramp_step) if with_ramp else np.zeros_like(t)
    centre = len(t) // 2
    window = (float(t[centre - half_window]), float(t[centre + half_window]))
    return TemporalResponse(t, eta_a, eta_b, theta, window)


def ideal_gate(span: float = 1.0, step: float = 0.01, half_window: int = 20) -> TemporalResponse:
    """Unit efficiency inside the bit-mapped window, zero well outside it."""
    k, t = _grid(span, step)
    theta = _ramp(k, half_window, RAMP_STEP)
    eta = np.where(np.abs(k) <= half_window, 1.0, 0.0)
    centre = len(t) // 2
    window = (float(t[centre - half_window]), float(t[centre + half_window]))
    return TemporalResponse(t, eta, eta.copy(), theta, window)


def flat(n: int = 11, eta: float = 0.1, theta: float = 0.0) -> TemporalResponse:
    """Identical constant curves; the window is the centre sample when theta > 0."""
    t = np.linspace(-1.0, 1.0, n)
    th = np.full(n, theta)
    if theta > 0:
        th[n // 2] = 0.0
        window = (float(t[n // 2]), float(t[n // 2]))
    else:
        window = (float(t[0]), float(t[-1]))
    return TemporalResponse(t, np.full(n, eta), np.full(n, eta), th, window)


FIXTURES = {
    "shifted_gaussians": shifted_gaussians,
    "plateau_gate": plateau_gate,
    "plateau_gate_unpatched": lambda: plateau_gate(with_ramp=False),
    "ideal_gate": ideal_gate,
    "flat": flat,
}


def by_name(name: str) -> TemporalResponse:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
