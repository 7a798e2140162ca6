"""Weighted-norm versus gradient-norm ratios for half-line test profiles.

The admissible profiles vanish near t = 0, decay at infinity, and are
smooth; for each one the ratio

    int_0^inf t^{-2} |phi|^2 dt  /  int_0^inf |phi'|^2 dt

is bounded by 4 (the sharp constant of the classical half-line inequality).
The analytic profile t*exp(-t) gives exactly 2: the numerator integrates
exp(-2t) to 1/2 and the denominator integrates (1-t)^2 exp(-2t) to 1/4.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ProfileInvalid

T_MAX = 24.0
SAMPLES = 8192


def _midpoint_grid(t_max: float = T_MAX, m: int = SAMPLES):
    dt = t_max / m
    return (np.arange(m) + 0.5) * dt, dt


def weighted_gradient_ratio(phi: Callable[[np.ndarray], np.ndarray],
                            t_max: float = T_MAX, m: int = SAMPLES) -> float:
    """Quadrature ratio of the weighted norm to the gradient norm.

    Midpoint rule on a uniform grid; the derivative uses centred differences,
    second order for smooth profiles.  No admissibility check here: callers
    wanting the guarded version use `hardy_check`.
    """
    t, dt = _midpoint_grid(t_max, m)
    f = np.asarray(phi(t), dtype=float)
    df = np.gradient(f, dt)
    num = float(np.sum(f * f / (t * t)) * dt)
    den = float(np.sum(df * df) * dt)
    if den == 0.0:
        return 0.0
    return num / den


def _validate(phi, t, f):
    scale = float(np.max(np.abs(f)))
    if scale == 0.0:
        return
    near0 = t <= 0.25
    if np.max(np.abs(f[near0])) > 1e-9 * scale:
        raise ProfileInvalid("profile does not vanish in a neighbourhood of 0")
    tail = t >= 0.9 * t[-1]
    if np.max(np.abs(f[tail])) > 1e-6 * scale:
        raise ProfileInvalid("profile does not decay by the end of the window")


def hardy_check(samples: Sequence[Callable[[np.ndarray], np.ndarray]],
                t_max: float = T_MAX, m: int = SAMPLES) -> float:
    """Max weighted/gradient ratio over admissible profiles (must be <= 4)."""
    t, dt = _midpoint_grid(t_max, m)
    worst = 0.0
    for phi in samples:
        f = np.asarray(phi(t), dtype=float)
        _validate(phi, t, f)
        worst = max(worst, weighted_gradient_ratio(phi, t_max, m))
    return worst


def _smooth_ramp(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    out = np.zeros_like(u)
    pos = u > 0
    hi = u >= 1
    mid = pos & ~hi
    a = np.exp(-1.0 / np.clip(u[mid], 1e-300, None))
    b = np.exp(-1.0 / np.clip(1.0 - u[mid], 1e-300, None))
    out[mid] = a / (a + b)
    out[hi] = 1.0
    return out


def random_admissible_profiles(count: int, seed: int):
    """Seeded bank of smooth bumps vanishing near 0 and decaying at infinity."""
    rng = np.random.default_rng(seed)
    profiles = []
    for _ in range(count):
        k = rng.integers(2, 5)
        amps = rng.uniform(-1.0, 1.0, size=k)
        centers = rng.uniform(2.0, 12.0, size=k)
        widths = rng.uniform(0.4, 2.0, size=k)
        t_on = rng.uniform(0.6, 1.5)

        def phi(t, amps=amps, centers=centers, widths=widths, t_on=t_on):
            f = np.zeros_like(t)
            for a, c, w in zip(amps, centers, widths):
                f = f + a * np.exp(-((t - c) ** 2) / (2 * w * w))
            return f * _smooth_ramp((t - t_on) / 0.75)

        profiles.append(phi)
    return profiles
