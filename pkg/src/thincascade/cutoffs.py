"""Smooth cutoff functions used to glue the expansion regions together.

Everything here is built from the quintic smoothstep 6t^5 - 15t^4 + 10t^3,
which is C^2 across the clamp points: both the first and second derivatives
vanish at t = 0 and t = 1, so products with cutoff derivatives stay bounded
in the H^1 budgets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "smoothstep",
    "smoothstep_d1",
    "smoothstep_d2",
    "RampCutoff",
    "PlateauCutoff",
    "inner_left_cutoff",
    "inner_right_cutoff",
    "plateau_cutoff",
    "end_cutoff",
]


def smoothstep(t):
    """Quintic smoothstep, clamped: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def smoothstep_d1(t):
    """First derivative of :func:`smoothstep` (zero outside (0, 1))."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    tc = np.where(inside, t, 0.0)
    val = 30.0 * tc * tc * (tc - 1.0) * (tc - 1.0)
    return np.where(inside, val, 0.0)


def smoothstep_d2(t):
    """Second derivative of :func:`smoothstep` (zero outside (0, 1))."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    tc = np.where(inside, t, 0.0)
    val = 60.0 * tc * (2.0 * tc - 1.0) * (tc - 1.0)
    return np.where(inside, val, 0.0)


@dataclass(frozen=True)
class RampCutoff:
    """Monotone C^2 transition between two constant states.

    Equals ``left_value`` for x <= lo and ``1 - left_value`` for x >= hi,
    ramping through a smoothstep in between.  ``left_value`` is 1 for a
    falling ramp and 0 for a rising one.
    """

    lo: float
    hi: float
    rising: bool

    def __post_init__(self) -> None:
        if not self.hi > self.lo:
            raise ValueError(f"ramp needs hi > lo, got [{self.lo}, {self.hi}]")

    def _t(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)

    def value(self, x):
        s = smoothstep(self._t(x))
        return s if self.rising else 1.0 - s

    def d1(self, x):
        s = smoothstep_d1(self._t(x)) / (self.hi - self.lo)
        return s if self.rising else -s

    def d2(self, x):
        s = smoothstep_d2(self._t(x)) / (self.hi - self.lo) ** 2
        return s if self.rising else -s


@dataclass(frozen=True)
class PlateauCutoff:
    """Even C^2 bump: 1 on [-inner_r, inner_r], 0 outside (-outer_r, outer_r)."""

    inner_r: float
    outer_r: float

    def __post_init__(self) -> None:
        if not 0.0 < self.inner_r < self.outer_r:
            raise ValueError(
                f"plateau needs 0 < inner_r < outer_r, got {self.inner_r}, {self.outer_r}"
            )

    def _t(self, x):
        # rising argument of the right shoulder evaluated at |x|
        return (self.outer_r - np.abs(np.asarray(x, dtype=float))) / (
            self.outer_r - self.inner_r
        )

    def value(self, x):
        return smoothstep(self._t(x))

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        w = self.outer_r - self.inner_r
        return -np.sign(x) * smoothstep_d1(self._t(x)) / w

    def d2(self, x):
        # |x|'' contributes nothing: d1 vanishes identically near x = 0
        w = self.outer_r - self.inner_r
        return smoothstep_d2(self._t(x)) / w**2


def inner_left_cutoff(l: float) -> RampCutoff:
    """Cutoff that is 1 deep inside the left branch of the stretched domain.

    Falls from 1 to 0 on the window -(2 + l/2) <= xi <= -(1 + l/2), so its
    support avoids the joint region entirely.
    """
    return RampCutoff(lo=-(2.0 + l / 2.0), hi=-(1.0 + l / 2.0), rising=False)


def inner_right_cutoff(l: float) -> RampCutoff:
    """Mirror image of :func:`inner_left_cutoff`: rises on the right branch."""
    return RampCutoff(lo=1.0 + l / 2.0, hi=2.0 + l / 2.0, rising=True)


def plateau_cutoff(inner_r: float, outer_r: float) -> PlateauCutoff:
    return PlateauCutoff(inner_r=inner_r, outer_r=outer_r)


def end_cutoff(side: int, delta: float = 0.25) -> RampCutoff:
    """Cutoff pinned to one end of the physical interval (-1, 1).

    side=1 returns a ramp that is 1 for x <= -1 + delta and 0 for
    x >= -1 + 2 delta; side=2 mirrors it at the right end.
    """
    if side == 1:
        return RampCutoff(lo=-1.0 + delta, hi=-1.0 + 2.0 * delta, rising=False)
    if side == 2:
        return RampCutoff(lo=1.0 - 2.0 * delta, hi=1.0 - delta, rising=True)
    raise ValueError(f"side must be 1 or 2, got {side}")
