"""Exponentially decaying boundary layers near the clamped strip ends.

A layer lives on the half-strip {zeta >= 0, |eta| < h/2} in stretched
coordinates, satisfies Laplace's equation with zero flux on the lateral
walls, decays as zeta -> infinity, and matches a prescribed zero-mean trace
at zeta = 0.  The wall-flux-free eigenbasis on the cross-section is

    cos(2 p pi eta / h)        (even modes,  p = 1, 2, ...)
    sin((2 p + 1) pi eta / h)  (odd modes,   p = 0, 1, ...)

and each mode decays like exp(-lambda zeta) with its own frequency lambda.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LayerError", "FourierLayer", "layer_from_trace"]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _panel_rule(a: float, b: float, panels: int):
    """Composite 16-point Gauss rule on (a, b) with the given panel count."""
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
    weights = (half[:, None] * _GL_WEIGHTS).ravel()
    return nodes, weights


class LayerError(ValueError):
    """Raised when a trace cannot feed a decaying layer."""


@dataclass(frozen=True)
class FourierLayer:
    """Separated-variables solution on the half-strip of height ``h``.

    ``cos_coeffs[p-1]`` multiplies the even mode of frequency 2 p pi / h and
    ``sin_coeffs[p]`` the odd mode of frequency (2 p + 1) pi / h.
    """

    h: float
    cos_coeffs: tuple[float, ...]
    sin_coeffs: tuple[float, ...]

    def _modes(self):
        for p, a in enumerate(self.cos_coeffs, start=1):
            yield a, 2.0 * p * np.pi / self.h, np.cos
        for p, b in enumerate(self.sin_coeffs):
            yield b, (2.0 * p + 1.0) * np.pi / self.h, np.sin

    def is_zero(self) -> bool:
        return all(a == 0.0 for a in self.cos_coeffs + self.sin_coeffs)

    @property
    def decay_rate(self) -> float:
        """Smallest frequency carrying real weight (pi/h at worst).

        Coefficients below 1e-12 of the largest one are round-off from the
        trace projection, not genuine modes, and do not count.
        """
        coeffs = self.cos_coeffs + self.sin_coeffs
        top = max((abs(c) for c in coeffs), default=0.0)
        if top == 0.0:
            return np.inf
        rates = [lam for c, lam, _ in self._modes() if abs(c) > 1e-12 * top]
        return min(rates) if rates else np.inf

    def value(self, zeta, eta):
        zeta = np.asarray(zeta, dtype=float)
        eta = np.asarray(eta, dtype=float)
        out = np.zeros(np.broadcast(zeta, eta).shape)
        for c, lam, trig in self._modes():
            out += c * np.exp(-lam * zeta) * trig(lam * eta)
        return out

    def gradient(self, zeta, eta):
        """(d/dzeta, d/deta) with the same broadcasting as :meth:`value`."""
        zeta = np.asarray(zeta, dtype=float)
        eta = np.asarray(eta, dtype=float)
        shape = np.broadcast(zeta, eta).shape
        dz = np.zeros(shape)
        de = np.zeros(shape)
        for c, lam, trig in self._modes():
            damp = c * np.exp(-lam * zeta)
            if trig is np.cos:
                dz += -lam * damp * np.cos(lam * eta)
                de += -lam * damp * np.sin(lam * eta)
            else:
                dz += -lam * damp * np.sin(lam * eta)
                de += lam * damp * np.cos(lam * eta)
        return dz, de

    def trace_values(self, eta):
        return self.value(0.0, eta)


def layer_from_trace(h: float, trace, n_modes: int = 32, mean_tol: float = 1e-10) -> FourierLayer:
    """Expand ``trace(eta)`` on (-h/2, h/2) in the wall-flux-free basis.

    The trace must have zero cross-section mean (up to ``mean_tol``, measured
    against its own size); a constant component would feed a non-decaying
    mode, which the matching construction never produces.
    """
    # one quadrature panel per wavelength of the fastest mode
    eta, w = _panel_rule(-h / 2, h / 2, panels=max(8, n_modes))
    vals = np.asarray(trace(eta), dtype=float)
    if vals.shape != eta.shape:
        raise LayerError("trace must evaluate pointwise on the section")
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    mean = float(np.sum(w * vals)) / h
    if abs(mean) > mean_tol * max(scale, 1.0):
        raise LayerError(
            f"trace has nonzero section mean {mean:.3e}; "
            "a decaying layer cannot absorb a constant"
        )
    cos_coeffs = []
    sin_coeffs = []
    for p in range(1, n_modes + 1):
        lam = 2.0 * p * np.pi / h
        cos_coeffs.append(float(np.sum(w * vals * np.cos(lam * eta))) * 2.0 / h)
    for p in range(n_modes):
        lam = (2.0 * p + 1.0) * np.pi / h
        sin_coeffs.append(float(np.sum(w * vals * np.sin(lam * eta))) * 2.0 / h)
    return FourierLayer(h=h, cos_coeffs=tuple(cos_coeffs), sin_coeffs=tuple(sin_coeffs))
