"""Transverse correctors of the regular expansion on the branches.

Each corrector u_k(x, eta) lives on a strip section (-h/2, h/2), has zero
section mean for every x, and repairs the eta-dependence the branch profiles
cannot carry.  With the separated polynomial load f = sum_j c_j(x) eta^j the
correctors stay polynomial in both variables, so they are represented as
eta-polynomials with Poly1D x-coefficients and everything downstream (values,
traces at the ends, x-derivatives at the joint) is exact.

Order 2 solves

    -d^2/d(eta)^2 u_2 = f - Fhat/h,   -du/d(eta) = phi_± on the walls,

with the section mean pinned to zero; odd orders vanish; higher even orders
follow the recursion  -d^2/d(eta)^2 u_k = d^2/dx^2 u_{k-2}  with zero wall
flux (solvable because the previous corrector has zero section mean).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CascadeGeometry
from .limit import effective_load, transverse_moment
from .problems import Poly1D, ProblemData


@dataclass(frozen=True)
class EtaPoly:
    """Polynomial in eta with Poly1D coefficients: sum_j coeffs[j](x) eta^j."""

    coeffs: tuple[Poly1D, ...]
    h: float  # section height the polynomial lives on

    def __post_init__(self):
        if not self.coeffs:
            object.__setattr__(self, "coeffs", (Poly1D((0.0,)),))

    def value(self, x, eta):
        x = np.asarray(x, dtype=float)
        eta = np.asarray(eta, dtype=float)
        out = np.zeros(np.broadcast(x, eta).shape)
        for j, cj in enumerate(self.coeffs):
            out = out + cj(x) * eta**j
        return out

    def eta_derivative(self) -> "EtaPoly":
        cs = tuple((j + 1) * self.coeffs[j + 1] for j in range(len(self.coeffs) - 1))
        return EtaPoly(cs or (Poly1D((0.0,)),), self.h)

    def x_derivative(self, n: int = 1) -> "EtaPoly":
        return EtaPoly(tuple(c.derivative(n) for c in self.coeffs), self.h)

    def eta_poly_at(self, x: float) -> tuple[float, ...]:
        """Numeric eta-coefficients at a fixed station x."""
        return tuple(float(c(x)) for c in self.coeffs)

    def x_deriv_coeffs_at0(self, n: int, *, requested_by: str = "") -> tuple[float, ...]:
        """Numeric eta-coefficients of (d/dx)^n (this) at x = 0."""
        return tuple(c.deriv_at0(n, requested_by=requested_by) for c in self.coeffs)

    def section_mean_poly(self) -> Poly1D:
        """x-polynomial: (1/h) ∫ over the section of this eta-polynomial."""
        out = Poly1D((0.0,))
        for j, cj in enumerate(self.coeffs):
            m = transverse_moment(self.h, j)
            if m != 0.0:
                out = out + (m / self.h) * cj
        return out

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.coeffs)


def _zero(h: float) -> EtaPoly:
    return EtaPoly((Poly1D((0.0,)),), h)


def _kernel_integral(coeffs: tuple[Poly1D, ...], h: float) -> list[Poly1D]:
    """Apply g(eta) -> ∫_{-h/2}^eta (eta - t) g(t) dt to an eta-polynomial.

    For a monomial t^j the kernel gives
        eta^{j+2}/((j+1)(j+2)) - eta c1/(j+1) + c2/(j+2),
    with c1 = (-h/2)^{j+1}, c2 = (-h/2)^{j+2}.
    """
    zero = Poly1D((0.0,))
    out: list[Poly1D] = [zero] * (len(coeffs) + 2)
    for j, cj in enumerate(coeffs):
        if cj.is_zero():
            continue
        c1 = (-h / 2.0) ** (j + 1)
        c2 = (-h / 2.0) ** (j + 2)
        out[j + 2] = out[j + 2] + (1.0 / ((j + 1) * (j + 2))) * cj
        out[1] = out[1] - (c1 / (j + 1)) * cj
        out[0] = out[0] + (c2 / (j + 2)) * cj
    return out


def _pin_section_mean(coeffs: list[Poly1D], h: float) -> EtaPoly:
    """Choose the eta^0 coefficient so the section mean vanishes identically."""
    drift = Poly1D((0.0,))
    for j, cj in enumerate(coeffs[1:], start=1):
        m = transverse_moment(h, j)
        if m != 0.0:
            drift = drift + m * cj
    coeffs[0] = (-1.0 / h) * drift
    return EtaPoly(tuple(coeffs), h)


def compute_u2(geom: CascadeGeometry, data: ProblemData, branch: int) -> EtaPoly:
    """Leading transverse corrector on one branch (exact eta-polynomial)."""
    h = 2.0 * geom.half_height(branch)
    Fh = effective_load(geom, data, branch) * (1.0 / h)

    # -∫ (eta - t) f(x, t) dt
    ker = _kernel_integral(data.f_eta, h)
    coeffs = [(-1.0) * c for c in ker]

    # +∫ (eta - t) (Fhat/h) dt  =  (Fhat/h)(eta + h/2)^2 / 2
    pad = len(coeffs)
    if pad < 3:
        coeffs += [Poly1D((0.0,))] * (3 - pad)
    coeffs[2] = coeffs[2] + 0.5 * Fh
    coeffs[1] = coeffs[1] + (h / 2.0) * Fh
    coeffs[0] = coeffs[0] + (h * h / 8.0) * Fh

    # -eta * phi_minus
    coeffs[1] = coeffs[1] - data.phi_minus[branch - 1]

    return _pin_section_mean(coeffs, h)


def next_even_corrector(u_prev: EtaPoly) -> EtaPoly:
    """u_k from u_{k-2}:  -d^2/d(eta)^2 u_k = d^2/dx^2 u_{k-2}, zero wall flux.

    Solvability needs the x-second-derivative of the previous corrector to
    have zero section mean, which holds identically because the previous
    corrector does; asserted here as a cheap polynomial check.
    """
    g = u_prev.x_derivative(2)
    mean = g.section_mean_poly()
    assert all(abs(c) < 1e-12 for c in mean.coeffs), "recursion lost solvability"
    ker = _kernel_integral(g.coeffs, u_prev.h)
    coeffs = [(-1.0) * c for c in ker]
    return _pin_section_mean(coeffs, u_prev.h)


def regular_correctors(geom: CascadeGeometry, data: ProblemData, branch: int,
                       k_max: int) -> dict[int, EtaPoly]:
    """Correctors u_k for 2 <= k <= k_max on one branch (odd orders are zero)."""
    h = 2.0 * geom.half_height(branch)
    out: dict[int, EtaPoly] = {}
    if k_max < 2:
        return out
    out[2] = compute_u2(geom, data, branch)
    for k in range(3, k_max + 1):
        if k % 2 == 1:
            out[k] = _zero(h)
        else:
            out[k] = next_even_corrector(out[k - 2])
    return out
