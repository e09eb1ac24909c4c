"""Problem data for the thin cascade: volume load and wall flux tables.

The volume load is separated in the transverse variable,

    f(x, eta) = sum_j c_j(x) * eta**j,

with each coefficient c_j a polynomial in x, and the wall fluxes phi_plus /
phi_minus (one pair per branch) are polynomials in x as well.  Keeping the
x-dependence polynomial means every derivative-at-zero the expansion needs is
exact, every effective load downstream stays a polynomial, and problem data
round-trips through config files and pickles (parallel study workers rebuild
problems from plain tuples).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np


class CapabilityError(ValueError):
    """Raised when data cannot supply a derivative order that was requested.

    Carries the name of the computation that needed the derivative so the
    caller can see which part of the expansion hit the cap.
    """

    def __init__(self, message: str, *, requested_by: str = "", order: int | None = None):
        super().__init__(message)
        self.requested_by = requested_by
        self.order = order


def _trim(coeffs: tuple[float, ...]) -> tuple[float, ...]:
    """Drop trailing zero coefficients, keeping at least one entry."""
    cs = list(coeffs)
    while len(cs) > 1 and cs[-1] == 0.0:
        cs.pop()
    return tuple(float(c) for c in cs)


def _merge_caps(a: int | None, b: int | None) -> int | None:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


@dataclass(frozen=True)
class Poly1D:
    """Polynomial in x with exact derivatives, ascending coefficients.

    ``oracle_order`` caps the derivative order that :meth:`deriv_at0` will
    serve (None = unlimited).  The cap models problem data whose smoothness
    is only certified up to a finite order; computations that need more must
    fail loudly rather than silently use garbage.
    """

    coeffs: tuple[float, ...] = (0.0,)
    oracle_order: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _trim(tuple(self.coeffs)))

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return self.coeffs == (0.0,)

    def derivative(self, n: int = 1) -> "Poly1D":
        cs = self.coeffs
        for _ in range(n):
            cs = tuple((k + 1) * cs[k + 1] for k in range(len(cs) - 1)) or (0.0,)
        cap = None if self.oracle_order is None else max(self.oracle_order - n, 0)
        return Poly1D(cs, oracle_order=cap)

    def deriv_at0(self, n: int, *, requested_by: str = "") -> float:
        """n-th derivative at x = 0; exact from the coefficient table."""
        if n < 0:
            raise ValueError(f"derivative order must be >= 0, got {n}")
        if self.oracle_order is not None and n > self.oracle_order:
            raise CapabilityError(
                f"derivative of order {n} requested"
                + (f" by {requested_by}" if requested_by else "")
                + f", but data only certifies orders <= {self.oracle_order}",
                requested_by=requested_by,
                order=n,
            )
        if n >= len(self.coeffs):
            return 0.0
        return float(self.coeffs[n]) * factorial(n)

    def antiderivative(self) -> "Poly1D":
        # Integrating raises the certified Taylor order by one: the (n+1)-th
        # derivative of the antiderivative is the n-th derivative of self.
        cs = (0.0,) + tuple(c / (k + 1) for k, c in enumerate(self.coeffs))
        cap = None if self.oracle_order is None else self.oracle_order + 1
        return Poly1D(cs, oracle_order=cap)

    def __add__(self, other: "Poly1D") -> "Poly1D":
        a, b = self.coeffs, other.coeffs
        n = max(len(a), len(b))
        cs = tuple(
            (a[k] if k < len(a) else 0.0) + (b[k] if k < len(b) else 0.0) for k in range(n)
        )
        return Poly1D(cs, oracle_order=_merge_caps(self.oracle_order, other.oracle_order))

    def __sub__(self, other: "Poly1D") -> "Poly1D":
        return self + other * (-1.0)

    def __mul__(self, s) -> "Poly1D":
        if isinstance(s, Poly1D):
            cs = np.polynomial.polynomial.polymul(self.coeffs, s.coeffs)
            return Poly1D(tuple(cs), oracle_order=_merge_caps(self.oracle_order, s.oracle_order))
        return Poly1D(tuple(c * float(s) for c in self.coeffs), oracle_order=self.oracle_order)

    __rmul__ = __mul__


@dataclass(frozen=True)
class ProblemData:
    """Volume load f(x,eta) = sum_j f_eta[j](x) eta^j plus wall flux tables.

    ``phi_plus[i]`` / ``phi_minus[i]`` are the top / bottom wall fluxes of
    branch i+1 (i = 0 left, i = 1 right).  Sign convention: the wall condition
    is  -du/dy = eps * phi  on both walls, so in outward-normal form the top
    wall carries -phi_plus and the bottom wall +phi_minus.
    """

    f_eta: tuple[Poly1D, ...] = (Poly1D((0.0,)),)
    phi_plus: tuple[Poly1D, Poly1D] = (Poly1D((0.0,)), Poly1D((0.0,)))
    phi_minus: tuple[Poly1D, Poly1D] = (Poly1D((0.0,)), Poly1D((0.0,)))
    name: str = "custom"

    def __post_init__(self):
        if len(self.f_eta) < 1:
            raise ValueError("f_eta needs at least the eta^0 coefficient")
        if len(self.phi_plus) != 2 or len(self.phi_minus) != 2:
            raise ValueError("phi tables carry exactly one entry per branch")

    # -- volume load -------------------------------------------------------

    def f(self, x, eta):
        """Evaluate f at (x, eta); broadcasts over numpy arrays."""
        x = np.asarray(x, dtype=float)
        eta = np.asarray(eta, dtype=float)
        out = np.zeros(np.broadcast(x, eta).shape)
        for j, cj in enumerate(self.f_eta):
            out = out + cj(x) * eta**j
        return out

    def f_x_derivs_at0(self, p: int, *, requested_by: str = "") -> tuple[float, ...]:
        """eta-polynomial coefficients of (d/dx)^p f at x = 0 (ascending)."""
        return tuple(cj.deriv_at0(p, requested_by=requested_by) for cj in self.f_eta)

    def is_zero(self) -> bool:
        return (
            all(c.is_zero() for c in self.f_eta)
            and all(p.is_zero() for p in self.phi_plus)
            and all(p.is_zero() for p in self.phi_minus)
        )

    def f_depends_on_eta(self) -> bool:
        return any(not c.is_zero() for c in self.f_eta[1:])

    def has_wall_flux(self) -> bool:
        return any(not p.is_zero() for p in self.phi_plus + self.phi_minus)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def preset(name: str, oracle_order: int | None = None) -> ProblemData:
    """Build one of the named test problems.

    tp0: f = 0, phi = 0            (everything identically zero)
    tp1: f = 1, phi = 0            (quadratic limit profile, zero interior terms)
    tp2: f = x, phi = 0            (odd limit profile with nonzero joint slope)
    tp3: f = eta*(1 + x/2), phi=0  (zero limit profile, pure transverse content)
    """
    key = name.strip().lower()
    zero = Poly1D((0.0,), oracle_order=oracle_order)

    def poly(*coeffs):
        return Poly1D(tuple(coeffs), oracle_order=oracle_order)

    pairs = (zero, zero)
    if key == "tp0":
        return ProblemData((zero,), pairs, pairs, name="tp0")
    if key == "tp1":
        return ProblemData((poly(1.0),), pairs, pairs, name="tp1")
    if key == "tp2":
        return ProblemData((poly(0.0, 1.0),), pairs, pairs, name="tp2")
    if key == "tp3":
        return ProblemData((zero, poly(1.0, 0.5)), pairs, pairs, name="tp3")
    raise ValueError(f"unknown problem preset {name!r}")
