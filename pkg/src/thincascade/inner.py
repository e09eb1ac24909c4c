"""Stretched-coordinate expansion near the joint.

Works on the unit-thickness domain obtained by the 1/eps zoom: two straight
half-strips of heights h1 (left) and h2 (right) glued through the joint
profile, truncated at xi = +-L.  The expansion is driven by an order-by-order
pipeline:

  second-order branch solution -> order-1 joint field -> jump constant ->
  third-order branch solution -> order-2 joint field -> jump constant -> ...

Each joint field solves a pure-Neumann Poisson problem whose forcing is the
commutator of the Laplacian with smooth cutoffs applied to the branch
far-field polynomials; the data are arranged so that the total load balances
exactly (the flux-defect constants of the branch solutions are what make it
balance), which is asserted here with a semi-analytic integral.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .cutoffs import RampCutoff, inner_left_cutoff, inner_right_cutoff
from .fem import (
    FemField,
    Mesh,
    assemble_poisson,
    boundary_integral_nx,
    boundary_mean,
    solve,
    triangulate,
)
from .geometry import (
    GAMMA,
    TRUNC_LEFT,
    TRUNC_RIGHT,
    WALL_BOTTOM_1,
    WALL_BOTTOM_2,
    WALL_TOP_1,
    WALL_TOP_2,
    CascadeGeometry,
    inner_outline,
)
from .layers import FourierLayer, layer_from_trace
from .limit import (
    OmegaTerm,
    joint_weighted_load_integral,
    solve_higher_omega,
    solve_omega2,
    compute_d_star,
    transverse_moment,
)
from .problems import Poly1D, ProblemData
from .regular import EtaPoly, regular_correctors

__all__ = [
    "InnerConfig",
    "InnerOrderResult",
    "FluxConstantResult",
    "InnerExpansion",
    "NTerm",
    "inner_mesh",
    "psi_polynomial",
    "taylor_wall_flux",
    "build_inner_forcing",
    "solve_flux_constant",
    "solve_inner_order",
    "build_expansion",
]

_GLX, _GLW = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class InnerConfig:
    """Discretization knobs for the joint-region solves."""

    L: float | None = None          # truncation half-length (geometry default if None)
    h_factor: float = 16.0          # mesh size = h_min / h_factor
    n_modes: int = 32               # Fourier modes for the end layers
    cg_tol: float = 1e-12
    tri_quad: str = "dunavant5"
    edge_quad: int = 4


def inner_mesh(geom: CascadeGeometry, L: float, target_h: float) -> Mesh:
    """Mesh the truncated stretched domain, resolving the cutoff knots."""
    knots = (-(2.0 + geom.l / 2), -(1.0 + geom.l / 2), 1.0 + geom.l / 2, 2.0 + geom.l / 2)
    return triangulate(inner_outline(geom, L), target_h, extra_stations=knots)


def _branch_height(geom: CascadeGeometry, branch: int) -> float:
    return geom.h1 if branch == 1 else geom.h2


def psi_polynomial(
    geom: CascadeGeometry,
    data: ProblemData,
    branch: int,
    k: int,
    omega: dict[int, OmegaTerm],
    u: dict[tuple[int, int], EtaPoly],
) -> EtaPoly:
    """Far-field polynomial of order k on one branch of the stretched domain.

    Collects the joint-station Taylor data of the branch expansion: the
    linear growth fed by the next transmission solution, the k-th Taylor
    coefficient of the second-order one, and the x-derivatives of the
    transverse correctors.  Solves  Laplace(psi_k) = -taylor load of order k
    with wall fluxes equal to the Taylor wall data (checked in the tests).
    """
    h = _branch_height(geom, branch)
    if k == 0:
        return EtaPoly(coeffs=(Poly1D((0.0,)),), h=h)
    # eta_xi[j][p] multiplies eta^j xi^p
    eta_xi: dict[int, dict[int, float]] = {}

    def add(j: int, p: int, val: float) -> None:
        if val != 0.0:
            eta_xi.setdefault(j, {})[p] = eta_xi.setdefault(j, {}).get(p, 0.0) + val

    add(0, 1, omega[k + 1].d_at0(branch, 1))
    if k >= 2:
        add(0, k, omega[2].d_at0(branch, k) / factorial(k))
        for j in range(0, k - 1):
            u_term = u.get((branch, k - j))
            if u_term is None or u_term.is_zero():
                continue
            coeffs = u_term.x_deriv_coeffs_at0(j, requested_by=f"far-field polynomial {k}")
            for jp, c in enumerate(coeffs):
                add(jp, j, c / factorial(j))
    if not eta_xi:
        return EtaPoly(coeffs=(Poly1D((0.0,)),), h=h)
    n_eta = max(eta_xi) + 1
    coeffs = []
    for j in range(n_eta):
        by_p = eta_xi.get(j, {})
        if by_p:
            arr = [0.0] * (max(by_p) + 1)
            for p, v in by_p.items():
                arr[p] = v
            coeffs.append(Poly1D(tuple(arr)))
        else:
            coeffs.append(Poly1D((0.0,)))
    return EtaPoly(coeffs=tuple(coeffs), h=h)


def taylor_wall_flux(data: ProblemData, branch: int, k: int, side: str) -> Poly1D:
    """Order-k Taylor wall flux  xi^(k-2)/(k-2)! * phi^(k-2)(0)  as a xi-polynomial."""
    if k < 2:
        return Poly1D((0.0,))
    table = data.phi_plus if side == "+" else data.phi_minus
    val = table[branch - 1].deriv_at0(k - 2, requested_by=f"joint wall flux of order {k}")
    if val == 0.0:
        return Poly1D((0.0,))
    coeffs = [0.0] * (k - 1)
    coeffs[k - 2] = val / factorial(k - 2)
    return Poly1D(tuple(coeffs))


def _panel_integral(fn, a: float, b: float, knots: tuple[float, ...]) -> float:
    """16-point Gauss on each smooth piece of (a, b), split at interior knots."""
    pts = sorted({a, b, *[t for t in knots if a < t < b]})
    total = 0.0
    for lo, hi in zip(pts, pts[1:]):
        xi = 0.5 * (lo + hi) + 0.5 * (hi - lo) * _GLX
        total += 0.5 * (hi - lo) * float(np.sum(_GLW * fn(xi)))
    return total


class InnerForcing:
    """Right-hand data of one joint problem, with exact load bookkeeping."""

    def __init__(
        self,
        geom: CascadeGeometry,
        data: ProblemData,
        k: int,
        psi1: EtaPoly,
        psi2: EtaPoly,
        L: float,
    ) -> None:
        self.geom = geom
        self.data = data
        self.k = k
        self.L = L
        self.psi = {1: psi1, 2: psi2}
        self.dpsi = {1: psi1.x_derivative(1), 2: psi2.x_derivative(1)}
        self.chi = {1: inner_left_cutoff(geom.l), 2: inner_right_cutoff(geom.l)}
        # Taylor volume load of order k: fk_xi(xi) * sum_j fk_eta[j] eta^j
        if k >= 2:
            self.fk_eta = data.f_x_derivs_at0(k - 2, requested_by=f"joint load of order {k}")
            arr = [0.0] * (k - 1)
            arr[k - 2] = 1.0 / factorial(k - 2)
            self.fk_xi = Poly1D(tuple(arr))
        else:
            self.fk_eta = ()
            self.fk_xi = Poly1D((0.0,))
        self.tflux = {
            (b, s): taylor_wall_flux(data, b, k, s) for b in (1, 2) for s in ("+", "-")
        }

    # --- FEM data ---------------------------------------------------------

    def _fk(self, x, y):
        if not self.fk_eta or all(c == 0.0 for c in self.fk_eta):
            return np.zeros(np.broadcast(x, y).shape)
        out = np.zeros(np.broadcast(x, y).shape)
        for j, cj in enumerate(self.fk_eta):
            if cj != 0.0:
                out = out + cj * np.asarray(y) ** j
        return self.fk_xi(np.asarray(x)) * out

    def volume(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        chi1, chi2 = self.chi[1], self.chi[2]
        out = (
            self.psi[1].value(x, y) * chi1.d2(x)
            + 2.0 * self.dpsi[1].value(x, y) * chi1.d1(x)
            + self.psi[2].value(x, y) * chi2.d2(x)
            + 2.0 * self.dpsi[2].value(x, y) * chi2.d1(x)
        )
        return out + self._fk(x, y) * (1.0 - chi1.value(x) - chi2.value(x))

    def neumann_data(self) -> dict[str, object]:
        """Outward-flux data on the four wall groups (joint boundary stays zero)."""

        def wall(branch: int, side: str, sign: float):
            flux = self.tflux[(branch, side)]
            chi = self.chi[branch]
            if flux.is_zero():
                return None
            return lambda x, y: sign * flux(np.asarray(x)) * (1.0 - chi.value(x))

        out = {}
        for tag, branch, side, sign in (
            (WALL_TOP_1, 1, "+", -1.0),
            (WALL_BOTTOM_1, 1, "-", +1.0),
            (WALL_TOP_2, 2, "+", -1.0),
            (WALL_BOTTOM_2, 2, "-", +1.0),
        ):
            g = wall(branch, side, sign)
            if g is not None:
                out[tag] = g
        return out

    # --- exact load bookkeeping -------------------------------------------

    def _strip_pieces(self, branch: int, xi_weight: int):
        """1D integrals over one strip: cutoff commutator, Taylor load, wall flux."""
        geom = self.geom
        h = _branch_height(geom, branch)
        chi = self.chi[branch]
        if branch == 1:
            a, b = -self.L, -geom.l / 2
        else:
            a, b = geom.l / 2, self.L
        knots = (chi.lo, chi.hi)
        S = self.psi[branch].section_mean_poly() * h
        dS = S.derivative(1)
        w = (lambda xi: xi**xi_weight) if xi_weight else (lambda xi: 1.0)
        comm = _panel_integral(lambda xi: w(xi) * (chi.d2(xi) * S(xi) + 2.0 * chi.d1(xi) * dS(xi)), a, b, knots)
        sF = 0.0
        if self.fk_eta:
            sect = sum(
                cj * transverse_moment(h, j) for j, cj in enumerate(self.fk_eta) if cj != 0.0
            )
            if sect != 0.0:
                sF = _panel_integral(
                    lambda xi: w(xi) * self.fk_xi(xi) * sect * (1.0 - chi.value(xi)), a, b, knots
                )
        tp = self.tflux[(branch, "+")]
        tm = self.tflux[(branch, "-")]
        wallint = 0.0
        if not (tp.is_zero() and tm.is_zero()):
            wallint = _panel_integral(
                lambda xi: w(xi) * (-tp(xi) + tm(xi)) * (1.0 - chi.value(xi)), a, b, knots
            )
        return comm + sF + wallint

    def total_load(self, xi_weight: int = 0) -> float:
        """∫ (xi^w) F over the domain plus ∫ (xi^w) g over the walls, exactly.

        With w = 0 this is the solvability defect of the pure-Neumann joint
        problem: it vanishes identically when the transmission constants feed
        the far-field polynomials consistently.  With w = 1 it is the data
        part of the first-moment identity used to cross-check the jump
        constant.
        """
        total = self._strip_pieces(1, xi_weight) + self._strip_pieces(2, xi_weight)
        if self.k >= 2 and any(c != 0.0 for c in self.fk_eta):
            total += joint_weighted_load_integral(
                self.geom, self.data, self.k - 2, extra_xi_power=xi_weight,
                requested_by=f"joint load of order {self.k}",
            )
        return total


def build_inner_forcing(
    geom: CascadeGeometry,
    data: ProblemData,
    k: int,
    omega: dict[int, OmegaTerm],
    u: dict[tuple[int, int], EtaPoly],
    L: float,
) -> InnerForcing:
    psi1 = psi_polynomial(geom, data, 1, k, omega, u)
    psi2 = psi_polynomial(geom, data, 2, k, omega, u)
    return InnerForcing(geom, data, k, psi1, psi2, L)


def _face_flatness(field: FemField, tag: str) -> float:
    """Max deviation of the trace from its mean on one truncation face."""
    mesh = field.mesh
    nodes: set[int] = set()
    for (i, j), t in zip(mesh.boundary_edges, mesh.boundary_tags):
        if t == tag:
            nodes.add(int(i))
            nodes.add(int(j))
    vals = field.values[sorted(nodes)]
    return float(np.max(np.abs(vals - np.mean(vals)))) if len(vals) else 0.0


@dataclass(frozen=True)
class FluxConstantResult:
    """Output of the zero-order joint solve that measures the joint's defect."""

    field: FemField          # normalized: left face mean = -L/h1
    c0: float                # far-field offset between the two branch asymptotes
    L: float
    flat_left: float
    flat_right: float


def solve_flux_constant(
    geom: CascadeGeometry, mesh: Mesh, L: float, cg_tol: float = 1e-12
) -> FluxConstantResult:
    """Laplace field carrying unit section flux through the joint.

    No volume load and no wall flux; the truncation faces push/pull 1/h_i so
    the far fields are xi/h1 and c0 + xi/h2.  c0 is the geometry's scalar
    signature: zero for a straight pass-through, negative for a widened
    joint, positive for a constricted one.
    """
    system = assemble_poisson(
        mesh,
        neumann={TRUNC_LEFT: -1.0 / geom.h1, TRUNC_RIGHT: 1.0 / geom.h2},
    )
    raw = solve(system, tol=cg_tol)
    shift = boundary_mean(raw, {TRUNC_LEFT}) + L / geom.h1
    field = FemField(mesh, raw.values - shift, raw.solve_info)
    c0 = boundary_mean(field, {TRUNC_RIGHT}) - L / geom.h2
    return FluxConstantResult(
        field=field,
        c0=c0,
        L=L,
        flat_left=_face_flatness(field, TRUNC_LEFT),
        flat_right=_face_flatness(field, TRUNC_RIGHT),
    )


@dataclass(frozen=True)
class InnerOrderResult:
    """One solved joint problem and its extracted jump constant."""

    k: int
    field: FemField              # normalized: decays to 0 on the left face
    delta: float                 # right-face offset (the jump constant)
    delta_crosscheck: float      # first-moment-identity route to the same number
    compat_analytic: float       # exact total load (should vanish)
    compat_quadrature: float     # assembled right-hand-side sum (mesh-level)
    flat_left: float
    flat_right: float
    forcing: InnerForcing


def solve_inner_order(
    geom: CascadeGeometry,
    data: ProblemData,
    k: int,
    omega: dict[int, OmegaTerm],
    u: dict[tuple[int, int], EtaPoly],
    mesh: Mesh,
    L: float,
    cg_tol: float = 1e-12,
    tri_quad: str = "dunavant5",
    edge_quad: int = 4,
) -> InnerOrderResult:
    forcing = build_inner_forcing(geom, data, k, omega, u, L)
    compat = forcing.total_load(0)
    scale = max(abs(geom.h1), abs(geom.h2), 1.0) * L
    if abs(compat) > 1e-9 * scale:
        raise ValueError(
            f"joint problem of order {k} is unbalanced: total load {compat:.3e}; "
            "the transmission constants feeding the far fields are inconsistent"
        )
    system = assemble_poisson(
        mesh,
        volume_load=forcing.volume,
        neumann=forcing.neumann_data() or None,
        tri_quad=tri_quad,
        edge_quad=edge_quad,
    )
    raw = solve(system, tol=cg_tol)
    shift = boundary_mean(raw, {TRUNC_LEFT})
    field = FemField(mesh, raw.values - shift, raw.solve_info)
    delta = boundary_mean(field, {TRUNC_RIGHT})
    has_gamma = GAMMA in mesh.boundary_tags
    gamma_moment = boundary_integral_nx(field, {GAMMA}) if has_gamma else 0.0
    delta_cross = (forcing.total_load(1) - gamma_moment) / geom.h2
    return InnerOrderResult(
        k=k,
        field=field,
        delta=delta,
        delta_crosscheck=delta_cross,
        compat_analytic=compat,
        compat_quadrature=system.compat_defect,
        flat_left=_face_flatness(field, TRUNC_LEFT),
        flat_right=_face_flatness(field, TRUNC_RIGHT),
        forcing=forcing,
    )


@dataclass
class NTerm:
    """Order-k inner term: far-field polynomials glued to the joint field."""

    k: int
    L: float
    const: float
    delta: float
    psi1: EtaPoly
    psi2: EtaPoly
    chi1: RampCutoff
    chi2: RampCutoff
    field: FemField | None

    def __post_init__(self) -> None:
        self._dpsi1 = self.psi1.x_derivative(1)
        self._dpsi2 = self.psi2.x_derivative(1)
        self._epsi1 = self.psi1.eta_derivative()
        self._epsi2 = self.psi2.eta_derivative()

    def _masks(self, xi):
        inside = np.abs(xi) < self.L
        return inside, (~inside) & (xi > 0)

    def value(self, xi, eta):
        xi, eta = np.broadcast_arrays(
            np.asarray(xi, dtype=float), np.asarray(eta, dtype=float)
        )
        out = np.full(xi.shape, self.const, dtype=float)
        if self.k == 0:
            return out
        out += self.psi1.value(xi, eta) * self.chi1.value(xi)
        out += self.psi2.value(xi, eta) * self.chi2.value(xi)
        inside, right = self._masks(xi)
        if self.field is not None and np.any(inside):
            out[inside] += self.field.evaluate(xi[inside], eta[inside])
        out[right] += self.delta
        return out

    def gradient(self, xi, eta):
        xi, eta = np.broadcast_arrays(
            np.asarray(xi, dtype=float), np.asarray(eta, dtype=float)
        )
        dxi = np.zeros(xi.shape)
        deta = np.zeros(xi.shape)
        if self.k == 0:
            return dxi, deta
        c1, c2 = self.chi1.value(xi), self.chi2.value(xi)
        dxi += self.psi1.value(xi, eta) * self.chi1.d1(xi) + self._dpsi1.value(xi, eta) * c1
        dxi += self.psi2.value(xi, eta) * self.chi2.d1(xi) + self._dpsi2.value(xi, eta) * c2
        deta += self._epsi1.value(xi, eta) * c1 + self._epsi2.value(xi, eta) * c2
        inside, _ = self._masks(xi)
        if self.field is not None and np.any(inside):
            _, gx, gy = self.field.evaluate_with_gradient(xi[inside], eta[inside])
            dxi[inside] += gx
            deta[inside] += gy
        return dxi, deta


class InnerExpansion:
    """All joint-region data needed to assemble the composite field."""

    def __init__(
        self,
        geom: CascadeGeometry,
        data: ProblemData,
        m: int,
        L: float,
        mesh: Mesh,
        omega: dict[int, OmegaTerm],
        u: dict[tuple[int, int], EtaPoly],
        flux0: FluxConstantResult,
        orders: dict[int, InnerOrderResult],
        layers: dict[tuple[int, int], FourierLayer],
    ) -> None:
        self.geom = geom
        self.data = data
        self.m = m
        self.L = L
        self.mesh = mesh
        self.omega = omega
        self.u = u
        self.flux0 = flux0
        self.orders = orders
        self.layers = layers

    @property
    def c0(self) -> float:
        return self.flux0.c0

    def delta(self, k: int) -> float:
        return self.orders[k].delta

    def n_term(self, k: int) -> NTerm:
        if k == 0:
            zero = EtaPoly(coeffs=(Poly1D((0.0,)),), h=self.geom.h1)
            return NTerm(
                k=0, L=self.L, const=self.omega[2].at0(1), delta=0.0,
                psi1=zero, psi2=zero,
                chi1=inner_left_cutoff(self.geom.l), chi2=inner_right_cutoff(self.geom.l),
                field=None,
            )
        order = self.orders[k]
        return NTerm(
            k=k, L=self.L, const=self.omega[k + 2].at0(1), delta=order.delta,
            psi1=order.forcing.psi[1], psi2=order.forcing.psi[2],
            chi1=order.forcing.chi[1], chi2=order.forcing.chi[2],
            field=order.field,
        )

    def layer(self, branch: int, k: int) -> FourierLayer | None:
        return self.layers.get((branch, k))


def build_expansion(
    geom: CascadeGeometry,
    data: ProblemData,
    m: int = 1,
    config: InnerConfig | None = None,
) -> InnerExpansion:
    """Run the full pipeline up to composite order m (inner orders 0..2m)."""
    if m < 1:
        raise ValueError(f"expansion order m must be >= 1, got {m}")
    config = config or InnerConfig()
    L = config.L if config.L is not None else geom.default_truncation()
    if L < geom.l / 2 + 3.0:
        raise ValueError(
            f"truncation L={L} leaves no decay room beyond the cutoff window "
            f"ending at {2.0 + geom.l / 2}"
        )
    mesh = inner_mesh(geom, L, geom.h_min / config.h_factor)
    omega: dict[int, OmegaTerm] = {2: solve_omega2(geom, data)}
    u: dict[tuple[int, int], EtaPoly] = {}
    for branch in (1, 2):
        for k, term in regular_correctors(geom, data, branch, 2 * m).items():
            u[(branch, k)] = term
    flux0 = solve_flux_constant(geom, mesh, L, cg_tol=config.cg_tol)
    orders: dict[int, InnerOrderResult] = {}
    for k in range(1, 2 * m + 1):
        orders[k] = solve_inner_order(
            geom, data, k, omega, u, mesh, L,
            cg_tol=config.cg_tol, tri_quad=config.tri_quad, edge_quad=config.edge_quad,
        )
        omega[k + 2] = solve_higher_omega(
            geom, k + 2, compute_d_star(geom, data, k + 2), orders[k].delta
        )
    layers: dict[tuple[int, int], FourierLayer] = {}
    for branch in (1, 2):
        h = _branch_height(geom, branch)
        x_end = -1.0 if branch == 1 else 1.0
        for k in range(2, 2 * m + 1, 2):
            term = u[(branch, k)]
            if term.is_zero():
                layers[(branch, k)] = FourierLayer(h=h, cos_coeffs=(), sin_coeffs=())
                continue
            trace_coeffs = term.eta_poly_at(x_end)

            def trace(e, _c=trace_coeffs):
                out = np.zeros_like(np.asarray(e, dtype=float))
                for j, cj in enumerate(_c):
                    out += -cj * np.asarray(e) ** j
                return out

            layers[(branch, k)] = layer_from_trace(h, trace, n_modes=config.n_modes)
    return InnerExpansion(geom, data, m, L, mesh, omega, u, flux0, orders, layers)
