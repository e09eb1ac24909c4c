"""Composite-field tests: exact end conditions, region consistency, gradients."""

from __future__ import annotations

import numpy as np
import pytest

from thincascade.composite import CompositeConfig, CompositeField
from thincascade.geometry import geometry_preset
from thincascade.inner import InnerConfig, build_expansion
from thincascade.problems import Poly1D, ProblemData, preset


def eta_data() -> ProblemData:
    """Transverse load with wall fluxes, so correctors and layers are alive."""
    return ProblemData(
        f_eta=(Poly1D((0.0,)), Poly1D((1.0, 0.5))),
        phi_plus=(Poly1D((0.2,)), Poly1D((0.1,))),
        phi_minus=(Poly1D((0.0, 0.3)), Poly1D((0.0,))),
    )


@pytest.fixture(scope="module")
def straight_tp1():
    geom = geometry_preset("straight")
    return build_expansion(geom, preset("tp1"), m=1, config=InnerConfig(h_factor=12.0))


@pytest.fixture(scope="module")
def straight_eta():
    geom = geometry_preset("straight")
    return build_expansion(geom, eta_data(), m=1, config=InnerConfig(h_factor=12.0))


def test_straight_uniform_load_reproduces_parabola(straight_tp1):
    """f = 1 on a straight cascade: the exact solution is the limit parabola,
    and every correction the composite adds must cancel to mesh accuracy."""
    eps = 0.1
    comp = CompositeField(straight_tp1, eps)
    x = np.linspace(-1.0, 1.0, 41)
    y = np.full_like(x, 0.2 * eps)
    val, gx, gy = comp.value_and_gradient(x, y)
    assert np.max(np.abs(val - (1 - x**2) / 2)) <= 5e-4
    # the x-gradient inherits the piecewise-constant joint-field gradient,
    # first-order in the joint mesh size (measured: halves per refinement)
    assert np.max(np.abs(gx + x)) <= 5e-2
    assert np.max(np.abs(gy)) <= 5e-3


def test_exact_zero_at_clamped_ends(straight_eta):
    """With live transverse correctors the end layers must cancel the branch
    traces so the composite vanishes identically at x = -+1."""
    exp = straight_eta
    assert not exp.u[(1, 2)].is_zero()
    for eps in (0.05, 0.12):
        comp = CompositeField(exp, eps)
        y = np.linspace(-0.49, 0.49, 9) * eps
        for xend in (-1.0, 1.0):
            vals = comp.value(np.full_like(y, xend), y)
            assert np.max(np.abs(vals)) <= 5e-4, (eps, xend)
        # ... and without the layer correction the trace would NOT vanish
        u2 = exp.u[(1, 2)]
        raw = eps**2 * u2.value(-1.0, y / eps)
        assert np.max(np.abs(raw)) > 50 * np.max(np.abs(
            comp.value(np.full_like(y, -1.0), y)))


def test_region_consistency(straight_eta):
    exp = straight_eta
    eps = 0.08
    comp = CompositeField(exp, eps)
    alpha = comp.config.alpha
    inner_edge = exp.geom.l * eps**alpha
    # deep inside the window: pure joint sum
    x0 = 0.5 * inner_edge
    y0 = 0.1 * eps
    expect = sum(
        eps**k * exp.n_term(k).value(np.array([x0 / eps]), np.array([y0 / eps]))[0]
        for k in range(3)
    )
    assert comp.value(np.array([x0]), np.array([y0]))[0] == pytest.approx(expect, abs=1e-12)
    # far outside: pure branch sum (layers negligible mid-domain)
    x1 = -0.6
    u2 = exp.u[(1, 2)]
    expect = (
        exp.omega[2].value(x1, 1)
        + eps * exp.omega[3].value(x1, 1)
        + eps**2 * (exp.omega[4].value(x1, 1) + u2.value(x1, y0 / eps))
    )
    assert comp.value(np.array([x1]), np.array([y0]))[0] == pytest.approx(expect, abs=1e-9)


def test_gradient_matches_fd(straight_eta):
    eps = 0.1
    comp = CompositeField(straight_eta, eps)
    rng = np.random.default_rng(7)
    # probe every zone: branch, ramp, plateau, end-layer support
    alpha = comp.config.alpha
    probes = [-0.95, -0.6, -1.7 * eps**alpha, -1.2 * eps**alpha, 0.4 * eps**alpha,
              1.5 * eps**alpha, 0.3, 0.85]
    d = 1e-7
    for x0 in probes:
        y0 = float(rng.uniform(-0.3, 0.3)) * eps
        v, gx, gy = comp.value_and_gradient(np.array([x0]), np.array([y0]))
        fx = (comp.value(np.array([x0 + d]), np.array([y0]))[0]
              - comp.value(np.array([x0 - d]), np.array([y0]))[0]) / (2 * d)
        fy = (comp.value(np.array([x0]), np.array([y0 + d]))[0]
              - comp.value(np.array([x0]), np.array([y0 - d]))[0]) / (2 * d)
        assert gx[0] == pytest.approx(fx, rel=1e-4, abs=5e-4), x0
        assert gy[0] == pytest.approx(fy, rel=1e-4, abs=5e-4), x0


def test_window_guards(straight_tp1):
    with pytest.raises(ValueError, match="window exponent"):
        CompositeField(straight_tp1, 0.1, CompositeConfig(alpha=0.5))
    with pytest.raises(ValueError, match="thickness"):
        CompositeField(straight_tp1, 1.5)
    with pytest.raises(ValueError, match="colliding"):
        CompositeField(straight_tp1, 0.35)


def test_smaller_eps_shrinks_window(straight_tp1):
    c1 = CompositeField(straight_tp1, 0.2)
    c2 = CompositeField(straight_tp1, 0.05)
    assert c2.chi_joint.outer_r < c1.chi_joint.outer_r
    # window (stretched) grows as eps decreases but stays inside L
    assert c2.chi_joint.outer_r / 0.05 > c1.chi_joint.outer_r / 0.2
    assert c2.chi_joint.outer_r / 0.05 <= straight_tp1.L
