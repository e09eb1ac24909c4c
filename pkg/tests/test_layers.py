"""Boundary-layer tests: mode recovery, harmonicity, wall flux, decay."""

from __future__ import annotations

import numpy as np
import pytest

from thincascade.layers import FourierLayer, LayerError, layer_from_trace


def test_single_mode_recovery():
    h = 1.3
    layer = layer_from_trace(h, lambda e: np.cos(2 * np.pi * e / h))
    assert layer.cos_coeffs[0] == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(layer.cos_coeffs[1:])) <= 1e-12
    assert np.max(np.abs(layer.sin_coeffs)) <= 1e-12
    layer = layer_from_trace(h, lambda e: 0.5 * np.sin(3 * np.pi * e / h))
    assert layer.sin_coeffs[1] == pytest.approx(0.5, abs=1e-12)
    assert layer.decay_rate == pytest.approx(3 * np.pi / h)


def test_trace_reproduction_smooth():
    h = 0.8
    def trace(e):
        return np.sin(np.pi * e / h) + 0.3 * np.cos(4 * np.pi * e / h)
    layer = layer_from_trace(h, trace)
    eta = np.linspace(-h / 2, h / 2, 33)
    assert np.allclose(layer.trace_values(eta), trace(eta), atol=1e-12)


def test_polynomial_trace_converges_in_section_mean_square():
    # zero-mean polynomial trace: Fourier sum converges, faster with more modes
    h = 1.0
    trace = lambda e: e  # zero mean on (-1/2, 1/2)
    eta = np.linspace(-h / 2 + 1e-3, h / 2 - 1e-3, 501)
    errs = []
    for n in (8, 32, 128):
        layer = layer_from_trace(h, trace, n_modes=n)
        errs.append(np.sqrt(np.mean((layer.trace_values(eta) - trace(eta)) ** 2)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] <= 5e-3


def test_harmonic_via_fd_laplacian():
    layer = layer_from_trace(1.1, lambda e: np.sin(np.pi * e / 1.1) + np.cos(2 * np.pi * e / 1.1))
    d = 1e-4
    for zeta, eta in ((0.3, 0.1), (0.7, -0.4), (1.5, 0.0)):
        lap = (
            layer.value(zeta + d, eta) + layer.value(zeta - d, eta)
            + layer.value(zeta, eta + d) + layer.value(zeta, eta - d)
            - 4 * layer.value(zeta, eta)
        ) / d**2
        assert abs(lap) <= 1e-5


def test_gradient_matches_fd_and_wall_flux_vanishes():
    h = 0.9
    layer = layer_from_trace(h, lambda e: np.sin(np.pi * e / h) - 0.2 * np.cos(2 * np.pi * e / h))
    d = 1e-6
    for zeta, eta in ((0.2, 0.11), (1.0, -0.3)):
        dz, de = layer.gradient(zeta, eta)
        fd_z = (layer.value(zeta + d, eta) - layer.value(zeta - d, eta)) / (2 * d)
        fd_e = (layer.value(zeta, eta + d) - layer.value(zeta, eta - d)) / (2 * d)
        assert dz == pytest.approx(fd_z, abs=1e-7)
        assert de == pytest.approx(fd_e, abs=1e-7)
    # zero Neumann data on the lateral walls, at several depths
    zeta = np.linspace(0.0, 2.0, 9)
    for wall in (h / 2, -h / 2):
        _, de = layer.gradient(zeta, wall)
        assert np.max(np.abs(de)) <= 1e-12


def test_decay_bound():
    h = 1.0
    layer = layer_from_trace(h, lambda e: np.sin(np.pi * e / h) + 0.4 * np.cos(2 * np.pi * e / h))
    eta = np.linspace(-h / 2, h / 2, 41)
    a = np.max(np.abs(layer.value(1.0, eta)))
    b = np.max(np.abs(layer.value(2.0, eta)))
    assert b <= a * np.exp(-np.pi / h) * 1.05
    assert layer.decay_rate == pytest.approx(np.pi / h)


def test_constant_trace_rejected():
    with pytest.raises(LayerError):
        layer_from_trace(1.0, lambda e: np.ones_like(e))
    # tiny mean relative to size passes
    layer = layer_from_trace(1.0, lambda e: np.sin(np.pi * e) + 1e-14)
    assert not layer.is_zero()


def test_zero_layer():
    layer = FourierLayer(h=1.0, cos_coeffs=(0.0,), sin_coeffs=(0.0, 0.0))
    assert layer.is_zero()
    assert layer.decay_rate == np.inf
    assert np.all(layer.value(np.array([0.0, 1.0]), 0.25) == 0.0)
