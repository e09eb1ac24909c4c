"""Geometry tests: outlines, tags, exact areas, profile files."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thincascade.geometry import (
    DIRICHLET_LEFT,
    DIRICHLET_RIGHT,
    GAMMA,
    TRUNC_LEFT,
    TRUNC_RIGHT,
    CascadeGeometry,
    GeometryError,
    JointProfile,
    TaggedPolygon,
    domain_area,
    geometry_preset,
    inner_area,
    inner_outline,
    load_profile,
    scaled_outline,
    straight_profile,
)


def shoelace(verts) -> float:
    """Independent area oracle (classic shoelace, written from scratch)."""
    total = 0.0
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return abs(total) / 2.0


def test_degenerate_straight_strip_is_rectangle():
    geom = geometry_preset("straight", h1=1.0, h2=1.0, l=1.0)
    poly = scaled_outline(geom, eps=0.1)
    xmin, xmax, ymin, ymax = poly.bbox()
    assert (xmin, xmax) == (-1.0, 1.0)
    assert ymin == pytest.approx(-0.05, abs=1e-15)
    assert ymax == pytest.approx(0.05, abs=1e-15)
    assert GAMMA not in poly.edge_tags
    # walls split at x = 0 so each branch owns its wall tags
    assert poly.edge_tags.count("wall_bottom_1") == 1
    assert poly.edge_tags.count("wall_bottom_2") == 1
    assert poly.area() == pytest.approx(0.2, rel=1e-14)
    assert poly.area() == pytest.approx(shoelace(poly.vertices), rel=1e-14)


def test_widening_outline_area_matches_formula():
    geom = geometry_preset("widening", h1=1.0, h2=1.0, l=1.0)
    assert geom.joint_area() == pytest.approx(2.0, rel=1e-14)
    for eps in (0.2, 0.1, 0.05):
        poly = scaled_outline(geom, eps)
        assert shoelace(poly.vertices) == pytest.approx(domain_area(geom, eps), rel=1e-13)
        assert poly.edge_tags.count(DIRICHLET_LEFT) == 1
        assert poly.edge_tags.count(DIRICHLET_RIGHT) == 1
        assert poly.edge_tags.count(GAMMA) >= 4  # two steps + floor/ceiling each side


def test_narrowing_outline_and_area():
    geom = geometry_preset("narrowing", h1=1.0, h2=0.5, l=1.0)
    # joint area: symmetric trapezoids, throat = min(h)/4 = 0.125
    # heights: at -l/2: 1.0 total, at 0: 0.25, at l/2: 0.5
    expected = 0.5 * (1.0 + 0.25) / 2 + 0.5 * (0.25 + 0.5) / 2
    assert geom.joint_area() == pytest.approx(expected, rel=1e-14)
    poly = scaled_outline(geom, 0.1)
    assert shoelace(poly.vertices) == pytest.approx(domain_area(geom, 0.1), rel=1e-13)


def test_inner_outline_default_truncation():
    geom = geometry_preset("widening")
    L = geom.default_truncation()
    assert L == pytest.approx(6.5)
    poly = inner_outline(geom)
    xmin, xmax, _, _ = poly.bbox()
    assert (xmin, xmax) == (-L, L)
    assert TRUNC_LEFT in poly.edge_tags and TRUNC_RIGHT in poly.edge_tags
    assert shoelace(poly.vertices) == pytest.approx(inner_area(geom), rel=1e-13)
    assert inner_area(geom) == pytest.approx((6.5 - 0.5) * 2.0 + 2.0, rel=1e-14)


def test_asymmetric_profile_outline():
    prof = JointProfile(xi=(-0.5, 0.0, 0.5), upper=(0.5, 0.9, 0.5), lower=(0.4, 0.2, 0.25))
    geom = CascadeGeometry(h1=1.0, h2=0.5, l=1.0, profile=prof)
    eps = 0.1
    poly = scaled_outline(geom, eps)
    _, _, ymin, ymax = poly.bbox()
    assert ymax == pytest.approx(eps * 0.9, rel=1e-14)
    assert ymin == pytest.approx(-eps * 0.5, rel=1e-14)  # branch-1 floor is lowest
    assert shoelace(poly.vertices) == pytest.approx(domain_area(geom, eps), rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_area_identity_random_profiles(data):
    """Shoelace area of the built outline equals the closed-form area."""
    h1 = data.draw(st.floats(0.3, 2.0), label="h1")
    h2 = data.draw(st.floats(0.3, 2.0), label="h2")
    l = data.draw(st.floats(0.5, 2.0), label="l")
    n_mid = data.draw(st.integers(0, 3), label="interior breakpoints")
    xi = [-l / 2] + sorted(
        data.draw(
            st.lists(st.floats(-l / 2 + 0.05, l / 2 - 0.05), min_size=n_mid,
                     max_size=n_mid, unique=True),
            label="xi",
        )
    ) + [l / 2]
    if any(b - a < 1e-3 for a, b in zip(xi, xi[1:])):
        return  # skip degenerate spacing draws
    def draw_heights(name, h_left, h_right):
        vals = [data.draw(st.floats(0.05, 3.0), label=f"{name}{k}") for k in range(len(xi))]
        vals[0] = min(vals[0], h_left)       # junction compatibility
        vals[-1] = min(vals[-1], h_right)
        return vals
    prof = JointProfile(xi=tuple(xi),
                        upper=tuple(draw_heights("up", h1, h2)),
                        lower=tuple(draw_heights("lo", h1, h2)))
    geom = CascadeGeometry(h1=h1, h2=h2, l=l, profile=prof)
    eps = data.draw(st.floats(0.02, 0.3), label="eps")
    poly = scaled_outline(geom, eps)
    assert shoelace(poly.vertices) == pytest.approx(domain_area(geom, eps), rel=1e-11)
    inner = inner_outline(geom)
    assert shoelace(inner.vertices) == pytest.approx(inner_area(geom), rel=1e-11)


def test_profile_validation():
    with pytest.raises(GeometryError):
        JointProfile(xi=(0.5, -0.5), upper=(1.0, 1.0), lower=(1.0, 1.0))
    with pytest.raises(GeometryError):
        JointProfile(xi=(-0.5, 0.5), upper=(1.0, -1.0), lower=(1.0, 1.0))
    with pytest.raises(GeometryError):
        JointProfile(xi=(-0.5,), upper=(1.0,), lower=(1.0,))
    # span mismatch against l
    prof = JointProfile(xi=(-0.4, 0.4), upper=(0.5, 0.5), lower=(0.5, 0.5))
    with pytest.raises(GeometryError):
        CascadeGeometry(h1=1.0, h2=1.0, l=1.0, profile=prof)
    # joint overshooting the full strip height is invalid
    tall = JointProfile(xi=(-0.5, 0.5), upper=(1.2, 0.5), lower=(0.5, 0.5))
    with pytest.raises(GeometryError):
        CascadeGeometry(h1=1.0, h2=1.0, l=1.0, profile=tall)
    with pytest.raises(GeometryError):
        CascadeGeometry(h1=-1.0, h2=1.0, l=1.0)
    with pytest.raises(GeometryError):
        scaled_outline(CascadeGeometry(), eps=3.0)  # joint would not fit


def test_polygon_validation():
    square = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    tags = ("b", "r", "t", "l")
    TaggedPolygon(square, tags)  # fine
    with pytest.raises(GeometryError):
        TaggedPolygon(square[::-1].copy(), tags)  # clockwise
    with pytest.raises(GeometryError):
        TaggedPolygon(square, tags[:3])  # tag count
    bowtie = np.array([(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)])
    with pytest.raises(GeometryError):
        TaggedPolygon(bowtie, tags)
    dup = np.array([(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (1.0, 1.0)])
    with pytest.raises(GeometryError):
        TaggedPolygon(dup, tags)


def test_load_profile_roundtrip(tmp_path):
    path = tmp_path / "prof.txt"
    path.write_text(
        "# joint profile: xi upper lower\n"
        "-0.5  0.5  0.5\n"
        " 0.0  0.8  0.3   # bulge up, pinch down\n"
        " 0.5  0.25 0.25\n"
    )
    prof = load_profile(path, l=1.0)
    assert prof.xi == (-0.5, 0.0, 0.5)
    assert prof.upper == (0.5, 0.8, 0.25)
    assert prof.lower == (0.5, 0.3, 0.25)
    assert prof.upper_at(0.25) == pytest.approx(0.525)
    bad = tmp_path / "bad.txt"
    bad.write_text("-0.5 0.5\n0.5 0.5\n")
    with pytest.raises(GeometryError):
        load_profile(bad)
    nonnum = tmp_path / "nn.txt"
    nonnum.write_text("-0.5 a 0.5\n0.5 0.5 0.5\n")
    with pytest.raises(GeometryError):
        load_profile(nonnum)


def test_straight_profile_interpolates_heights():
    prof = straight_profile(1.0, 0.5, 1.0)
    assert prof.upper_at(0.0) == pytest.approx(0.375)
    geom = CascadeGeometry(h1=1.0, h2=0.5, l=1.0, profile=prof)
    assert not geom.is_degenerate_rectangle()
    poly = scaled_outline(geom, 0.1)
    assert GAMMA in poly.edge_tags  # tapered joint keeps its own boundary
