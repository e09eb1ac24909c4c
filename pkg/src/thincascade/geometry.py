"""Geometry of the thin two-branch cascade with a local joint.

The physical domain at thickness ``eps`` is the union of two thin strips

    branch 1:  (-1, -eps*l/2) x (-eps*h1/2, eps*h1/2)
    branch 2:  (eps*l/2, 1)   x (-eps*h2/2, eps*h2/2)

glued through the scaled joint ``eps * Xi0`` where

    Xi0 = { (xi, eta) : |xi| < l/2,  -lower(xi) < eta < upper(xi) }

and ``upper``/``lower`` are piecewise-linear positive profiles on [-l/2, l/2].
At the junction stations xi = -l/2 (resp. +l/2) the profiles may land above or
below the strip half-height h1/2 (resp. h2/2) — up to the full height h_i —
so the joint may be locally wider or narrower than the strips.  The inner
(stretched) domain used by the joint correctors is the same joint capped with
straight strip pieces and truncated at |xi| = L.

Everything here produces :class:`TaggedPolygon` outlines whose boundary edges
carry the tag vocabulary the FEM layer keys its boundary conditions on.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Boundary tag vocabulary.  Branch index is part of the tag so per-branch wall
# fluxes can be applied without geometric tests at assembly time.
DIRICHLET_LEFT = "dirichlet_left"
DIRICHLET_RIGHT = "dirichlet_right"
WALL_TOP_1 = "wall_top_1"
WALL_BOTTOM_1 = "wall_bottom_1"
WALL_TOP_2 = "wall_top_2"
WALL_BOTTOM_2 = "wall_bottom_2"
GAMMA = "gamma"
TRUNC_LEFT = "trunc_left"
TRUNC_RIGHT = "trunc_right"

WALL_TAGS = (WALL_TOP_1, WALL_BOTTOM_1, WALL_TOP_2, WALL_BOTTOM_2)

_TOL = 1e-12


class GeometryError(ValueError):
    """Invalid geometric data (profiles, polygons, parameters)."""


# ---------------------------------------------------------------------------
# Tagged polygons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaggedPolygon:
    """Simple CCW polygon; edge i runs vertices[i] -> vertices[i+1 mod n].

    ``edge_tags[i]`` names the boundary piece edge i belongs to.  Collinear
    consecutive edges are allowed (they mark tag changes or mesh stations).
    """

    vertices: np.ndarray
    edge_tags: tuple[str, ...]

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise GeometryError("polygon needs an (n,2) vertex array with n >= 3")
        object.__setattr__(self, "vertices", verts)
        if len(self.edge_tags) != verts.shape[0]:
            raise GeometryError("need exactly one tag per edge")
        scale = float(np.max(np.abs(verts))) or 1.0
        d = np.diff(np.vstack([verts, verts[:1]]), axis=0)
        if np.any(np.hypot(d[:, 0], d[:, 1]) <= _TOL * scale):
            raise GeometryError("polygon has a zero-length edge")
        if self.signed_area() <= 0:
            raise GeometryError("polygon vertices must be counter-clockwise")
        if self._self_intersects():
            raise GeometryError("polygon boundary self-intersects")

    def signed_area(self) -> float:
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def area(self) -> float:
        return abs(self.signed_area())

    def bbox(self) -> tuple[float, float, float, float]:
        v = self.vertices
        return (
            float(v[:, 0].min()),
            float(v[:, 0].max()),
            float(v[:, 1].min()),
            float(v[:, 1].max()),
        )

    def edges(self) -> np.ndarray:
        """(n, 2, 2) array of edge endpoint pairs."""
        v = self.vertices
        return np.stack([v, np.roll(v, -1, axis=0)], axis=1)

    def _self_intersects(self) -> bool:
        segs = self.edges()
        n = len(segs)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i or (j - i) % n == 1 or (i - j) % n == 1:
                    continue  # shared-endpoint neighbours
                if _segments_properly_intersect(segs[i], segs[j]):
                    return True
        return False


def _segments_properly_intersect(a, b) -> bool:
    """True if open segments a and b cross (proper intersection only)."""

    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d1 = orient(a[0], a[1], b[0])
    d2 = orient(a[0], a[1], b[1])
    d3 = orient(b[0], b[1], a[0])
    d4 = orient(b[0], b[1], a[1])
    return (d1 * d2 < 0) and (d3 * d4 < 0)


# ---------------------------------------------------------------------------
# Joint profiles and cascade geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointProfile:
    """Piecewise-linear joint half-boundaries on a shared breakpoint grid.

    ``upper(xi)`` is the top boundary height, ``lower(xi)`` the (positive)
    depth of the bottom boundary: the joint section at xi is
    (-lower(xi), upper(xi)).  Both must stay strictly positive.
    """

    xi: tuple[float, ...]
    upper: tuple[float, ...]
    lower: tuple[float, ...]

    def __post_init__(self):
        xi = tuple(float(v) for v in self.xi)
        up = tuple(float(v) for v in self.upper)
        lo = tuple(float(v) for v in self.lower)
        if not (len(xi) == len(up) == len(lo)) or len(xi) < 2:
            raise GeometryError("profile needs >= 2 aligned breakpoints")
        if any(b - a <= _TOL for a, b in zip(xi, xi[1:])):
            raise GeometryError("profile breakpoints must be strictly increasing")
        if any(v <= 0 for v in up) or any(v <= 0 for v in lo):
            raise GeometryError("profile heights must be strictly positive")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "lower", lo)

    def upper_at(self, xi):
        return np.interp(np.asarray(xi, dtype=float), self.xi, self.upper)

    def lower_at(self, xi):
        return np.interp(np.asarray(xi, dtype=float), self.xi, self.lower)

    def is_flat_at(self, level: float) -> bool:
        """True when both boundaries sit exactly at ``level`` everywhere."""
        return all(abs(v - level) <= _TOL for v in self.upper + self.lower)


@dataclass(frozen=True)
class CascadeGeometry:
    """Two strips of heights h1, h2 joined over |xi| < l/2 by a profile."""

    h1: float = 1.0
    h2: float = 1.0
    l: float = 1.0
    profile: JointProfile | None = None

    def __post_init__(self):
        if min(self.h1, self.h2, self.l) <= 0:
            raise GeometryError("h1, h2 and l must be positive")
        prof = self.profile
        if prof is None:
            prof = straight_profile(self.h1, self.h2, self.l)
            object.__setattr__(self, "profile", prof)
        if abs(prof.xi[0] + self.l / 2) > _TOL or abs(prof.xi[-1] - self.l / 2) > _TOL:
            raise GeometryError("profile must span exactly [-l/2, l/2]")
        # Junction compatibility: the joint may overshoot the strip wall, but
        # at most up to the full strip height.
        checks = (
            (prof.upper[0], self.h1), (prof.lower[0], self.h1),
            (prof.upper[-1], self.h2), (prof.lower[-1], self.h2),
        )
        if any(v > h + _TOL for v, h in checks):
            raise GeometryError("joint profile exceeds strip height at a junction")

    @property
    def h_min(self) -> float:
        return min(self.h1, self.h2)

    @property
    def h_max(self) -> float:
        return max(self.h1, self.h2)

    def half_height(self, branch: int) -> float:
        if branch not in (1, 2):
            raise GeometryError(f"branch must be 1 or 2, got {branch}")
        return (self.h1 if branch == 1 else self.h2) / 2.0

    def joint_area(self) -> float:
        """|Xi0|, exact (trapezoid rule is exact on piecewise-linear data)."""
        p = self.profile
        xi = np.asarray(p.xi)
        height = np.asarray(p.upper) + np.asarray(p.lower)
        return float(np.trapezoid(height, xi))

    def is_degenerate_rectangle(self) -> bool:
        """Joint indistinguishable from the strips (single straight strip)."""
        return (
            abs(self.h1 - self.h2) <= _TOL
            and self.profile.is_flat_at(self.h1 / 2.0)
        )

    def default_truncation(self) -> float:
        """Truncation half-length for the stretched joint domain."""
        return self.l / 2.0 + 4.0 * self.h_max + 2.0


def straight_profile(h1: float, h2: float, l: float) -> JointProfile:
    """Linear interpolation between the two strip half-heights."""
    return JointProfile(
        xi=(-l / 2.0, l / 2.0),
        upper=(h1 / 2.0, h2 / 2.0),
        lower=(h1 / 2.0, h2 / 2.0),
    )


def widening_profile(h1: float, h2: float, l: float, height: float | None = None) -> JointProfile:
    """Constant-height bulge; default bulges out to the smaller full height."""
    h = min(h1, h2) if height is None else float(height)
    return JointProfile(xi=(-l / 2.0, l / 2.0), upper=(h, h), lower=(h, h))


def narrowing_profile(h1: float, h2: float, l: float, throat: float | None = None) -> JointProfile:
    """Symmetric pinch: flush at the junctions, throat height at xi = 0."""
    n = min(h1, h2) / 4.0 if throat is None else float(throat)
    return JointProfile(
        xi=(-l / 2.0, 0.0, l / 2.0),
        upper=(h1 / 2.0, n, h2 / 2.0),
        lower=(h1 / 2.0, n, h2 / 2.0),
    )


def geometry_preset(name: str, h1: float = 1.0, h2: float = 1.0, l: float = 1.0,
                    **kwargs) -> CascadeGeometry:
    key = name.strip().lower()
    if key == "straight":
        prof = straight_profile(h1, h2, l)
    elif key == "widening":
        prof = widening_profile(h1, h2, l, kwargs.get("height"))
    elif key == "narrowing":
        prof = narrowing_profile(h1, h2, l, kwargs.get("throat"))
    else:
        raise GeometryError(f"unknown geometry preset {name!r}")
    return CascadeGeometry(h1=h1, h2=h2, l=l, profile=prof)


def load_profile(path: str | Path, l: float | None = None) -> JointProfile:
    """Read a profile table: lines of ``xi upper lower``, '#' comments.

    If ``l`` is given the breakpoint span is checked against [-l/2, l/2].
    """
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GeometryError(f"{path}:{lineno}: expected 'xi upper lower', got {raw!r}")
        try:
            rows.append(tuple(float(p) for p in parts))
        except ValueError as exc:
            raise GeometryError(f"{path}:{lineno}: non-numeric entry in {raw!r}") from exc
    if len(rows) < 2:
        raise GeometryError(f"{path}: profile needs at least two breakpoints")
    xi, up, lo = zip(*rows)
    prof = JointProfile(xi=xi, upper=up, lower=lo)
    if l is not None and (abs(prof.xi[0] + l / 2) > _TOL or abs(prof.xi[-1] - l / 2) > _TOL):
        raise GeometryError(f"{path}: breakpoints must span [-{l/2}, {l/2}]")
    return prof


# ---------------------------------------------------------------------------
# Outline builders
# ---------------------------------------------------------------------------

def scaled_outline(geom: CascadeGeometry, eps: float) -> TaggedPolygon:
    """Physical domain outline at thickness eps, Dirichlet ends at x = ±1."""
    if not 0 < eps < 2.0 / geom.l:
        raise GeometryError(f"need 0 < eps < {2.0 / geom.l} so the joint fits, got {eps}")
    return _cascade_outline(geom, scale=eps, x_left=-1.0, x_right=1.0,
                            left_tag=DIRICHLET_LEFT, right_tag=DIRICHLET_RIGHT)


def inner_outline(geom: CascadeGeometry, L: float | None = None) -> TaggedPolygon:
    """Stretched joint domain truncated at |xi| = L, truncation-face tags."""
    if L is None:
        L = geom.default_truncation()
    if L <= geom.l / 2.0:
        raise GeometryError(f"truncation L = {L} must exceed l/2 = {geom.l / 2.0}")
    return _cascade_outline(geom, scale=1.0, x_left=-L, x_right=L,
                            left_tag=TRUNC_LEFT, right_tag=TRUNC_RIGHT)


def _cascade_outline(geom: CascadeGeometry, scale: float, x_left: float,
                     x_right: float, left_tag: str, right_tag: str) -> TaggedPolygon:
    s = scale
    prof = geom.profile
    ha, hb = s * geom.h1 / 2.0, s * geom.h2 / 2.0
    xa, xb = -s * geom.l / 2.0, s * geom.l / 2.0

    if geom.is_degenerate_rectangle():
        # Flush joint: plain rectangle; walls split at x = 0 so each branch
        # still owns its own wall tags, and no joint-boundary edges exist.
        verts = np.array([
            (x_left, -ha), (0.0, -ha), (x_right, -ha),
            (x_right, ha), (0.0, ha), (x_left, ha),
        ])
        tags = (WALL_BOTTOM_1, WALL_BOTTOM_2, right_tag,
                WALL_TOP_2, WALL_TOP_1, left_tag)
        return TaggedPolygon(verts, tags)

    pts: list[tuple[float, float]] = [(x_left, -ha)]
    tags: list[str] = []

    def add(x: float, y: float, tag: str):
        px, py = pts[-1]
        if abs(x - px) <= _TOL and abs(y - py) <= _TOL:
            return  # zero-length (flush step): skip
        pts.append((x, y))
        tags.append(tag)

    # bottom: branch-1 wall, joint floor left-to-right, branch-2 wall
    add(xa, -ha, WALL_BOTTOM_1)
    for xi_b, lo in zip(prof.xi, prof.lower):
        add(s * xi_b, -s * lo, GAMMA)
    add(xb, -hb, GAMMA)
    add(x_right, -hb, WALL_BOTTOM_2)
    # right end, then top mirrored right-to-left
    add(x_right, hb, right_tag)
    add(xb, hb, WALL_TOP_2)
    for xi_b, up in zip(reversed(prof.xi), reversed(prof.upper)):
        add(s * xi_b, s * up, GAMMA)
    add(xa, ha, GAMMA)
    add(x_left, ha, WALL_TOP_1)
    # close with the left end
    tags.append(left_tag)
    return TaggedPolygon(np.array(pts), tuple(tags))


def domain_area(geom: CascadeGeometry, eps: float) -> float:
    """Exact physical area: two strips plus the scaled joint."""
    strip = eps * (geom.h1 + geom.h2) * (1.0 - eps * geom.l / 2.0)
    return strip + eps**2 * geom.joint_area()


def inner_area(geom: CascadeGeometry, L: float | None = None) -> float:
    """Exact area of the truncated stretched domain."""
    if L is None:
        L = geom.default_truncation()
    return (L - geom.l / 2.0) * (geom.h1 + geom.h2) + geom.joint_area()
