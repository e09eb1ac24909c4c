"""P1 finite elements on tagged x-monotone polygons.

The mesher is a column ladder: vertical node columns are placed at every
polygon-vertex x (plus caller-supplied stations, plus uniform fill at the
target spacing), each column is subdivided through the mandatory section
heights at that station, and adjacent columns are stitched with a two-pointer
ladder strip.  That buys three properties the verification layer leans on:

* deterministic output (no randomized point insertion),
* exact alignment of mesh stations with joint breakpoints and cutoff knots,
  so piecewise-polynomial loads integrate exactly under a fixed-degree rule,
* nested uniform refinement (Richardson pairs share the coarse nodes).

Only x-monotone polygons are supported; anything else raises MeshError.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .geometry import TaggedPolygon

_TOL = 1e-10


class MeshError(RuntimeError):
    """Meshing failed (non-monotone outline, quality floor, lost boundary)."""


class SolverError(RuntimeError):
    """Linear solve failed to converge; carries the residual history."""

    def __init__(self, message: str, history: list[float] | None = None):
        super().__init__(message)
        self.history = history or []


# ---------------------------------------------------------------------------
# Quadrature tables
# ---------------------------------------------------------------------------

def _perm3(a: float, b: float) -> list[tuple[float, float, float]]:
    return [(a, b, b), (b, a, b), (b, b, a)]


def _perm6(a: float, b: float, c: float) -> list[tuple[float, float, float]]:
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


# Barycentric points and weights (weights sum to 1, scale by triangle area).
TRI_QUAD: dict[str, tuple[np.ndarray, np.ndarray]] = {}

# degree 2: edge midpoints
TRI_QUAD["midpoint3"] = (
    np.array([(0.5, 0.5, 0.0), (0.0, 0.5, 0.5), (0.5, 0.0, 0.5)]),
    np.array([1.0 / 3.0] * 3),
)

# degree 5, 7 points
_d5_pts = [(1 / 3, 1 / 3, 1 / 3)]
_d5_pts += _perm3(0.059715871789770, 0.470142064105115)
_d5_pts += _perm3(0.797426985353087, 0.101286507323456)
TRI_QUAD["dunavant5"] = (
    np.array(_d5_pts),
    np.array([0.225]
             + [0.132394152788506] * 3
             + [0.125939180544827] * 3),
)

# degree 7, 13 points (negative centre weight is standard for this rule)
_d7_pts = [(1 / 3, 1 / 3, 1 / 3)]
_d7_pts += _perm3(0.479308067841923, 0.260345966079038)
_d7_pts += _perm3(0.869739794195568, 0.065130102902216)
_d7_pts += _perm6(0.638444188569809, 0.312865496004875, 0.048690315425316)
TRI_QUAD["dunavant7"] = (
    np.array(_d7_pts),
    np.array([-0.149570044467670]
             + [0.175615257433204] * 3
             + [0.053347235608839] * 3
             + [0.077113760890257] * 6),
)

# 1D Gauss rules on [-1, 1] for edge loads
EDGE_QUAD: dict[int, tuple[np.ndarray, np.ndarray]] = {
    2: (np.array([-1 / np.sqrt(3.0), 1 / np.sqrt(3.0)]), np.array([1.0, 1.0])),
    4: (
        np.array([-0.8611363115940526, -0.33998104358485626,
                  0.33998104358485626, 0.8611363115940526]),
        np.array([0.34785484513745385, 0.6521451548625461,
                  0.6521451548625461, 0.34785484513745385]),
    ),
}


# ---------------------------------------------------------------------------
# Mesh container
# ---------------------------------------------------------------------------

class Mesh:
    """Triangle mesh with tagged boundary edges and cached P1 geometry."""

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray,
                 boundary_edges: np.ndarray, boundary_tags: list[str]):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int32)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int32)
        self.boundary_tags = list(boundary_tags)
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise MeshError("one tag per boundary edge required")
        self._areas: np.ndarray | None = None
        self._grads: np.ndarray | None = None
        self._tri_obj = None
        self._finder = None
        self._edge_tri: dict[tuple[int, int], int] | None = None

    # -- cached P1 geometry -------------------------------------------------

    def areas(self) -> np.ndarray:
        if self._areas is None:
            v = self.vertices[self.triangles]
            e1 = v[:, 1] - v[:, 0]
            e2 = v[:, 2] - v[:, 0]
            self._areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        return self._areas

    def grads(self) -> np.ndarray:
        """(ntri, 3, 2) gradients of the three barycentric shape functions."""
        if self._grads is None:
            v = self.vertices[self.triangles]
            a2 = 2.0 * self.areas()[:, None]
            g = np.empty((len(self.triangles), 3, 2))
            for i in range(3):
                j, k = (i + 1) % 3, (i + 2) % 3
                g[:, i, 0] = (v[:, j, 1] - v[:, k, 1]) / a2[:, 0]
                g[:, i, 1] = (v[:, k, 0] - v[:, j, 0]) / a2[:, 0]
            self._grads = g
        return self._grads

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def quality(self) -> dict[str, float]:
        v = self.vertices[self.triangles]
        e = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]])
        lengths = np.hypot(e[..., 0], e[..., 1])
        min_angle = np.inf
        for i in range(3):
            a, b = e[(i + 2) % 3], e[i]
            dot = -(a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1])
            cr = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
            ang = np.degrees(np.arctan2(cr, dot))
            min_angle = min(min_angle, float(ang.min()))
        return {
            "min_angle_deg": min_angle,
            "max_edge": float(lengths.max()),
            "n_vertices": float(self.n_vertices),
            "n_triangles": float(len(self.triangles)),
        }

    # -- point location / evaluation ----------------------------------------

    def _triangulation(self):
        if self._tri_obj is None:
            import matplotlib.tri as mtri
            self._tri_obj = mtri.Triangulation(
                self.vertices[:, 0], self.vertices[:, 1], self.triangles)
            self._finder = self._tri_obj.get_trifinder()
        return self._tri_obj

    def locate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Containing-triangle index per point; nudges boundary stragglers."""
        self._triangulation()
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        idx = np.asarray(self._finder(x, y))
        if np.any(idx < 0):
            scale = float(np.max(np.abs(self.vertices))) or 1.0
            d = 1e-9 * scale
            for dx, dy in ((d, 0), (-d, 0), (0, d), (0, -d), (d, d), (-d, -d)):
                bad = idx < 0
                if not np.any(bad):
                    break
                idx = np.where(bad, np.asarray(self._finder(x + dx, y + dy)), idx)
        if np.any(idx < 0):
            pts = np.argwhere(np.atleast_1d(idx) < 0).ravel()[:5]
            raise ValueError(f"points outside mesh, e.g. indices {pts.tolist()}")
        return idx

    def barycentric(self, x, y, idx):
        """Barycentric coordinates of points within triangles ``idx``."""
        t = self.triangles[idx]
        v0 = self.vertices[t[..., 0]]
        v1 = self.vertices[t[..., 1]]
        v2 = self.vertices[t[..., 2]]
        det = (v1[..., 0] - v0[..., 0]) * (v2[..., 1] - v0[..., 1]) \
            - (v2[..., 0] - v0[..., 0]) * (v1[..., 1] - v0[..., 1])
        l1 = ((x - v0[..., 0]) * (v2[..., 1] - v0[..., 1])
              - (y - v0[..., 1]) * (v2[..., 0] - v0[..., 0])) / det
        l2 = ((y - v0[..., 1]) * (v1[..., 0] - v0[..., 0])
              - (x - v0[..., 0]) * (v1[..., 1] - v0[..., 1])) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)

    def edge_triangle(self) -> dict[tuple[int, int], int]:
        """Map sorted boundary-edge vertex pair -> owning triangle index."""
        if self._edge_tri is None:
            owner: dict[tuple[int, int], int] = {}
            tris = self.triangles
            for t in range(len(tris)):
                a, b, c = (int(v) for v in tris[t])
                for p, q in ((a, b), (b, c), (c, a)):
                    key = (p, q) if p < q else (q, p)
                    if key in owner:
                        owner.pop(key)  # interior edge: seen twice
                    else:
                        owner[key] = t
            self._edge_tri = owner
        return self._edge_tri


# ---------------------------------------------------------------------------
# Column-ladder mesher
# ---------------------------------------------------------------------------

@dataclass
class _Piece:
    """One linear piece of the bottom or top boundary chain."""
    x0: float
    x1: float
    y0: float
    y1: float
    tag: str

    def at(self, x: float) -> float:
        if self.x1 == self.x0:
            return self.y0
        t = (x - self.x0) / (self.x1 - self.x0)
        return self.y0 + t * (self.y1 - self.y0)


def _chain_pieces(edges: list[tuple[np.ndarray, np.ndarray, str]],
                  xmin: float, xmax: float, scale: float, what: str) -> list[_Piece]:
    pieces = [
        _Piece(float(p[0]), float(q[0]), float(p[1]), float(q[1]), tag)
        for p, q, tag in edges
    ]
    pieces.sort(key=lambda pc: pc.x0)
    tol = _TOL * scale
    if not pieces or abs(pieces[0].x0 - xmin) > tol or abs(pieces[-1].x1 - xmax) > tol:
        raise MeshError(f"polygon is not x-monotone ({what} chain does not span the width)")
    for a, b in zip(pieces, pieces[1:]):
        if abs(a.x1 - b.x0) > tol:
            raise MeshError(f"polygon is not x-monotone ({what} chain has a gap or overlap)")
    return pieces


def _piece_at(pieces: list[_Piece], x: float) -> _Piece:
    """Piece whose open interval contains x (x strictly inside some piece)."""
    lo, hi = 0, len(pieces) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if pieces[mid].x1 < x:
            lo = mid + 1
        else:
            hi = mid
    return pieces[lo]


def triangulate(poly: TaggedPolygon, target_h: float,
                extra_stations: tuple[float, ...] = (),
                min_angle: float = 20.0,
                max_edge_factor: float = 2.5) -> Mesh:
    """Mesh an x-monotone tagged polygon with column ladders."""
    if target_h <= 0:
        raise MeshError("target_h must be positive")
    verts = poly.vertices
    tags = poly.edge_tags
    scale = float(np.max(np.abs(verts))) or 1.0
    tol = _TOL * scale
    xmin, xmax, _, _ = poly.bbox()

    bottom: list[tuple[np.ndarray, np.ndarray, str]] = []
    top: list[tuple[np.ndarray, np.ndarray, str]] = []
    vertical: list[tuple[float, float, float, str]] = []  # x, ylo, yhi, tag
    n = len(verts)
    for i in range(n):
        p, q = verts[i], verts[(i + 1) % n]
        if abs(q[0] - p[0]) <= tol:
            vertical.append((float(p[0]), float(min(p[1], q[1])),
                             float(max(p[1], q[1])), tags[i]))
        elif q[0] > p[0]:
            bottom.append((p, q, tags[i]))
        else:
            top.append((q, p, tags[i]))  # store left-to-right

    bot_pieces = _chain_pieces(bottom, xmin, xmax, scale, "bottom")
    top_pieces = _chain_pieces(top, xmin, xmax, scale, "top")

    # -- stations -----------------------------------------------------------
    xs_raw = sorted(
        set(float(v[0]) for v in verts)
        | {float(s) for s in extra_stations if xmin + tol < s < xmax - tol}
    )
    base = [xs_raw[0]]
    for x in xs_raw[1:]:
        if x - base[-1] > tol:
            base.append(x)
    stations: list[float] = []
    for a, b in zip(base, base[1:]):
        m = max(1, int(np.ceil((b - a) / target_h - 1e-12)))
        stations.extend(a + (b - a) * j / m for j in range(m))
    stations.append(base[-1])

    # -- columns -------------------------------------------------------------
    vert_x = verts[:, 0]
    columns: list[np.ndarray] = []
    offsets: list[int] = []
    total = 0
    for x in stations:
        mand = set()
        near = np.abs(vert_x - x) <= tol
        for y in verts[near, 1]:
            mand.add(float(y))
        for pieces in (bot_pieces, top_pieces):
            for pc in pieces:
                if pc.x0 - tol <= x <= pc.x1 + tol:
                    mand.add(float(pc.at(min(max(x, pc.x0), pc.x1))))
        ys_mand = sorted(mand)
        dedup = [ys_mand[0]]
        for y in ys_mand[1:]:
            if y - dedup[-1] > tol:
                dedup.append(y)
        col = [dedup[0]]
        for a, b in zip(dedup, dedup[1:]):
            m = max(1, int(np.ceil((b - a) / target_h - 1e-12)))
            col.extend(a + (b - a) * j / m for j in range(1, m))
            col.append(b)
        columns.append(np.asarray(col))
        offsets.append(total)
        total += len(col)

    vertices = np.empty((total, 2))
    for j, (x, col) in enumerate(zip(stations, columns)):
        sl = slice(offsets[j], offsets[j] + len(col))
        vertices[sl, 0] = x
        vertices[sl, 1] = col

    # -- ladder strips --------------------------------------------------------
    triangles: list[tuple[int, int, int]] = []
    bedges: list[tuple[int, int]] = []
    btags: list[str] = []

    def col_slice(j: int, ylo: float, yhi: float) -> np.ndarray:
        col = columns[j]
        i0 = int(np.searchsorted(col, ylo - tol))
        i1 = int(np.searchsorted(col, yhi + tol))
        if i1 - i0 < 2 or abs(col[i0] - ylo) > tol or abs(col[i1 - 1] - yhi) > tol:
            raise MeshError("internal: column misses a section endpoint")
        return offsets[j] + np.arange(i0, i1)

    for j in range(len(stations) - 1):
        xa, xb = stations[j], stations[j + 1]
        xm = 0.5 * (xa + xb)
        bp = _piece_at(bot_pieces, xm)
        tp = _piece_at(top_pieces, xm)
        left = col_slice(j, bp.at(xa), tp.at(xa))
        right = col_slice(j + 1, bp.at(xb), tp.at(xb))
        yl = vertices[left, 1]
        yr = vertices[right, 1]
        tl = (yl - yl[0]) / (yl[-1] - yl[0])
        tr = (yr - yr[0]) / (yr[-1] - yr[0])
        i = k = 0
        while i < len(left) - 1 or k < len(right) - 1:
            adv_left = k == len(right) - 1 or (
                i < len(left) - 1 and tl[i + 1] <= tr[k + 1] + 1e-14)
            if adv_left:
                triangles.append((int(left[i]), int(right[k]), int(left[i + 1])))
                i += 1
            else:
                triangles.append((int(left[i]), int(right[k]), int(right[k + 1])))
                k += 1
        bedges.append((int(left[0]), int(right[0])))
        btags.append(bp.tag)
        bedges.append((int(left[-1]), int(right[-1])))
        btags.append(tp.tag)

    # -- vertical boundary edges ----------------------------------------------
    st_arr = np.asarray(stations)
    for x, ylo, yhi, tag in vertical:
        j = int(np.argmin(np.abs(st_arr - x)))
        if abs(st_arr[j] - x) > tol:
            raise MeshError("internal: vertical edge misses its station")
        idxs = col_slice(j, ylo, yhi)
        for a, b in zip(idxs, idxs[1:]):
            bedges.append((int(a), int(b)))
            btags.append(tag)

    mesh = Mesh(vertices, np.asarray(triangles), np.asarray(bedges), btags)
    _validate_mesh(mesh, target_h, min_angle, max_edge_factor)
    return mesh


def _validate_mesh(mesh: Mesh, target_h: float, min_angle: float,
                   max_edge_factor: float) -> None:
    if np.any(mesh.areas() <= 0):
        raise MeshError("mesher produced a non-CCW or degenerate triangle")
    # boundary recovery: triangle edges used once == tagged boundary edges
    once = set(mesh.edge_triangle().keys())
    tagged = {
        (int(a), int(b)) if a < b else (int(b), int(a))
        for a, b in mesh.boundary_edges
    }
    if once != tagged:
        raise MeshError(
            f"boundary mismatch: {len(once ^ tagged)} edges differ between "
            "triangulation boundary and tagged outline")
    q = mesh.quality()
    if q["min_angle_deg"] < min_angle:
        raise MeshError(
            f"mesh quality floor violated: min angle {q['min_angle_deg']:.2f} deg "
            f"< {min_angle} (pick a smaller target_h or a gentler profile)")
    if q["max_edge"] > max_edge_factor * target_h:
        raise MeshError(
            f"mesh sizing violated: max edge {q['max_edge']:.3g} "
            f"> {max_edge_factor} * target_h = {max_edge_factor * target_h:.3g}")


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle in four via edge midpoints (nested refinement)."""
    verts = [tuple(v) for v in mesh.vertices]
    midpoint: dict[tuple[int, int], int] = {}

    def mid(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key not in midpoint:
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            verts.append(((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0))
            midpoint[key] = len(verts) - 1
        return midpoint[key]

    tris: list[tuple[int, int, int]] = []
    for a, b, c in mesh.triangles:
        a, b, c = int(a), int(b), int(c)
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]

    bedges: list[tuple[int, int]] = []
    btags: list[str] = []
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        a, b = int(a), int(b)
        m = mid(a, b)
        bedges += [(a, m), (m, b)]
        btags += [tag, tag]

    return Mesh(np.asarray(verts), np.asarray(tris), np.asarray(bedges), btags)


# ---------------------------------------------------------------------------
# Mesh text IO
# ---------------------------------------------------------------------------

def write_mesh(mesh: Mesh, path: str | Path) -> None:
    lines = ["# thincascade mesh 1"]
    lines.append(f"vertices {mesh.n_vertices}")
    lines.extend(f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices)
    lines.append(f"triangles {len(mesh.triangles)}")
    lines.extend(f"{a} {b} {c}" for a, b, c in mesh.triangles)
    lines.append(f"boundary_edges {len(mesh.boundary_edges)}")
    lines.extend(
        f"{a} {b} {tag}"
        for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags)
    )
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> Mesh:
    lines = [
        ln for ln in Path(path).read_text().splitlines()
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    pos = 0

    def expect_header(name: str) -> int:
        nonlocal pos
        parts = lines[pos].split()
        if len(parts) != 2 or parts[0] != name:
            raise MeshError(f"{path}: expected '{name} <count>', got {lines[pos]!r}")
        pos += 1
        return int(parts[1])

    nv = expect_header("vertices")
    verts = np.array([[float(t) for t in lines[pos + i].split()] for i in range(nv)])
    pos += nv
    nt = expect_header("triangles")
    tris = np.array([[int(t) for t in lines[pos + i].split()] for i in range(nt)])
    pos += nt
    ne = expect_header("boundary_edges")
    bedges, btags = [], []
    for i in range(ne):
        a, b, tag = lines[pos + i].split(maxsplit=2)
        bedges.append((int(a), int(b)))
        btags.append(tag)
    return Mesh(verts, tris, np.asarray(bedges), btags)


# ---------------------------------------------------------------------------
# Assembly and solve
# ---------------------------------------------------------------------------

@dataclass
class LinearSystem:
    mesh: Mesh
    K: sp.csr_matrix
    b: np.ndarray
    dirichlet_nodes: np.ndarray
    dirichlet_values: np.ndarray
    lumped_mass: np.ndarray
    compat_defect: float | None  # pre-projection sum(b); pure-Neumann only


@dataclass
class SolveInfo:
    iterations: int
    relative_residual: float
    compat_defect: float | None
    history: list[float]


def _as_callable(g):
    if callable(g):
        return g
    const = float(g)
    return lambda x, y: np.full_like(np.asarray(x, dtype=float), const)


def _eval_vec(fn, x, y) -> np.ndarray:
    """Evaluate fn(x, y) and broadcast scalar-ish returns to x's shape."""
    out = np.asarray(fn(x, y), dtype=float)
    x = np.asarray(x)
    if out.shape != x.shape:
        out = np.broadcast_to(out, x.shape)
    return out


def assemble_poisson(mesh: Mesh,
                     volume_load=None,
                     neumann: dict[str, object] | None = None,
                     dirichlet: dict[str, object] | None = None,
                     tri_quad: str = "midpoint3",
                     edge_quad: int = 2) -> LinearSystem:
    """Assemble −Δu = f with tagged Neumann fluxes g = ∂u/∂ν and Dirichlet data.

    ``volume_load`` and the per-tag entries are vectorized callables f(x, y)
    (constants also accepted).  Neumann convention: g is the *outward* normal
    derivative of the solution on that boundary piece.
    """
    tris = mesh.triangles
    areas = mesh.areas()
    grads = mesh.grads()
    nv = mesh.n_vertices

    # stiffness
    kloc = np.einsum("tid,tjd->tij", grads, grads) * areas[:, None, None]
    rows = np.repeat(tris, 3, axis=1).reshape(-1)
    cols = np.tile(tris, (1, 3)).reshape(-1)
    K = sp.coo_matrix((kloc.reshape(-1), (rows, cols)), shape=(nv, nv)).tocsr()

    # lumped mass (per-node share of adjacent areas)
    lumped = np.zeros(nv)
    np.add.at(lumped, tris.reshape(-1), np.repeat(areas / 3.0, 3))

    # volume load
    b = np.zeros(nv)
    if volume_load is not None:
        fl = _as_callable(volume_load)
        lam, w = TRI_QUAD[tri_quad]
        v = mesh.vertices[tris]
        pts = np.einsum("qi,tid->qtd", lam, v)
        fvals = _eval_vec(fl, pts[..., 0], pts[..., 1])
        for i in range(3):
            contrib = areas * np.einsum("q,qt->t", w * lam[:, i], fvals)
            np.add.at(b, tris[:, i], contrib)

    # Neumann fluxes
    if neumann:
        t1d, w1d = EDGE_QUAD[edge_quad]
        for (a, bb), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            g = neumann.get(tag)
            if g is None:
                continue
            gl = _as_callable(g)
            pa, pb = mesh.vertices[int(a)], mesh.vertices[int(bb)]
            h = np.hypot(*(pb - pa))
            mid = 0.5 * (pa + pb)
            half = 0.5 * (pb - pa)
            px = mid[0] + t1d * half[0]
            py = mid[1] + t1d * half[1]
            gv = _eval_vec(gl, px, py)
            b[int(a)] += 0.5 * h * float(np.sum(w1d * gv * 0.5 * (1.0 - t1d)))
            b[int(bb)] += 0.5 * h * float(np.sum(w1d * gv * 0.5 * (1.0 + t1d)))

    # Dirichlet data
    dnodes: dict[int, float] = {}
    if dirichlet:
        for (a, bb), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            g = dirichlet.get(tag)
            if g is None:
                continue
            gl = _as_callable(g)
            for node in (int(a), int(bb)):
                x, y = mesh.vertices[node]
                dnodes[node] = float(np.asarray(gl(np.array([x]), np.array([y])))[0])

    if dnodes:
        dn = np.array(sorted(dnodes), dtype=np.int64)
        dv = np.array([dnodes[int(i)] for i in dn])
        defect = None
    else:
        dn = np.zeros(0, dtype=np.int64)
        dv = np.zeros(0)
        defect = float(b.sum())

    return LinearSystem(mesh=mesh, K=K, b=b, dirichlet_nodes=dn,
                        dirichlet_values=dv, lumped_mass=lumped,
                        compat_defect=defect)


def _pcg(K: sp.csr_matrix, b: np.ndarray, tol: float, max_iter: int,
         project: bool) -> tuple[np.ndarray, int, float, list[float]]:
    n = len(b)
    diag = K.diagonal()
    if np.any(diag <= 0):
        raise SolverError("stiffness diagonal not positive; bad mesh?")
    minv = 1.0 / diag

    def proj(v):
        v -= v.mean()

    r = b.copy()
    if project:
        proj(r)
    bnorm = float(np.linalg.norm(r))
    x = np.zeros(n)
    history: list[float] = []
    if bnorm == 0.0:
        return x, 0, 0.0, history
    z = minv * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        Kp = K @ p
        denom = float(p @ Kp)
        if denom <= 0:
            raise SolverError(f"CG breakdown at iteration {it}", history)
        alpha = rz / denom
        x += alpha * p
        r -= alpha * Kp
        if project:
            proj(r)
        rn = float(np.linalg.norm(r))
        history.append(rn)
        if rn <= tol * bnorm:
            return x, it, rn / bnorm, history
        z = minv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG failed to reach tol {tol:g} in {max_iter} iterations "
        f"(last relative residual {history[-1] / bnorm:.3e})", history)


def solve(system: LinearSystem, tol: float = 1e-10,
          max_iter: int | None = None) -> "FemField":
    """Jacobi-PCG solve; pure-Neumann systems get projected and de-meaned."""
    if not 1e-14 <= tol <= 1e-4:
        raise ValueError(f"solver tolerance {tol:g} outside [1e-14, 1e-4]")
    n = len(system.b)
    cap = max_iter or int(np.ceil(50.0 * np.sqrt(n))) + 100
    pure_neumann = len(system.dirichlet_nodes) == 0

    if pure_neumann:
        m = system.lumped_mass
        bproj = system.b - (system.b.sum() / m.sum()) * m
        x, it, rel, hist = _pcg(system.K, bproj, tol, cap, project=True)
        x -= (m @ x) / m.sum()
        info = SolveInfo(it, rel, system.compat_defect, hist)
        return FemField(system.mesh, x, info)

    free = np.ones(n, dtype=bool)
    free[system.dirichlet_nodes] = False
    xfull = np.zeros(n)
    xfull[system.dirichlet_nodes] = system.dirichlet_values
    rhs = system.b - system.K @ xfull
    Kff = system.K[free][:, free].tocsr()
    xf, it, rel, hist = _pcg(Kff, rhs[free], tol, cap, project=False)
    xfull[free] = xf
    info = SolveInfo(it, rel, None, hist)
    return FemField(system.mesh, xfull, info)


def galerkin_residual(system: LinearSystem, field: "FemField") -> float:
    """Relative residual of the discrete equations on the free nodes."""
    r = system.K @ field.values - system.b
    free = np.ones(len(system.b), dtype=bool)
    free[system.dirichlet_nodes] = False
    if len(system.dirichlet_nodes) == 0:
        # constants are invisible to a pure-Neumann system
        r -= r.mean()
    num = float(np.linalg.norm(r[free]))
    den = float(np.linalg.norm(system.b[free])) or 1.0
    return num / den


# ---------------------------------------------------------------------------
# Fields and integrals
# ---------------------------------------------------------------------------

class FemField:
    """P1 nodal field on a mesh with evaluation and integral helpers."""

    def __init__(self, mesh: Mesh, values: np.ndarray,
                 solve_info: SolveInfo | None = None):
        self.mesh = mesh
        self.values = np.asarray(values, dtype=float)
        self.solve_info = solve_info
        self._tri_grads: np.ndarray | None = None

    def tri_gradients(self) -> np.ndarray:
        if self._tri_grads is None:
            u = self.values[self.mesh.triangles]
            self._tri_grads = np.einsum("ti,tid->td", u, self.mesh.grads())
        return self._tri_grads

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        idx = self.mesh.locate(x.ravel(), y.ravel())
        lam = self.mesh.barycentric(x.ravel(), y.ravel(), idx)
        vals = np.einsum("pi,pi->p", lam, self.values[self.mesh.triangles[idx]])
        return vals.reshape(x.shape)

    def evaluate_with_gradient(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        idx = self.mesh.locate(x.ravel(), y.ravel())
        lam = self.mesh.barycentric(x.ravel(), y.ravel(), idx)
        vals = np.einsum("pi,pi->p", lam, self.values[self.mesh.triangles[idx]])
        g = self.tri_gradients()[idx]
        return vals.reshape(x.shape), g[:, 0].reshape(x.shape), g[:, 1].reshape(x.shape)


def l2_h1_errors(field: FemField, value_fn=None, grad_fn=None,
                 tri_mask: np.ndarray | None = None,
                 quad: str = "dunavant5") -> tuple[float, float]:
    """(L2, H1-seminorm) of (field − reference) over the masked triangles.

    ``value_fn(x, y)`` and ``grad_fn(x, y) -> (gx, gy)`` are vectorized; None
    means reference 0 (plain norms of the field).
    """
    mesh = field.mesh
    tris = mesh.triangles if tri_mask is None else mesh.triangles[tri_mask]
    areas = mesh.areas() if tri_mask is None else mesh.areas()[tri_mask]
    g = field.tri_gradients() if tri_mask is None else field.tri_gradients()[tri_mask]
    lam, w = TRI_QUAD[quad]
    v = mesh.vertices[tris]
    pts = np.einsum("qi,tid->qtd", lam, v)
    uh = np.einsum("qi,ti->qt", lam, field.values[tris])
    if value_fn is not None:
        uref = _eval_vec(value_fn, pts[..., 0], pts[..., 1])
    else:
        uref = 0.0
    diff = uh - uref
    l2sq = float(np.einsum("q,qt,t->", w, diff * diff, areas))
    if grad_fn is not None:
        gxr, gyr = grad_fn(pts[..., 0], pts[..., 1])
        gxr = np.broadcast_to(np.asarray(gxr, dtype=float), pts[..., 0].shape)
        gyr = np.broadcast_to(np.asarray(gyr, dtype=float), pts[..., 0].shape)
        dx = g[:, 0][None, :] - gxr
        dy = g[:, 1][None, :] - gyr
        h1sq = float(np.einsum("q,qt,t->", w, dx * dx + dy * dy, areas))
    else:
        dx, dy = g[:, 0], g[:, 1]
        h1sq = float(np.sum((dx * dx + dy * dy) * areas))
    return np.sqrt(max(l2sq, 0.0)), np.sqrt(max(h1sq, 0.0))


def integrate_function(mesh: Mesh, fn, tri_mask: np.ndarray | None = None,
                       quad: str = "dunavant5") -> float:
    """∫ fn(x,y) over the (masked) mesh with the named triangle rule."""
    tris = mesh.triangles if tri_mask is None else mesh.triangles[tri_mask]
    areas = mesh.areas() if tri_mask is None else mesh.areas()[tri_mask]
    lam, w = TRI_QUAD[quad]
    pts = np.einsum("qi,tid->qtd", lam, mesh.vertices[tris])
    fv = _eval_vec(_as_callable(fn), pts[..., 0], pts[..., 1])
    return float(np.einsum("q,qt,t->", w, fv, areas))


def cross_section_mean(field: FemField, x0: float) -> tuple[float, float]:
    """Mean of the field on the vertical section {x = x0}; returns (mean, length).

    Triangles are selected with the half-open rule xmin <= x0 < xmax so
    column stations are not double-counted; P1 restriction to the chord is
    linear, so the trapezoid value is exact.
    """
    mesh = field.mesh
    v = mesh.vertices[mesh.triangles]
    xs = v[..., 0]
    xmn, xmx = xs.min(axis=1), xs.max(axis=1)
    mask = (xmn <= x0) & (x0 < xmx)
    if not np.any(mask):
        raise ValueError(f"section x = {x0} does not cross the mesh")
    tv = v[mask]
    uv = field.values[mesh.triangles[mask]]
    m = len(tv)
    ys = np.full((m, 3), np.nan)
    vals = np.full((m, 3), np.nan)
    for e, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        xp, xq = tv[:, i, 0], tv[:, j, 0]
        denom = xq - xp
        ok = np.abs(denom) > 0
        t = np.where(ok, (x0 - xp) / np.where(ok, denom, 1.0), np.nan)
        hit = ok & (t >= 0.0) & (t <= 1.0)
        ys[hit, e] = tv[hit, i, 1] + t[hit] * (tv[hit, j, 1] - tv[hit, i, 1])
        vals[hit, e] = uv[hit, i] + t[hit] * (uv[hit, j] - uv[hit, i])
    with np.errstate(invalid="ignore"):
        lo = np.nanargmin(ys, axis=1)
        hi = np.nanargmax(ys, axis=1)
    rows = np.arange(m)
    length = ys[rows, hi] - ys[rows, lo]
    contrib = 0.5 * (vals[rows, hi] + vals[rows, lo]) * length
    total_len = float(np.nansum(length))
    if total_len <= 0:
        raise ValueError(f"section x = {x0} has zero length")
    return float(np.nansum(contrib)) / total_len, total_len


def boundary_mean(field: FemField, tags: set[str] | str) -> float:
    """Arc-length-weighted mean of the field over the tagged boundary."""
    if isinstance(tags, str):
        tags = {tags}
    mesh = field.mesh
    total = 0.0
    length = 0.0
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tag not in tags:
            continue
        pa, pb = mesh.vertices[int(a)], mesh.vertices[int(b)]
        h = float(np.hypot(*(pb - pa)))
        total += 0.5 * (field.values[int(a)] + field.values[int(b)]) * h
        length += h
    if length == 0.0:
        raise ValueError(f"no boundary edges tagged {sorted(tags)}")
    return total / length


def boundary_integral_nx(field: FemField, tags: set[str]) -> float:
    """∫ n_x * u ds over the tagged boundary (outward normal x-component)."""
    mesh = field.mesh
    owner = mesh.edge_triangle()
    total = 0.0
    seen = False
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tag not in tags:
            continue
        seen = True
        a, b = int(a), int(b)
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        d = pb - pa
        h = float(np.hypot(*d))
        n = np.array([d[1], -d[0]]) / h
        key = (a, b) if a < b else (b, a)
        tri = mesh.triangles[owner[key]]
        c = mesh.vertices[[v for v in tri if v not in (a, b)][0]]
        if float(n @ (c - 0.5 * (pa + pb))) > 0:
            n = -n
        total += float(n[0]) * 0.5 * (field.values[a] + field.values[b]) * h
    if not seen:
        raise ValueError(f"no boundary edges tagged {sorted(tags)}")
    return total
