"""Triangulated planar domains and P1 element primitives.

Meshes are built deterministically from a :class:`DomainDescriptor` and are
immutable afterwards (all arrays are flagged read-only).  Gradients of nodal
fields are per-triangle constants of the piecewise-linear interpolant.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class DomainDescriptor:
    """Shape of a bounded planar domain.

    ``kind`` is one of ``unit-square``, ``rectangle``, ``disc``, ``annulus``
    or ``polygon``.  ``rectangle`` (x0, y0, x1, y1) is an axis-aligned box used
    for capacity computations.
    """

    kind: str
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    r_in: float = 0.0
    r_out: float = 0.0
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    vertices: tuple[tuple[float, float], ...] = ()

    @classmethod
    def unit_square(cls) -> "DomainDescriptor":
        return cls("unit-square")

    @classmethod
    def rectangle(cls, x0, y0, x1, y1) -> "DomainDescriptor":
        return cls("rectangle", bounds=(float(x0), float(y0), float(x1), float(y1)))

    @classmethod
    def box(cls, center, side) -> "DomainDescriptor":
        cx, cy = center
        s = 0.5 * side
        return cls.rectangle(cx - s, cy - s, cx + s, cy + s)

    @classmethod
    def disc(cls, center=(0.0, 0.0), radius=1.0) -> "DomainDescriptor":
        return cls("disc", center=(float(center[0]), float(center[1])), radius=float(radius))

    @classmethod
    def annulus(cls, r_in, r_out, center=(0.0, 0.0)) -> "DomainDescriptor":
        return cls("annulus", center=(float(center[0]), float(center[1])),
                   r_in=float(r_in), r_out=float(r_out))

    @classmethod
    def polygon(cls, vertices) -> "DomainDescriptor":
        return cls("polygon", vertices=tuple((float(x), float(y)) for x, y in vertices))

    def validate(self) -> None:
        if self.kind == "unit-square":
            return
        if self.kind == "rectangle":
            x0, y0, x1, y1 = self.bounds
            if not (x1 > x0 and y1 > y0):
                raise ValueError(f"degenerate rectangle {self.bounds}: zero area")
        elif self.kind == "disc":
            if not self.radius > 0:
                raise ValueError(f"degenerate disc: radius {self.radius} must be positive")
        elif self.kind == "annulus":
            if not (0 < self.r_in < self.r_out):
                raise ValueError(f"annulus requires 0 < r_in < r_out, got {self.r_in}, {self.r_out}")
        elif self.kind == "polygon":
            v = np.asarray(self.vertices, dtype=float)
            if len(v) < 3:
                raise ValueError("polygon needs at least 3 vertices")
            area = _signed_area(v)
            if abs(area) <= 1e-14 * max(1.0, np.ptp(v, axis=0).max() ** 2):
                raise ValueError("degenerate polygon: zero area")
            if area < 0:
                raise ValueError("polygon must be positively oriented (counter-clockwise)")
            if not _is_simple(v):
                raise ValueError("polygon is self-intersecting")
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    @property
    def diameter(self) -> float:
        if self.kind == "unit-square":
            return math.sqrt(2.0)
        if self.kind == "rectangle":
            x0, y0, x1, y1 = self.bounds
            return math.hypot(x1 - x0, y1 - y0)
        if self.kind == "disc":
            return 2.0 * self.radius
        if self.kind == "annulus":
            return 2.0 * self.r_out
        v = np.asarray(self.vertices)
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def boundary_distance(self, pts) -> np.ndarray:
        """Unsigned distance from points to the boundary curve."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind in ("unit-square", "rectangle"):
            x0, y0, x1, y1 = self._rect()
            v = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
            return _polyline_distance(pts, v)[0]
        if self.kind == "disc":
            r = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
            return np.abs(r - self.radius)
        if self.kind == "annulus":
            r = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
            return np.minimum(np.abs(r - self.r_in), np.abs(r - self.r_out))
        return _polyline_distance(pts, np.asarray(self.vertices))[0]

    def nearest_boundary_point(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind in ("disc", "annulus"):
            c = np.asarray(self.center)
            d = pts - c
            r = np.hypot(d[:, 0], d[:, 1])
            r = np.where(r == 0, 1e-300, r)
            if self.kind == "disc":
                target = np.full_like(r, self.radius)
            else:
                target = np.where(np.abs(r - self.r_in) < np.abs(r - self.r_out), self.r_in, self.r_out)
            return c + d * (target / r)[:, None]
        if self.kind in ("unit-square", "rectangle"):
            x0, y0, x1, y1 = self._rect()
            v = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        else:
            v = np.asarray(self.vertices)
        return _polyline_distance(pts, v)[1]

    def contains(self, pts) -> np.ndarray:
        """Strict interior test (closed-form for curved shapes, ray casting for polygons)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind in ("unit-square", "rectangle"):
            x0, y0, x1, y1 = self._rect()
            return (pts[:, 0] > x0) & (pts[:, 0] < x1) & (pts[:, 1] > y0) & (pts[:, 1] < y1)
        if self.kind == "disc":
            r = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
            return r < self.radius
        if self.kind == "annulus":
            r = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
            return (r > self.r_in) & (r < self.r_out)
        v = np.asarray(self.vertices)
        inside = np.zeros(len(pts), dtype=bool)
        x, y = pts[:, 0], pts[:, 1]
        for a, b in zip(v, np.roll(v, -1, axis=0)):
            cond = (a[1] > y) != (b[1] > y)
            xint = a[0] + (y - a[1]) * (b[0] - a[0]) / np.where(b[1] == a[1], 1.0, b[1] - a[1])
            inside ^= cond & (x < xint)
        return inside & (self.boundary_distance(pts) > 0)

    def _rect(self):
        if self.kind == "unit-square":
            return (0.0, 0.0, 1.0, 1.0)
        return self.bounds

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "rectangle":
            d["bounds"] = list(self.bounds)
        elif self.kind == "disc":
            d.update(center=list(self.center), radius=self.radius)
        elif self.kind == "annulus":
            d.update(center=list(self.center), r_in=self.r_in, r_out=self.r_out)
        elif self.kind == "polygon":
            d["vertices"] = [list(v) for v in self.vertices]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DomainDescriptor":
        kind = d["kind"]
        if kind == "unit-square":
            return cls.unit_square()
        if kind == "rectangle":
            return cls.rectangle(*d["bounds"])
        if kind == "disc":
            return cls.disc(d.get("center", (0.0, 0.0)), d.get("radius", 1.0))
        if kind == "annulus":
            return cls.annulus(d["r_in"], d["r_out"], d.get("center", (0.0, 0.0)))
        if kind == "polygon":
            return cls.polygon(d["vertices"])
        raise ValueError(f"unknown domain kind {kind!r}")


@dataclass(eq=False)
class DomainMesh:
    """Conforming P1 triangulation.

    ``boundary_nodes`` and ``interior_nodes`` are sorted index arrays that
    partition ``range(n_nodes)``.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    domain: DomainDescriptor | None = None
    parent_map: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.boundary_nodes = np.unique(np.asarray(self.boundary_nodes, dtype=np.int64))
        mask = np.zeros(len(self.nodes), dtype=bool)
        mask[self.boundary_nodes] = True
        self.interior_nodes = np.flatnonzero(~mask)
        self.is_boundary = mask
        for arr in (self.nodes, self.triangles, self.boundary_nodes, self.interior_nodes, self.is_boundary):
            arr.flags.writeable = False
        if np.any(self.areas <= 0):
            bad = np.flatnonzero(self.areas <= 0)[:5]
            raise ValueError(f"non-positive triangle area at {bad.tolist()}")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def _signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self._signed_areas

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def hat_gradients(self) -> np.ndarray:
        """(T, 3, 2) array: gradient of each vertex hat function on each triangle."""
        p = self.nodes[self.triangles]
        x, y = p[..., 0], p[..., 1]
        two_a = 2.0 * self.areas[:, None]
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / two_a
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / two_a
        g = np.stack([gx, gy], axis=-1)
        g.flags.writeable = False
        return g

    @cached_property
    def edges(self) -> np.ndarray:
        """Sorted unique undirected edges (E, 2), each row (lo, hi)."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def h(self) -> float:
        d = self.nodes[self.edges[:, 0]] - self.nodes[self.edges[:, 1]]
        return float(np.sqrt((d ** 2).sum(1)).max())

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        """Nodal share of the area (one third of each incident triangle)."""
        return np.bincount(self.triangles.ravel(), np.repeat(self.areas / 3.0, 3), self.n_nodes)

    @cached_property
    def adjacency(self):
        import scipy.sparse as sp
        e = self.edges
        n = self.n_nodes
        a = sp.coo_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                          shape=(n, n)).tocsr()
        return a

    @cached_property
    def _kdtree(self) -> cKDTree:
        return cKDTree(self.nodes)

    def gradients(self, u) -> np.ndarray:
        """(T, 2) per-triangle gradients of the nodal field ``u``."""
        u = np.asarray(u, dtype=float)
        return np.einsum("tij,ti->tj", self.hat_gradients, u[self.triangles])

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(x, y)``."""
        return np.asarray(func(self.nodes[:, 0], self.nodes[:, 1]), dtype=float) * np.ones(self.n_nodes)

    def find_nodes(self, points, tol=1e-9) -> np.ndarray:
        """Indices of mesh nodes coinciding with ``points``; raises if any is missing."""
        d, idx = self._kdtree.query(np.atleast_2d(points))
        if np.any(d > tol):
            raise ValueError(f"{int((d > tol).sum())} points do not coincide with mesh nodes")
        return idx

    def nearest_node(self, point) -> int:
        return int(self._kdtree.query(np.asarray(point, dtype=float))[1])

    def ring(self, node_set, hops: int = 1) -> np.ndarray:
        """Graph ball of radius ``hops`` around a node set (sorted indices)."""
        sel = np.zeros(self.n_nodes, dtype=bool)
        sel[np.asarray(list(node_set), dtype=np.int64)] = True
        a = self.adjacency
        for _ in range(hops):
            sel = sel | (a @ sel.astype(float) > 0)
        return np.flatnonzero(sel)

    def evaluate(self, u, points) -> np.ndarray:
        """Evaluate the P1 interpolant of ``u`` at arbitrary points inside the mesh."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        u = np.asarray(u, dtype=float)
        out = np.full(len(pts), np.nan)
        # candidate triangles: those incident to the nearest few nodes
        _, near = self._kdtree.query(pts, k=min(8, self.n_nodes))
        node_tris = self._node_triangles
        for i, p in enumerate(pts):
            for nd in np.atleast_1d(near[i]):
                for t in node_tris[nd]:
                    lam = self._barycentric(t, p)
                    if lam.min() >= -1e-10:
                        out[i] = lam @ u[self.triangles[t]]
                        break
                if not np.isnan(out[i]):
                    break
        if np.isnan(out).any():
            raise ValueError("some evaluation points lie outside the mesh")
        return out

    @cached_property
    def _node_triangles(self):
        lists = [[] for _ in range(self.n_nodes)]
        for t, tri in enumerate(self.triangles):
            for v in tri:
                lists[v].append(t)
        return lists

    def _barycentric(self, t, p):
        a, b, c = self.nodes[self.triangles[t]]
        m = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
        l1, l2 = np.linalg.solve(m, np.asarray(p) - a)
        return np.array([1.0 - l1 - l2, l1, l2])

    def to_json(self) -> str:
        return json.dumps({
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary": self.boundary_nodes.tolist(),
        })

    @classmethod
    def from_json(cls, text: str, domain: DomainDescriptor | None = None) -> "DomainMesh":
        d = json.loads(text)
        return cls(np.array(d["nodes"], dtype=float), np.array(d["triangles"], dtype=np.int64),
                   np.array(d["boundary"], dtype=np.int64), domain)


def element_gradient(mesh: DomainMesh, u, t: int) -> np.ndarray:
    """Constant gradient of the P1 interpolant of ``u`` on triangle ``t``."""
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range")
    u = np.asarray(u, dtype=float)
    return mesh.hat_gradients[t].T @ u[mesh.triangles[t]]


def build_mesh(domain: DomainDescriptor, h_target: float) -> DomainMesh:
    """Triangulate ``domain`` so that the longest edge is at most ``1.5 * h_target``."""
    domain.validate()
    if not h_target > 0:
        raise ValueError("h_target must be positive")
    if h_target > 0.5 * domain.diameter:
        raise ValueError(f"h_target={h_target} too large for domain of diameter {domain.diameter:.4g}")
    kind = domain.kind
    if kind in ("unit-square", "rectangle"):
        x0, y0, x1, y1 = domain._rect()
        nx = max(1, math.ceil((x1 - x0) / h_target - 1e-9))
        ny = max(1, math.ceil((y1 - y0) / h_target - 1e-9))
        mesh = _structured_rectangle(x0, y0, x1, y1, nx, ny, domain)
    elif kind == "disc":
        mesh = _grow(lambda n: _disc_mesh(domain, n), math.ceil(domain.radius / h_target), h_target)
    elif kind == "annulus":
        mesh = _grow(lambda n: _annulus_mesh(domain, n), math.ceil((domain.r_out - domain.r_in) / h_target),
                     h_target)
    else:
        mesh = _polygon_mesh(domain)
        while mesh.h > h_target:
            mesh = refine(mesh)
        mesh.parent_map = None
    if mesh.h > 1.5 * h_target:
        raise RuntimeError(f"mesh h={mesh.h} exceeds 1.5*h_target")
    return mesh


def unit_square_mesh(n: int) -> DomainMesh:
    """Structured n-by-n unit square mesh (grid spacing 1/n)."""
    return _structured_rectangle(0.0, 0.0, 1.0, 1.0, n, n, DomainDescriptor.unit_square())


def rectangle_mesh(x0, y0, x1, y1, nx, ny) -> DomainMesh:
    return _structured_rectangle(x0, y0, x1, y1, nx, ny, DomainDescriptor.rectangle(x0, y0, x1, y1))


def refine(mesh: DomainMesh) -> DomainMesh:
    """Uniform red refinement: every triangle splits into four.

    Parent nodes keep their indices; the midpoint of edge ``e`` (in
    ``mesh.edges`` order) gets index ``n_nodes + e``.  On curved domains the
    midpoints of boundary edges are projected onto the true boundary.
    """
    n = mesh.n_nodes
    edges = mesh.edges
    t = mesh.triangles
    # map each triangle edge to its edge index
    key = edges[:, 0] * n + edges[:, 1]

    def edge_index(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        return np.searchsorted(key, lo * n + hi)

    m01 = n + edge_index(t[:, 0], t[:, 1])
    m12 = n + edge_index(t[:, 1], t[:, 2])
    m20 = n + edge_index(t[:, 2], t[:, 0])
    new_tris = np.concatenate([
        np.stack([t[:, 0], m01, m20], 1),
        np.stack([m01, t[:, 1], m12], 1),
        np.stack([m20, m12, t[:, 2]], 1),
        np.stack([m01, m12, m20], 1),
    ])
    # keep children of one parent together for locality
    order = np.arange(len(new_tris)).reshape(4, -1).T.ravel()
    new_tris = new_tris[order]
    mids = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])

    # boundary edges belong to a single triangle
    all_e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    all_e.sort(axis=1)
    ids = np.searchsorted(key, all_e[:, 0] * n + all_e[:, 1])
    counts = np.bincount(ids, minlength=len(edges))
    bnd_edges = np.flatnonzero(counts == 1)
    dom = mesh.domain
    if dom is not None and dom.kind in ("disc", "annulus") and len(bnd_edges):
        mids[bnd_edges] = dom.nearest_boundary_point(mids[bnd_edges])
    nodes = np.concatenate([mesh.nodes, mids])
    boundary = np.concatenate([mesh.boundary_nodes, n + bnd_edges])
    parent = np.arange(n)
    return DomainMesh(nodes, new_tris, boundary, dom, parent_map=parent)


def prolong(coarse: DomainMesh, fine: DomainMesh, u) -> np.ndarray:
    """Interpolate a coarse nodal field onto its uniform refinement."""
    u = np.asarray(u, dtype=float)
    e = coarse.edges
    return np.concatenate([u, 0.5 * (u[e[:, 0]] + u[e[:, 1]])])


# --------------------------------------------------------------------------
# constructions

def _structured_rectangle(x0, y0, x1, y1, nx, ny, domain):
    return _tensor_mesh(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1), domain)


def _graded_axis(lo, hi, a, b, h, growth):
    """Spacing h on [a, b], growing geometrically by ``growth`` out to [lo, hi]."""
    core = a + h * np.arange(round((b - a) / h) + 1)
    left, step, x = [], h, a
    while x - step * growth > lo + 0.5 * step * growth:
        step *= growth
        x -= step
        left.append(x)
    right, step, x = [], h, core[-1]
    while x + step * growth < hi - 0.5 * step * growth:
        step *= growth
        x += step
        right.append(x)
    return np.concatenate([[lo], left[::-1], core, right, [hi]])


def graded_box_mesh(outer, inner, h, growth=1.2) -> DomainMesh:
    """Rectangle ``outer`` meshed on a tensor grid: spacing ``h`` inside ``inner``, coarser outside.

    Both rectangles are (x0, y0, x1, y1); the inner one should start on
    multiples of ``h`` if nodes are to line up with another structured mesh.
    Right triangles keep every angle nonobtuse.
    """
    X0, Y0, X1, Y1 = outer
    a0, b0, a1, b1 = inner
    if not (X0 < a0 < a1 < X1 and Y0 < b0 < b1 < Y1):
        raise ValueError("inner rectangle must lie strictly inside the outer one")
    xs = _graded_axis(X0, X1, a0, a1, h, growth)
    ys = _graded_axis(Y0, Y1, b0, b1, h, growth)
    return _tensor_mesh(xs, ys, DomainDescriptor.rectangle(X0, Y0, X1, Y1))


def _tensor_mesh(xs, ys, domain):
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys)  # row j = y index
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])
    bnd = np.unique(np.concatenate([idx[0], idx[-1], idx[:, 0], idx[:, -1]]))
    return DomainMesh(nodes, tris, bnd, domain)


def _grow(builder, n0, h_target):
    n = max(2, n0)
    while True:
        mesh = builder(n)
        if mesh.h <= 1.5 * h_target:
            return mesh
        n += 1


def _disc_mesh(domain: DomainDescriptor, n: int) -> DomainMesh:
    """Concentric rings with 6*i nodes on ring i; boundary ring lies exactly on the circle."""
    cx, cy = domain.center
    R = domain.radius
    pts = [(cx, cy)]
    start = [0]
    for i in range(1, n + 1):
        start.append(len(pts))
        r = R * i / n
        th = 2 * np.pi * np.arange(6 * i) / (6 * i)
        pts.extend(zip(cx + r * np.cos(th), cy + r * np.sin(th)))
    nodes = np.array(pts)
    # exact boundary radius
    bstart = start[n]
    th = 2 * np.pi * np.arange(6 * n) / (6 * n)
    nodes[bstart:, 0] = cx + R * np.cos(th)
    nodes[bstart:, 1] = cy + R * np.sin(th)
    tris = []
    for k in range(6):
        tris.append((0, 1 + k, 1 + (k + 1) % 6))
    for i in range(1, n):
        inner_n, outer_n = 6 * i, 6 * (i + 1)
        si, so = start[i], start[i + 1]
        # merge by angle: walk both rings
        a = b = 0
        while a < inner_n or b < outer_n:
            ta = (a + 1) / inner_n
            tb = (b + 1) / outer_n
            if b < outer_n and (a >= inner_n or tb <= ta + 1e-12):
                tris.append((si + a % inner_n, so + b, so + (b + 1) % outer_n))
                b += 1
            else:
                tris.append((si + a, so + b % outer_n, si + (a + 1) % inner_n))
                a += 1
    tris = np.array(tris, dtype=np.int64)
    tris = _orient(nodes, tris)
    bnd = np.arange(bstart, len(nodes))
    return DomainMesh(nodes, tris, bnd, domain)


def _annulus_mesh(domain: DomainDescriptor, n: int) -> DomainMesh:
    cx, cy = domain.center
    ri, ro = domain.r_in, domain.r_out
    m = n  # radial layers
    h = (ro - ri) / m
    k = max(8, math.ceil(2 * np.pi * ro / h))
    th = 2 * np.pi * np.arange(k) / k
    rs = np.linspace(ri, ro, m + 1)
    nodes = np.array([(cx + r * np.cos(t), cy + r * np.sin(t)) for r in rs for t in th])
    idx = np.arange((m + 1) * k).reshape(m + 1, k)
    tris = []
    for i in range(m):
        for j in range(k):
            a, b = idx[i, j], idx[i, (j + 1) % k]
            c, d = idx[i + 1, (j + 1) % k], idx[i + 1, j]
            tris.append((a, b, c))
            tris.append((a, c, d))
    tris = _orient(nodes, np.array(tris, dtype=np.int64))
    bnd = np.concatenate([idx[0], idx[-1]])
    return DomainMesh(nodes, tris, bnd, domain)


def _polygon_mesh(domain: DomainDescriptor) -> DomainMesh:
    v = np.asarray(domain.vertices, dtype=float)
    # drop collinear vertices so ear clipping never emits zero-area triangles
    keep = []
    for i in range(len(v)):
        a, b, c = v[i - 1], v[i], v[(i + 1) % len(v)]
        if abs(_cross(b - a, c - b)) > 1e-14 * max(1.0, np.ptp(v, axis=0).max() ** 2):
            keep.append(i)
    v = v[keep]
    tris = _ear_clip(v)
    bnd = np.arange(len(v))
    return DomainMesh(v, np.array(tris, dtype=np.int64), bnd, domain)


def _ear_clip(v):
    idx = list(range(len(v)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(v) ** 2:
            raise ValueError("ear clipping failed; polygon may be invalid")
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = v[i0], v[i1], v[i2]
            if _cross(b - a, c - b) <= 0:
                continue
            others = [j for j in idx if j not in (i0, i1, i2)]
            if any(_point_in_tri(v[j], a, b, c) for j in others):
                continue
            tris.append((i0, i1, i2))
            idx.pop(k)
            break
    tris.append(tuple(idx))
    return tris


def _orient(nodes, tris):
    p = nodes[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    neg = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) < 0
    tris = tris.copy()
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return tris


def _cross(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _point_in_tri(p, a, b, c):
    d1 = _cross(b - a, p - a)
    d2 = _cross(c - b, p - b)
    d3 = _cross(a - c, p - c)
    return d1 >= 0 and d2 >= 0 and d3 >= 0


def _signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_intersect(p1, p2, p3, p4):
    d1 = _cross(p4 - p3, p1 - p3)
    d2 = _cross(p4 - p3, p2 - p3)
    d3 = _cross(p2 - p1, p3 - p1)
    d4 = _cross(p2 - p1, p4 - p1)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _is_simple(v):
    n = len(v)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


def _polyline_distance(pts, v):
    """Distance and nearest point from each point to a closed polyline."""
    a = v
    b = np.roll(v, -1, axis=0)
    ab = b - a
    ap = pts[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab[None]).sum(-1) / (ab ** 2).sum(-1)[None], 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    d = np.sqrt(((pts[:, None, :] - proj) ** 2).sum(-1))
    k = d.argmin(axis=1)
    rows = np.arange(len(pts))
    return d[rows, k], proj[rows, k]
