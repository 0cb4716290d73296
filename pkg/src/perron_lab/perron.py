"""Brackets for Perron solutions of perturbed boundary data.

For data f + h with h supported on a boundary set E of zero capacity, the
upper approximant at level j is the obstacle solution with obstacle and
boundary data Hf + H psi_j, where psi_j is the small-norm sequence built
around E and H bounds h from above.  Lower approximants come from the
identity  Hf = -H(-f).  The report brackets the Perron solution; the class
of admissible supersolutions is never enumerated.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import PsiConstructionError, PsiSequence, build_psi_sequence, estimate_capacity
from .dirichlet import _as_field, default_tol, solve_dirichlet
from .mesh import DomainMesh, graded_box_mesh, rectangle_mesh
from .obstacle import ObstacleSpec, solve_obstacle
from .operators import OperatorSpec, residual

log = logging.getLogger(__name__)

INTERIOR_DELTA = 0.25


@dataclass(frozen=True)
class PerturbationSpec:
    """Boundary perturbation h = value on E, zero elsewhere.

    E is given geometrically so it can be resolved on every mesh level:
    ``points`` are boundary points, ``segments`` are straight boundary pieces
    whose boundary nodes all belong to E.  ``value`` may be negative; for the
    infinite case it is the cap level of the sweep.
    """
    points: tuple = ()
    segments: tuple = ()
    value: float = 1.0
    label: str = ""

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("use a finite cap level for infinite perturbations")

    @classmethod
    def empty(cls) -> "PerturbationSpec":
        return cls(label="empty")

    @classmethod
    def point(cls, x, y, value=1.0) -> "PerturbationSpec":
        return cls(points=((float(x), float(y)),), value=value, label="point")

    @classmethod
    def segment(cls, a, b, value=1.0) -> "PerturbationSpec":
        return cls(segments=((tuple(map(float, a)), tuple(map(float, b))),), value=value, label="segment")

    def with_value(self, value: float) -> "PerturbationSpec":
        return PerturbationSpec(self.points, self.segments, value, self.label)

    @property
    def is_empty(self) -> bool:
        return not self.points and not self.segments

    def nodes(self, mesh: DomainMesh) -> np.ndarray:
        """Boundary node indices of E on ``mesh``."""
        out = []
        if self.points:
            idx = mesh.find_nodes(np.asarray(self.points), tol=1e-9)
            if not np.all(mesh.is_boundary[idx]):
                raise ValueError("perturbation points must be boundary nodes")
            out.append(idx)
        bnd = mesh.boundary_nodes
        P = mesh.nodes[bnd]
        for a, b in self.segments:
            a, b = np.asarray(a), np.asarray(b)
            d = b - a
            L2 = float(d @ d)
            t = np.clip((P - a) @ d / L2, 0, 1)
            dist = np.linalg.norm(P - (a + t[:, None] * d), axis=1)
            out.append(bnd[dist < 1e-9])
        return np.unique(np.concatenate(out)).astype(np.int64) if out else np.zeros(0, dtype=np.int64)

    def nodal(self, mesh: DomainMesh) -> np.ndarray:
        h = np.zeros(mesh.n_nodes)
        h[self.nodes(mesh)] = self.value
        return h

    def to_dict(self) -> dict:
        return {"points": [list(p) for p in self.points],
                "segments": [[list(a), list(b)] for a, b in self.segments],
                "value": self.value, "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationSpec":
        return cls(tuple(tuple(map(float, p)) for p in d.get("points", ())),
                   tuple((tuple(map(float, a)), tuple(map(float, b))) for a, b in d.get("segments", ())),
                   float(d.get("value", 1.0)), d.get("label", ""))


# --------------------------------------------------------------------------
# psi on the domain

def grid_spacing(mesh: DomainMesh) -> float:
    e = mesh.edges
    return float(np.linalg.norm(mesh.nodes[e[:, 0]] - mesh.nodes[e[:, 1]], axis=1).min())


def box_mesh_around(mesh: DomainMesh, E_pts, side: float | None = None, graded: bool = True,
                    growth: float = 1.2) -> DomainMesh:
    """Square box mesh centred near E, containing ``mesh`` and aligned with its grid.

    With ``graded`` the box uses the grid spacing of ``mesh`` on a margin
    around the domain and coarsens geometrically towards the box boundary.
    """
    E_pts = np.atleast_2d(E_pts)
    hs = grid_spacing(mesh)
    diam = 0.0
    if len(E_pts) > 1:
        diam = float(np.max(np.linalg.norm(E_pts[:, None] - E_pts[None], axis=-1)))
    side = 4 * diam + 4 if side is None else side
    # snap the centre to a mesh node so structured grids line up
    c = mesh.nodes[mesh.nearest_node(E_pts.mean(0))]
    half = math.ceil(side / 2 / hs - 1e-9) * hs
    margin = 16 * hs
    lo_in = c - np.ceil((c - mesh.nodes.min(0) + margin) / hs - 1e-9) * hs
    hi_in = c + np.ceil((mesh.nodes.max(0) - c + margin) / hs - 1e-9) * hs
    lo = np.minimum(c - half, lo_in - hs)
    hi = np.maximum(c + half, hi_in + hs)
    if not graded:
        k = math.ceil(float(np.max(hi - lo)) / hs - 1e-9)
        return rectangle_mesh(lo[0], lo[1], lo[0] + k * hs, lo[1] + k * hs, k, k)
    return graded_box_mesh((lo[0], lo[1], hi[0], hi[1]), (*lo_in, *hi_in), hs, growth)


def restrict(box: DomainMesh, mesh: DomainMesh, field_box) -> np.ndarray:
    """Values of a box field at the nodes of ``mesh`` (exact when grids align)."""
    try:
        return np.asarray(field_box)[box.find_nodes(mesh.nodes, tol=1e-9)]
    except ValueError:
        return box.evaluate(field_box, mesh.nodes)


@dataclass
class DomainPsi:
    """psi_j restricted to the domain mesh, plus the box-level sequence."""
    psi: list = field(repr=False)
    sequence: PsiSequence | None = field(default=None, repr=False)
    box_h: float = 0.0

    @property
    def K(self) -> int:
        return len(self.psi) - 1


def domain_psi(mesh: DomainMesh, spec: OperatorSpec, pert: PerturbationSpec, depth: int,
               box_side: float | None = None, tol: float | None = None) -> DomainPsi:
    """Build psi_0..psi_depth around E on a box mesh and restrict it to ``mesh``."""
    E = pert.nodes(mesh)
    if len(E) == 0:
        return DomainPsi([np.zeros(mesh.n_nodes) for _ in range(depth + 1)])
    box = box_mesh_around(mesh, mesh.nodes[E], box_side)
    E_box = box.find_nodes(mesh.nodes[E])
    seq = build_psi_sequence(box, spec, E_box, depth, tol=tol)
    return DomainPsi([restrict(box, mesh, s) for s in seq.psi], seq, box.h)


# --------------------------------------------------------------------------
# approximants

def _upper(mesh, spec, f, hf, psi_j, cap, tol, u0=None):
    if cap <= 0 or not np.any(psi_j):
        return hf.copy()
    ob = hf + cap * psi_j
    return solve_obstacle(mesh, spec, ObstacleSpec(ob, ob), tol, u0=u0).solution


def upper_envelope_approx(mesh: DomainMesh, spec: OperatorSpec, f, pert: PerturbationSpec, j: int,
                          K: int | None = None, psi: DomainPsi | None = None,
                          tol: float | None = None) -> np.ndarray:
    """Obstacle solution u_j with obstacle and data Hf + H psi_j, H = max(h, 0).

    ``psi`` may be passed to reuse a constructed sequence; otherwise one of
    depth ``K + 1`` (default K = j) is built, so psi_j never vanishes on E.
    """
    f = _as_field(mesh, f)
    K = j if K is None else K
    if psi is None:
        psi = domain_psi(mesh, spec, pert, K + 1)
    hf = solve_dirichlet(mesh, spec, f, tol).solution
    tol = default_tol(f[mesh.boundary_nodes] + max(pert.value, 0) * 2 * (K + 1), spec) if tol is None else tol
    return _upper(mesh, spec, f, hf, psi.psi[j], max(pert.value, 0.0), tol)


def interior_mask(mesh: DomainMesh, delta: float = INTERIOR_DELTA) -> np.ndarray:
    """Nodes at distance at least ``delta`` from the boundary (a fixed compact subset)."""
    if mesh.domain is None:
        raise ValueError("mesh has no domain descriptor")
    return mesh.domain.boundary_distance(mesh.nodes) >= delta - 1e-12


@dataclass
class PerronSandwichReport:
    """Upper/lower approximants per level and the resulting gap and distance.

    ``gap`` and ``dist`` are maxima over the compact subset of nodes at
    distance >= delta from the boundary; ``gap_all``/``dist_all`` use every
    node (these stay of order H near E by construction).
    """
    levels: list
    hf: np.ndarray = field(repr=False)
    upper: list = field(repr=False)
    lower: list = field(repr=False)
    gap: list
    dist: list
    gap_all: list
    dist_all: list
    psi_norms: list
    capacity_of_E: float
    violations: list
    tol: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def rows(self, mesh_level: int = 0) -> list:
        return [{"mesh_level": mesh_level, "j": j, "gap": g, "dist": d, "psi_norm": n,
                 "capacity_of_E": self.capacity_of_E}
                for j, g, d, n in zip(self.levels, self.gap, self.dist, self.psi_norms)]


def perron_sandwich(mesh: DomainMesh, spec: OperatorSpec, f, pert: PerturbationSpec, K: int,
                    tol: float | None = None, delta: float = INTERIOR_DELTA, box_side: float | None = None,
                    order_tol: float = 1e-8, psi: DomainPsi | None = None) -> PerronSandwichReport:
    """Compute u_j and l_j for j = 1..K and check ordering and monotonicity.

    psi_j comes from a sequence of depth K + 1, so the last upper approximant
    still dominates the perturbed data.  A prebuilt ``psi`` (same mesh, E and
    depth) can be passed to share it across cap levels.
    """
    f = _as_field(mesh, f)
    fb = f[mesh.boundary_nodes]
    cap_up, cap_lo = max(pert.value, 0.0), max(-pert.value, 0.0)
    scale = max(cap_up, cap_lo)
    tol = default_tol(np.append(fb, scale * (K + 1)), spec) if tol is None else tol
    hf = solve_dirichlet(mesh, spec, f, tol).solution
    neg_hf = -solve_dirichlet(mesh, spec, -f, tol).solution
    if psi is None:
        psi = domain_psi(mesh, spec, pert, K + 1, box_side)
    elif psi.K != K + 1:
        raise ValueError(f"psi has depth {psi.K}, expected {K + 1}")
    cap_E = 0.0
    if psi.sequence is not None:
        cap_E = psi.sequence.capacity_of_E
    inner = interior_mask(mesh, delta)
    ups, los, gaps, dists, gaps_all, dists_all = [], [], [], [], [], []
    bad = []
    u_prev = None
    for j in range(1, K + 1):
        u = _upper(mesh, spec, f, hf, psi.psi[j], cap_up, tol, u0=u_prev)
        # lower approximant: -(upper approximant for -f, -h)
        lo = -_upper(mesh, spec, -f, -neg_hf, psi.psi[j], cap_lo, tol)
        if np.any(u < hf - order_tol) or np.any(lo > hf + order_tol):
            bad.append(f"sandwich ordering fails at j={j}")
        if u_prev is not None and np.any(u > u_prev + order_tol):
            bad.append(f"u_{j} exceeds u_{j - 1} by {float(np.max(u - u_prev)):.3e}")
        ups.append(u)
        los.append(lo)
        gaps.append(float(np.max(u[inner] - lo[inner], initial=0.0)))
        dists.append(float(np.max(np.abs(u[inner] - hf[inner]), initial=0.0)))
        gaps_all.append(float(np.max(u - lo)))
        dists_all.append(float(np.max(np.abs(u - hf))))
        u_prev = u
    if any(b > a + order_tol for a, b in zip(dists, dists[1:])):
        bad.append("max(u_j - Hf) increases with j")
    norms = psi.sequence.psi_norms[1:K + 1] if psi.sequence is not None else [0.0] * K
    return PerronSandwichReport(list(range(1, K + 1)), hf, ups, los, gaps, dists, gaps_all, dists_all,
                                list(norms), cap_E, bad, tol)


# --------------------------------------------------------------------------
# uniqueness

class PreconditionError(ValueError):
    """Candidate fails a precondition of the uniqueness check."""

    def __init__(self, clauses):
        super().__init__("; ".join(clauses))
        self.clauses = list(clauses)


@dataclass
class UniquenessVerdict:
    passed: bool
    distance: float
    tolerance: float
    capacity_of_E: float | None


def uniqueness_check(mesh: DomainMesh, spec: OperatorSpec, f, candidate, E=(), tol: float | None = None,
                     bound_factor: float = 10.0, match_tol: float = 1e-8,
                     with_capacity: bool = True) -> UniquenessVerdict:
    """Compare a bounded discrete A-harmonic candidate with Hf.

    Preconditions, checked in this order and all reported together:
    boundedness (|u| <= bound_factor * (1 + max|f|)), interior residual <= tol,
    and agreement with f at boundary nodes outside E.
    """
    f = _as_field(mesh, f)
    u = np.asarray(candidate, dtype=float)
    E = np.asarray(list(E), dtype=np.int64)
    fb = f[mesh.boundary_nodes]
    tol = default_tol(fb, spec) if tol is None else tol
    clauses = []
    bound = bound_factor * (1 + float(np.abs(fb).max()))
    if not np.all(np.isfinite(u)) or np.abs(u).max() > bound:
        clauses.append(f"boundedness: max|u| = {float(np.abs(u).max()):.4g} exceeds {bound:.4g}")
    else:
        r = residual(mesh, spec, u)
        rmax = float(np.abs(r[mesh.interior_nodes]).max(initial=0.0))
        if rmax > tol:
            clauses.append(f"harmonicity: interior residual {rmax:.3e} exceeds tol {tol:.1e}")
    outside = np.setdiff1d(mesh.boundary_nodes, E)
    mism = float(np.abs(u[outside] - f[outside]).max(initial=0.0)) if np.all(np.isfinite(u)) else np.inf
    if mism > match_tol * (1 + float(np.abs(fb).max())):
        clauses.append(f"trace: candidate differs from f by {mism:.3e} off E")
    if clauses:
        raise PreconditionError(clauses)
    hf = solve_dirichlet(mesh, spec, f, tol).solution
    dist = float(np.abs(u - hf).max())
    allowed = 1e-6 * (1 + float(np.abs(fb).max()))
    cap = None
    if with_capacity and len(E):
        box = box_mesh_around(mesh, mesh.nodes[E])
        cap = estimate_capacity(box, spec, box.find_nodes(mesh.nodes[E])).value
    return UniquenessVerdict(dist <= allowed, dist, allowed, cap)
