"""Sobolev (p, w)-capacity of node sets and the small-norm sequence psi_j.

The capacity of E is approximated on a box mesh by minimising

    sum_t w_t |grad phi|_M^p |t| + sum_i m_i |phi_i|^p

over nodal fields with phi = 1 on the one-ring of E (a discrete open
neighbourhood) and phi = 0 on the box boundary.  ``m_i`` is the lumped,
weighted mass of node i.  The zero condition on the box boundary replaces
the whole-plane setting, so values are upper-bound flavoured and converge
as the box grows.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dirichlet import EnergyProblem, minimize
from .mesh import DomainMesh
from .operators import OperatorSpec, element_weights

log = logging.getLogger(__name__)


class PsiConstructionError(RuntimeError):
    """Neighbourhoods with small enough capacity do not exist at this resolution."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


@dataclass
class CapacityEstimate:
    value: float
    minimizer: np.ndarray = field(repr=False)
    norm_p: float
    pinned: np.ndarray = field(repr=False)
    h: float = 0.0
    box_side: float = 0.0


def weighted_lumped_mass(mesh: DomainMesh, spec: OperatorSpec, wt=None) -> np.ndarray:
    wt = element_weights(mesh, spec) if wt is None else wt
    return np.bincount(mesh.triangles.ravel(), np.repeat(wt * mesh.areas / 3.0, 3), mesh.n_nodes)


def sobolev_norm(mesh: DomainMesh, spec: OperatorSpec, u) -> float:
    """Discrete (int (|u|^p + |grad u|^p) w)^(1/p), with |grad u| measured in M."""
    prob = EnergyProblem(mesh, spec, weighted_lumped_mass(mesh, spec))
    return (spec.p * prob.value(np.asarray(u, dtype=float))) ** (1.0 / spec.p)


def box_side(mesh: DomainMesh) -> float:
    lo, hi = mesh.nodes.min(0), mesh.nodes.max(0)
    return float(np.min(hi - lo))


def _set_diameter(pts) -> float:
    if len(pts) < 2:
        return 0.0
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


def estimate_capacity(box_mesh: DomainMesh, spec: OperatorSpec, E, tol: float | None = None,
                      check_box: bool = True) -> CapacityEstimate:
    """Minimise the discrete Sobolev energy with phi = 1 near E and 0 on the box boundary."""
    E = np.unique(np.asarray(list(E), dtype=np.int64))
    side = box_side(box_mesh)
    n = box_mesh.n_nodes
    if len(E) == 0:
        return CapacityEstimate(0.0, np.zeros(n), 0.0, E, box_mesh.h, side)
    pinned = box_mesh.ring(E, 1)
    if box_mesh.is_boundary[pinned].any():
        raise ValueError("E (with its one-ring) touches the box boundary")
    if check_box:
        need = 4 * _set_diameter(box_mesh.nodes[E]) + 4
        if side < need - 1e-9:
            raise ValueError(f"box side {side:.4g} is below the required {need:.4g}")
    prob = EnergyProblem(box_mesh, spec, weighted_lumped_mass(box_mesh, spec))
    tol = 1e-10 * spec.weight.c if tol is None else tol
    phi = np.zeros(n)
    phi[pinned] = 1.0
    fixed = np.zeros(n, dtype=bool)
    fixed[pinned] = True
    fixed[box_mesh.boundary_nodes] = True
    free = np.flatnonzero(~fixed)
    # harmonic start: cheap and already in [0, 1]
    from .dirichlet import linear_extension
    phi = linear_extension(box_mesh, spec, phi, free)
    phi, _, _ = minimize(prob, phi, free, tol, 1e-8 / box_mesh.h)
    lo, hi = phi.min(), phi.max()
    if lo < -1e-8 or hi > 1 + 1e-8:
        log.warning("capacity minimiser leaves [0, 1] by %.2e", max(-lo, hi - 1))
    phi = np.clip(phi, 0.0, 1.0)
    val = spec.p * prob.value(phi)
    return CapacityEstimate(val, phi, val ** (1 / spec.p), pinned, box_mesh.h, side)


@dataclass
class PsiSequence:
    """Neighbourhoods U_1 > ... > U_K of E, test functions phi_k and tails psi_j.

    ``psi[j]`` is sum_{k=j+1}^{K} phi_k for j = 0..K (so ``psi[K]`` is zero).
    """
    E: np.ndarray
    K: int
    hops: list
    neighborhoods: list = field(repr=False)
    phis: list = field(repr=False)
    phi_norms: list
    psi: list = field(repr=False)
    psi_norms: list
    capacity_of_E: float

    def check_invariants(self, mesh: DomainMesh, tol: float = 1e-10) -> list:
        """Return a list of violated invariants (empty when all hold)."""
        bad = []
        for j, s in enumerate(self.psi):
            if s.min() < -tol:
                bad.append(f"psi_{j} negative")
            if j and np.any(s > self.psi[j - 1] + tol):
                bad.append(f"psi_{j} > psi_{j - 1}")
            if not self.psi_norms[j] < 2.0 ** -j:
                bad.append(f"norm psi_{j} = {self.psi_norms[j]:.4g} >= 2^-{j}")
        for j in range(self.K + 1):
            for m in range(1, self.K - j + 1):
                U = self.neighborhoods[j + m - 1]
                if np.any(self.psi[j][U] < m - tol):
                    bad.append(f"psi_{j} < {m} on U_{j + m}")
        return bad


def build_psi_sequence(box_mesh: DomainMesh, spec: OperatorSpec, E, K: int, hops=None,
                       tol: float | None = None) -> PsiSequence:
    """Construct psi_j with ||psi_j|| < 2^-j and psi_j >= m on U_{j+m}.

    ``U_k`` is the graph ball of radius ``hops[k-1]`` around E (default
    ``K - k``).  When the capacity test fails for some level the radius is
    shrunk; if even E itself is too heavy, :class:`PsiConstructionError`
    reports the deepest level reached.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    E = np.unique(np.asarray(list(E), dtype=np.int64))
    n = box_mesh.n_nodes
    if len(E) == 0:
        z = [np.zeros(n) for _ in range(K + 1)]
        return PsiSequence(E, K, [0] * K, [E] * K, z[:K], [0.0] * K, z, [0.0] * (K + 1), 0.0)
    hops = [K - k for k in range(1, K + 1)] if hops is None else list(hops)
    if len(hops) != K or any(b > a for a, b in zip(hops, hops[1:])) or min(hops) < 0:
        raise ValueError("hops must be K nonincreasing nonnegative integers")
    cap_E = estimate_capacity(box_mesh, spec, E, tol)
    used, nbhd, phis, norms = [], [], [], []
    limit = np.inf
    for k in range(1, K + 1):
        target = 2.0 ** -k
        r = int(min(hops[k - 1], limit))
        while True:
            U = box_mesh.ring(E, r) if r else E
            est = cap_E if r == 0 else estimate_capacity(box_mesh, spec, U, tol, check_box=False)
            if est.norm_p < target or r == 0:
                break
            r -= 1
        if not est.norm_p < target:
            partial = {"reached_K": k - 1, "phi_norms": norms + [est.norm_p],
                       "capacity_of_E": cap_E.value}
            raise PsiConstructionError(
                f"level {k}: even E itself has norm {est.norm_p:.4g} >= 2^-{k}; "
                f"maximal achievable K is {k - 1}", partial)
        limit = r
        used.append(r)
        nbhd.append(U)
        phis.append(est.minimizer)
        norms.append(est.norm_p)
    psi = [np.zeros(n)]
    for phi in reversed(phis):
        psi.append(psi[-1] + phi)
    psi.reverse()
    psi_norms = [sobolev_norm(box_mesh, spec, s) for s in psi]
    seq = PsiSequence(E, K, used, nbhd, phis, norms, psi, psi_norms, cap_E.value)
    bad = seq.check_invariants(box_mesh)
    if bad:
        raise PsiConstructionError("invariants violated: " + "; ".join(bad), seq)
    return seq
