"""Discrete obstacle problem: minimise the energy over {v >= psi, v = f on the boundary}.

Solved by a few projected Gauss-Seidel sweeps followed by a primal-dual
active-set loop whose inner problems are Newton solves with the active
nodes pinned to the obstacle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dirichlet import (EnergyProblem, SolverError, _as_field, default_tol, linear_extension,
                        minimize, regularization)
from .mesh import DomainMesh
from .operators import OperatorSpec

log = logging.getLogger(__name__)

MAX_ACTIVE_SET = 200


class InfeasibleObstacle(ValueError):
    """The admissible set is empty (psi > f somewhere on the boundary)."""


@dataclass
class ObstacleSpec:
    """Obstacle ``psi`` and boundary data ``f`` as nodal fields.

    Entries of ``psi`` equal to ``-inf`` leave that node unconstrained.
    """
    psi: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if self.psi.shape != self.f.shape:
            raise ValueError("psi and f must have the same shape")
        if np.any(np.isnan(self.psi)) or np.any(self.psi == np.inf):
            raise ValueError("psi must be finite or -inf")

    @property
    def constrained(self) -> np.ndarray:
        return np.isfinite(self.psi)

    @classmethod
    def from_functions(cls, mesh: DomainMesh, psi, f) -> "ObstacleSpec":
        return cls(_as_field(mesh, psi), _as_field(mesh, f))


@dataclass
class ObstacleReport:
    solution: np.ndarray
    active: np.ndarray
    residual: np.ndarray
    iterations: int
    kkt_violation: float
    history: list = field(default_factory=list, repr=False)


def kkt_violation(mesh: DomainMesh, u, psi, r, tol: float, constrained=None) -> float:
    """Largest violation of v >= psi, r >= 0 and r = 0 off the contact set (interior nodes)."""
    inner = mesh.interior_nodes
    con = np.isfinite(psi) if constrained is None else constrained
    viol = 0.0
    c = inner[con[inner]]
    if len(c):
        viol = max(viol, float(np.max(psi[c] - u[c], initial=0.0)))
        viol = max(viol, float(np.max(-r[c], initial=0.0)))
        off = c[u[c] > psi[c] + tol]
        viol = max(viol, float(np.max(np.abs(r[off]), initial=0.0)))
    unc = inner[~con[inner]]
    viol = max(viol, float(np.max(np.abs(r[unc]), initial=0.0)))
    return viol


def _pgs(problem, u, free, psi, sweeps):
    """Damped projected Jacobi sweeps (one scalar Newton step per node, all nodes at once)."""
    mesh = problem.mesh
    eps = regularization(mesh, u)
    for _ in range(sweeps):
        H = problem.hessian(u, eps)
        d = H.diagonal()
        g = problem.gradient(u)
        step = np.zeros_like(u)
        ok = d[free] > 0
        step[free[ok]] = -g[free[ok]] / d[free[ok]]
        u = u + 0.5 * step
        u[free] = np.maximum(u[free], psi[free])
    return u


def solve_obstacle(mesh: DomainMesh, spec: OperatorSpec, ob: ObstacleSpec, tol: float | None = None,
                   u0=None, pgs_sweeps: int = 5, max_iter: int = MAX_ACTIVE_SET) -> ObstacleReport:
    """Minimiser of the energy over {v >= psi in the interior, v = f on the boundary}."""
    n = mesh.n_nodes
    if ob.psi.shape != (n,):
        raise ValueError(f"obstacle fields must have length {n}")
    bnd = mesh.boundary_nodes
    fb = ob.f[bnd]
    if not np.all(np.isfinite(fb)):
        raise ValueError("boundary data must be finite")
    psi = ob.psi
    con = ob.constrained
    # feasibility: the boundary values must lie above the obstacle
    gap = psi[bnd] - fb
    if np.any(gap > 1e-12 * (1 + np.abs(fb))):
        k = bnd[np.argmax(gap)]
        raise InfeasibleObstacle(f"obstacle exceeds boundary data at node {k} by {gap.max():.3e}")
    tol = default_tol(fb, spec) if tol is None else tol
    inner = mesh.interior_nodes
    psi_i = np.where(con, psi, -np.inf)

    u = np.zeros(n)
    u[bnd] = fb
    if u0 is None:
        u = linear_extension(mesh, spec, u, inner)
    else:
        u[inner] = np.asarray(u0, dtype=float)[inner]
    u[inner] = np.maximum(u[inner], psi_i[inner])

    prob = EnergyProblem(mesh, spec)
    eps = regularization(mesh, np.concatenate([fb, psi[con]]))
    u = _pgs(prob, u, inner, psi_i, pgs_sweeps)

    active = np.zeros(n, dtype=bool)
    active[inner] = con[inner] & (u[inner] <= psi_i[inner] + tol)
    hist = []
    seen = set()
    for it in range(1, max_iter + 1):
        u[active] = psi[active]
        free = inner[~active[inner]]
        try:
            u, _, _ = minimize(prob, u, free, tol, eps)
        except SolverError as err:
            raise SolverError(f"inner solve failed at active-set pass {it}: {err}", err.best, hist) from err
        r = prob.gradient(u)
        viol = kkt_violation(mesh, u, psi_i, r, tol, con)
        hist.append(viol)
        below = (~active) & con & (u < psi_i - tol)
        release = active & (r < -tol)
        below[bnd] = release[bnd] = False
        if not below.any() and not release.any():
            return ObstacleReport(u, active, r, it, viol, hist)
        key = active.tobytes()
        if key in seen and not below.any():
            # cycling on release only: drop the most negative multiplier alone
            release = np.zeros(n, dtype=bool)
            release[np.argmin(np.where(active, r, np.inf))] = True
        seen.add(key)
        active = (active | below) & ~release
        # free nodes that slipped below the obstacle restart on it
        u[below] = psi[below]
    raise SolverError(f"active set did not settle in {max_iter} passes", u, hist)
