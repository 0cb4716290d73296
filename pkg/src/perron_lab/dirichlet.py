"""Sobolev solution Hf: minimise the discrete energy over fields with trace f.

The workhorse is :func:`minimize`, a damped Newton iteration on

    J(u) = (1/p) * (energy(u) + sum_i m_i |u_i|^p)

over a set of free nodes (the mass term is only used by capacity
computations).  Newton steps use the eps-regularised Hessian; the stopping
test always uses the exact residual.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import DomainMesh
from .operators import OperatorSpec, element_weights, flux, full_residual, hessian, stiffness

log = logging.getLogger(__name__)

MAX_NEWTON = 500
# residuals below this multiple of the summand size are rounding noise
ROUNDOFF = 1e-12


class SolverError(RuntimeError):
    """Raised when the iteration cap is hit; carries the best iterate."""

    def __init__(self, msg, best=None, history=None):
        super().__init__(msg)
        self.best = best
        self.history = history or []


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    final_residual_norm: float
    energy_value: float
    history: list = field(default_factory=list, repr=False)


class EnergyProblem:
    """Discrete energy with optional lumped |u|^p mass term."""

    def __init__(self, mesh: DomainMesh, spec: OperatorSpec, mass: np.ndarray | None = None):
        self.mesh = mesh
        self.spec = spec
        self.wt = element_weights(mesh, spec)
        self.mass = mass

    def value(self, u) -> float:
        g = self.mesh.gradients(u)
        s = np.einsum("ij,ij->i", g, g @ self.spec.M)
        e = np.sum(self.wt * s ** (self.spec.p / 2) * self.mesh.areas)
        if self.mass is not None:
            e += np.sum(self.mass * np.abs(u) ** self.spec.p)
        return float(e) / self.spec.p

    def gradient(self, u) -> np.ndarray:
        r = full_residual(self.mesh, self.spec, u, self.wt)
        if self.mass is not None:
            r = r + self.mass * np.sign(u) * np.abs(u) ** (self.spec.p - 1)
        return r

    def gradient_scale(self, u) -> float:
        """Size of the summands entering the residual; sets the roundoff floor."""
        g = self.mesh.gradients(u)
        a = np.abs(flux(self.spec, self.wt, g))
        local = np.einsum("tij,tj->ti", np.abs(self.mesh.hat_gradients), a) * self.mesh.areas[:, None]
        sc = np.bincount(self.mesh.triangles.ravel(), local.ravel(), self.mesh.n_nodes)
        if self.mass is not None:
            sc = sc + self.mass * np.abs(u) ** (self.spec.p - 1)
        return float(sc.max())

    def hessian(self, u, eps) -> sp.csr_matrix:
        p = self.spec.p
        # for p < 2 exact Newton overshoots through zero where values or
        # gradients are tiny; the secant (Picard) model does not
        H = hessian(self.mesh, self.spec, u, eps, self.wt, 0.0 if p < 2 else 1.0)
        if self.mass is not None:
            k = max(p - 1, 1.0)
            H = H + sp.diags(k * self.mass * (u * u + eps * eps) ** ((p - 2) / 2))
        return H.tocsr()

    @property
    def step_expansion(self) -> float:
        """The secant model overestimates curvature by up to 1/(p-1); allow longer steps."""
        return 1.0 / (self.spec.p - 1) if self.spec.p < 2 else 1.0

    def preconditioner(self) -> sp.csr_matrix:
        K = stiffness(self.mesh, self.wt)
        if self.mass is not None:
            K = K + sp.diags(self.mass)
        return K.tocsr()


def minimize(problem: EnergyProblem, u0, free, tol: float, eps: float, max_iter: int = MAX_NEWTON):
    """Damped Newton on the free nodes; returns (u, iterations, residual history)."""
    u = np.array(u0, dtype=float)
    free = np.asarray(free, dtype=np.int64)
    hist = []
    if len(free) == 0:
        return u, 0, [0.0]
    pre = None
    best_u, best_r = u.copy(), np.inf
    stall = 0
    for it in range(max_iter + 1):
        g = problem.gradient(u)[free]
        rnorm = float(np.abs(g).max())
        hist.append(rnorm)
        if rnorm < best_r:
            stall = 0 if rnorm < 0.5 * best_r else stall + 1
            best_u, best_r = u.copy(), rnorm
        else:
            stall += 1
        if rnorm <= tol:
            return u, it, hist
        if it == max_iter:
            break
        if stall >= 3 and rnorm <= ROUNDOFF * problem.gradient_scale(u):
            log.warning("residual %.3e is at the roundoff floor; tol %.1e not reachable", rnorm, tol)
            return u, it, hist
        if stall and stall % 3 == 0 and eps > 1e-150:
            # a stalled iteration with p < 2 means eps is flattening the curvature of tiny values
            eps *= 1e-10
        H = problem.hessian(u, eps)[free][:, free]
        d = _solve(H, -g)
        slope = float(g @ d) if d is not None else np.nan
        if d is None or not np.isfinite(slope) or slope >= 0:
            if pre is None:
                pre = problem.preconditioner()[free][:, free].tocsc()
            d = _solve(pre, -g)
            slope = float(g @ d)
        u = _line_search(problem, u, free, d, g, slope, rnorm)
    raise SolverError(f"no convergence in {max_iter} Newton steps (residual {best_r:.3e} > tol {tol:.1e})",
                      best=best_u, history=hist)


def _solve(A, b):
    try:
        with np.errstate(all="ignore"):
            x = spla.spsolve(A.tocsc(), b)
    except (RuntimeError, ValueError):
        return None
    if not np.all(np.isfinite(x)):
        return None
    return x


def _line_search(problem, u, free, d, g, slope, rnorm):
    J0 = problem.value(u)
    t = 1.0
    trial = u.copy()
    roundoff = abs(slope) < 1e-13 * (1.0 + abs(J0))
    best_t, best_res = None, rnorm
    for _ in range(60):
        trial[free] = u[free] + t * d
        if roundoff:
            # energy differences are below rounding; judge by the residual
            res = float(np.abs(problem.gradient(trial)[free]).max())
            if res < best_res:
                best_t, best_res = t, res
                break
        else:
            J = problem.value(trial)
            if np.isfinite(J) and J <= J0 + 1e-4 * t * slope:
                best_t = t
                break
        t *= 0.5
    if best_t == 1.0 and not roundoff and problem.step_expansion > 1.0:
        t2 = problem.step_expansion
        trial[free] = u[free] + t2 * d
        J2 = problem.value(trial)
        if np.isfinite(J2) and J2 < J:
            best_t = t2
    if best_t is None:
        # no acceptable step: take the tiniest one that lowers the residual, if any
        best_t = t
    out = u.copy()
    out[free] = u[free] + best_t * d
    return out


def default_tol(f_boundary, spec: OperatorSpec) -> float:
    """1e-8 * (1 + |f|_inf), times the weight constant (residuals are linear in it)."""
    return 1e-8 * (1.0 + float(np.max(np.abs(f_boundary)) if len(f_boundary) else 0.0)) * spec.weight.c


def regularization(mesh: DomainMesh, values) -> float:
    osc = float(np.ptp(values)) if len(values) else 0.0
    scale = osc / max(mesh.h, 1e-300) if osc > 0 else 1.0
    return 1e-8 * scale


def linear_extension(mesh: DomainMesh, spec: OperatorSpec, u0, free) -> np.ndarray:
    """Solve the p = 2 problem with the same weight and anisotropy (initial guess)."""
    lin = OperatorSpec(2.0, spec.weight, spec.anisotropy)
    H = hessian(mesh, lin, np.zeros(mesh.n_nodes), 0.0).tocsr()
    u = np.array(u0, dtype=float)
    free = np.asarray(free)
    if len(free) == 0:
        return u
    fixed = np.setdiff1d(np.arange(mesh.n_nodes), free)
    rhs = -H[free][:, fixed] @ u[fixed]
    u[free] = spla.spsolve(H[free][:, free].tocsc(), rhs)
    return u


def _as_field(mesh, f):
    if callable(f):
        return mesh.interpolate(f)
    f = np.asarray(f, dtype=float)
    if f.shape != (mesh.n_nodes,):
        raise ValueError(f"boundary data must be a nodal field of length {mesh.n_nodes}")
    return f


def solve_dirichlet(mesh: DomainMesh, spec: OperatorSpec, f, tol: float | None = None,
                    u0=None, max_iter: int = MAX_NEWTON) -> SolveReport:
    """A-harmonic extension of the boundary values of ``f``.

    ``f`` is a nodal field (only boundary entries are read) or a callable
    ``f(x, y)``.  The returned field equals ``f`` on boundary nodes and has
    max-norm interior residual at most ``tol``.
    """
    f = _as_field(mesh, f)
    fb = f[mesh.boundary_nodes]
    if not np.all(np.isfinite(fb)):
        raise ValueError("boundary data must be finite")
    tol = default_tol(fb, spec) if tol is None else tol
    if not tol > 0:
        raise ValueError("tol must be positive")
    free = mesh.interior_nodes
    start = np.zeros(mesh.n_nodes)
    start[mesh.boundary_nodes] = fb
    if u0 is None:
        start = linear_extension(mesh, spec, start, free)
    else:
        start[free] = np.asarray(u0, dtype=float)[free]
    prob = EnergyProblem(mesh, spec)
    u, it, hist = minimize(prob, start, free, tol, regularization(mesh, fb), max_iter)
    return SolveReport(u, it, hist[-1], prob.value(u) * spec.p, hist)


@dataclass
class MonotoneDataStudy:
    hf: np.ndarray
    levels: list
    gaps: list
    monotone: bool
    ratios: list


def monotone_data_study(mesh: DomainMesh, spec: OperatorSpec, f, psi, levels: int = 4,
                        tol: float | None = None) -> MonotoneDataStudy:
    """Solve H(f + 2^-j psi), j = 1..levels, and track the decrease towards Hf.

    Gaps are interior max-norms (on the boundary they are 2^-j max psi by construction).
    """
    f = _as_field(mesh, f)
    psi = _as_field(mesh, psi)
    if np.any(psi[mesh.boundary_nodes] < 0):
        raise ValueError("psi must be nonnegative on the boundary")
    fb = f[mesh.boundary_nodes]
    tol = default_tol(fb + psi[mesh.boundary_nodes], spec) if tol is None else tol
    hf = solve_dirichlet(mesh, spec, f, tol).solution
    sols, gaps = [], []
    for j in range(1, levels + 1):
        u = solve_dirichlet(mesh, spec, f + 2.0 ** -j * psi, tol, u0=hf).solution
        sols.append(u)
        gaps.append(float(np.abs(u - hf)[mesh.interior_nodes].max(initial=0.0)))
    slack = 10 * tol / max(spec.weight.c, 1e-300)
    mono = all(np.all(sols[k + 1] <= sols[k] + slack) for k in range(levels - 1))
    mono = mono and all(np.all(s >= hf - slack) for s in sols)
    ratios = [gaps[k + 1] / gaps[k] if gaps[k] > 0 else 0.0 for k in range(levels - 1)]
    return MonotoneDataStudy(hf, sols, gaps, bool(mono), ratios)


def fe_sup_error(mesh: DomainMesh, u, exact) -> float:
    """Sup of |u_h - exact| over nodes and edge midpoints.

    The P1 field is linear on edges, so midpoint values are nodal averages.
    """
    u = np.asarray(u, dtype=float)
    e = mesh.edges
    mid = 0.5 * (mesh.nodes[e[:, 0]] + mesh.nodes[e[:, 1]])
    err_nodes = np.abs(u - exact(mesh.nodes[:, 0], mesh.nodes[:, 1]))
    err_mid = np.abs(0.5 * (u[e[:, 0]] + u[e[:, 1]]) - exact(mid[:, 0], mid[:, 1]))
    return float(max(err_nodes.max(), err_mid.max()))
