"""Independent reference solutions.

* closed-form solutions of the unweighted isotropic equation,
* a walk-on-spheres Monte-Carlo estimator for harmonic functions (p = 2),
* an exhaustive active-set solver for tiny linear obstacle problems.

None of these share assembly code with the production solvers.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .mesh import DomainDescriptor, DomainMesh
from .parallel import thread_count

KINDS = ("affine", "harmonic-poly", "poisson-kernel", "radial-p", "log-radial")
WOS_SHELL = 1e-6
WOS_BLOCK = 1024
BRUTE_FORCE_CAP = 15


@dataclass(frozen=True)
class ClosedForm:
    """An explicit solution of div(|grad u|^(p-2) grad u) = 0.

    ``params`` by kind:

    * affine: (a, b, c) for a x + b y + c, any p
    * harmonic-poly: (k,) for Re z^k, p = 2
    * poisson-kernel: (theta,) pole at exp(i theta), unit disc, p = 2
    * radial-p: (c1, c2) for c1 |x|^((p-2)/(p-1)) + c2, p != 2
    * log-radial: (c1, c2) for c1 log|x| + c2, p = 2
    """
    kind: str
    params: tuple = ()
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown closed form {self.kind!r}")
        need = {"affine": 3, "harmonic-poly": 1, "poisson-kernel": 1, "radial-p": 2, "log-radial": 2}[self.kind]
        if len(self.params) != need:
            raise ValueError(f"{self.kind} takes {need} parameters")
        if self.kind in ("harmonic-poly", "poisson-kernel", "log-radial") and self.p != 2:
            raise ValueError(f"{self.kind} solves the equation only for p = 2")
        if self.kind == "radial-p" and (self.p == 2 or self.p <= 1):
            raise ValueError("radial-p needs p > 1, p != 2")
        if self.kind == "harmonic-poly" and (int(self.params[0]) != self.params[0] or self.params[0] < 0):
            raise ValueError("harmonic-poly degree must be a nonnegative integer")

    @property
    def pole(self) -> np.ndarray | None:
        if self.kind == "poisson-kernel":
            return np.array([math.cos(self.params[0]), math.sin(self.params[0])])
        if self.kind in ("radial-p", "log-radial"):
            return np.zeros(2)
        return None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "p": self.p}

    @classmethod
    def from_dict(cls, d: dict) -> "ClosedForm":
        return cls(d["kind"], tuple(d.get("params", ())), float(d.get("p", 2.0)))

    def __call__(self, x, y):
        return eval_closed_form(self, np.stack(np.broadcast_arrays(x, y), axis=-1))


def eval_closed_form(form: ClosedForm, x) -> np.ndarray | float:
    """Evaluate at a point or an (N, 2) array; singular points raise ValueError."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    X, Y = pts[..., 0], pts[..., 1]
    k = form.kind
    if k == "affine":
        a, b, c = form.params
        out = a * X + b * Y + c
    elif k == "harmonic-poly":
        out = ((X + 1j * Y) ** int(form.params[0])).real
    elif k == "poisson-kernel":
        z = X + 1j * Y
        zeta = complex(*form.pole)
        if np.any(np.abs(z) > 1 + 1e-12):
            raise ValueError("poisson kernel is only defined on the closed unit disc")
        den = np.abs(zeta - z) ** 2
        if np.any(den == 0):
            raise ValueError("evaluation at the pole")
        out = (1 - np.abs(z) ** 2) / den
        # exact zero on the circle away from the pole
        out = np.where(np.abs(np.abs(z) - 1) < 1e-14, 0.0, out)
    else:
        r = np.hypot(X, Y)
        if np.any(r == 0):
            raise ValueError("evaluation at the singularity |x| = 0")
        c1, c2 = form.params
        if k == "radial-p":
            out = c1 * r ** ((form.p - 2) / (form.p - 1)) + c2
        else:
            out = c1 * np.log(r) + c2
    out = np.asarray(out, dtype=float)
    return float(out[0]) if single else out


def consistency_residual(mesh: DomainMesh, form: ClosedForm) -> float:
    """Interior residual of the nodal interpolant, normalised by sqrt(lumped mass)."""
    from .operators import OperatorSpec, residual

    u = mesh.interpolate(form)
    r = residual(mesh, OperatorSpec(form.p), u)
    inner = mesh.interior_nodes
    return float(np.max(np.abs(r[inner]) / np.sqrt(mesh.lumped_mass[inner])))


# --------------------------------------------------------------------------
# walk on spheres

def _wos_block(domain: DomainDescriptor, f, x, n, seed, block, max_steps):
    rng = np.random.Generator(np.random.Philox(key=[seed, block]))
    pos = np.tile(np.asarray(x, dtype=float), (n, 1))
    alive = np.ones(n, dtype=bool)
    for _ in range(max_steps):
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            break
        d = domain.boundary_distance(pos[idx])
        done = d < WOS_SHELL
        alive[idx[done]] = False
        idx, d = idx[~done], d[~done]
        theta = rng.uniform(0.0, 2 * np.pi, len(idx))
        pos[idx, 0] += d * np.cos(theta)
        pos[idx, 1] += d * np.sin(theta)
    if alive.any():
        raise RuntimeError("walk on spheres did not terminate")
    hit = domain.nearest_boundary_point(pos)
    vals = np.asarray(f(hit[:, 0], hit[:, 1]), dtype=float) * np.ones(n)
    return vals.sum(), (vals ** 2).sum()


def walk_on_spheres(domain: DomainDescriptor, f, x, n_samples: int, seed: int = 0,
                    max_steps: int = 10_000):
    """Monte-Carlo estimate of the harmonic extension of ``f`` at ``x``.

    Samples are drawn in blocks of 1024; block ``b`` uses a Philox generator
    keyed by ``(seed, b)``, so the result is independent of the thread count.
    Returns ``(estimate, stderr)``.
    """
    if n_samples < 100:
        raise ValueError("walk_on_spheres needs at least 100 samples")
    if isinstance(f, ClosedForm) and f.p != 2:
        raise ValueError("walk on spheres only estimates harmonic (p = 2) extensions")
    x = np.asarray(x, dtype=float)
    if not domain.contains(x[None])[0]:
        raise ValueError("starting point must lie in the domain")
    sizes = [WOS_BLOCK] * (n_samples // WOS_BLOCK)
    if n_samples % WOS_BLOCK:
        sizes.append(n_samples % WOS_BLOCK)
    jobs = [(domain, f, x, n, seed, b, max_steps) for b, n in enumerate(sizes)]
    nt = thread_count()
    if nt > 1:
        with ThreadPoolExecutor(nt) as ex:
            parts = list(ex.map(lambda a: _wos_block(*a), jobs))
    else:
        parts = [_wos_block(*a) for a in jobs]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / n_samples
    var = max(s2 / n_samples - mean ** 2, 0.0) * n_samples / (n_samples - 1)
    return float(mean), float(math.sqrt(var / n_samples))


# --------------------------------------------------------------------------
# brute-force obstacle

def _dense_laplacian(mesh: DomainMesh) -> np.ndarray:
    """Cotangent-formula P1 stiffness, assembled triangle by triangle."""
    n = mesh.n_nodes
    K = np.zeros((n, n))
    P = mesh.nodes
    for tri in mesh.triangles:
        for k in range(3):
            i, j, o = tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]
            e1, e2 = P[i] - P[o], P[j] - P[o]
            cot = (e1 @ e2) / abs(e1[0] * e2[1] - e1[1] * e2[0])
            K[i, j] -= 0.5 * cot
            K[j, i] -= 0.5 * cot
            K[i, i] += 0.5 * cot
            K[j, j] += 0.5 * cot
    return K


def brute_force_obstacle(mesh: DomainMesh, psi, f, tol: float = 1e-10) -> np.ndarray:
    """Exact minimiser of the Dirichlet energy over {v >= psi, v = f on the boundary}.

    Every subset of candidate contact nodes is tried.  A node is a candidate
    when its obstacle value reaches the minimum of the boundary data (below
    that level the maximum principle keeps it off the contact set).  At most
    15 candidates are allowed.
    """
    psi = np.asarray(psi, dtype=float)
    f = np.asarray(f, dtype=float)
    inner = mesh.interior_nodes
    bnd = mesh.boundary_nodes
    if np.any(psi[bnd] > f[bnd] + tol):
        raise ValueError("obstacle exceeds the boundary data")
    fmin = f[bnd].min()
    cand = [int(i) for i in inner if np.isfinite(psi[i]) and psi[i] >= fmin - tol]
    if len(cand) > BRUTE_FORCE_CAP:
        raise ValueError(f"{len(cand)} candidate contact nodes exceed the cap of {BRUTE_FORCE_CAP}")
    K = _dense_laplacian(mesh)
    best, best_e = None, np.inf
    for m in range(len(cand) + 1):
        for subset in itertools.combinations(cand, m):
            u = f.copy()
            act = np.zeros(mesh.n_nodes, dtype=bool)
            act[list(subset)] = True
            u[act] = psi[act]
            fr = inner[~act[inner]]
            fixed = np.flatnonzero(~np.isin(np.arange(mesh.n_nodes), fr))
            if len(fr):
                u[fr] = np.linalg.solve(K[np.ix_(fr, fr)], -K[np.ix_(fr, fixed)] @ u[fixed])
            r = K @ u
            con = np.isfinite(psi)
            ok = np.all(u[inner][con[inner]] >= psi[inner][con[inner]] - tol)
            ok = ok and np.all(r[list(subset)] >= -tol)
            if not ok:
                continue
            e = float(u @ K @ u)
            if e < best_e - 1e-14:
                best, best_e = u, e
    if best is None:
        raise RuntimeError("no feasible active set found")
    return best
