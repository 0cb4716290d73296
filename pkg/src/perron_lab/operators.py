"""Weighted p-Laplace type flux, discrete energy and weak-form residual.

The model flux is

    A(x, q) = w(x) * (q . M q)^((p-2)/2) * M q

with a constant symmetric positive-definite matrix ``M`` (identity by
default).  It is (1/p) times the q-gradient of ``w (q . M q)^(p/2)``, so the
discrete residual is (1/p) times the gradient of :func:`energy`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import integrate

from .mesh import DomainMesh

_SINGULAR_SHIFT = 1e-9


@dataclass(frozen=True)
class WeightSpec:
    """w(x) = c * |x - center|^gamma (``constant``: gamma = 0; ``power``: c = 1)."""

    kind: str = "constant"
    c: float = 1.0
    gamma: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("constant", "power", "product"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if not self.c > 0:
            raise ValueError("weight constant must be positive")
        if self.kind == "constant" and self.gamma != 0:
            raise ValueError("constant weight has gamma = 0")
        if self.kind == "power" and self.c != 1.0:
            raise ValueError("power weight has c = 1; use kind='product'")
        if self.gamma <= -2:
            raise ValueError(f"|x|^{self.gamma} is not locally integrable in the plane")

    @classmethod
    def constant(cls, c=1.0):
        return cls("constant", c=float(c))

    @classmethod
    def power(cls, gamma, center=(0.0, 0.0)):
        return cls("power", gamma=float(gamma), center=tuple(center))

    @classmethod
    def product(cls, c, gamma, center=(0.0, 0.0)):
        return cls("product", c=float(c), gamma=float(gamma), center=tuple(center))

    @property
    def is_constant(self) -> bool:
        return self.gamma == 0.0

    def ap_admissible(self, p: float) -> bool:
        """Power weights |x|^gamma are A_p in the plane iff -2 < gamma < 2(p-1)."""
        return -2 < self.gamma < 2 * (p - 1)

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.is_constant:
            return np.full(len(pts), self.c)
        r = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
        if self.gamma < 0:
            r = np.where(r < 1e-12, _SINGULAR_SHIFT, r)
        return self.c * r ** self.gamma

    def scaled(self, factor: float) -> "WeightSpec":
        kind = "constant" if self.is_constant else "product"
        return WeightSpec(kind, c=self.c * factor, gamma=self.gamma, center=self.center)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c, "gamma": self.gamma, "center": list(self.center)}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightSpec":
        return cls(d.get("kind", "constant"), c=float(d.get("c", 1.0)), gamma=float(d.get("gamma", 0.0)),
                   center=tuple(d.get("center", (0.0, 0.0))))


@dataclass(frozen=True)
class OperatorSpec:
    p: float
    weight: WeightSpec = field(default_factory=WeightSpec)
    anisotropy: tuple[tuple[float, float], tuple[float, float]] | None = None

    def __post_init__(self):
        if not (1 < self.p < np.inf):
            raise ValueError(f"p must lie in (1, inf), got {self.p}")
        if self.anisotropy is not None:
            m = np.asarray(self.anisotropy, dtype=float)
            if m.shape != (2, 2) or not np.allclose(m, m.T):
                raise ValueError("anisotropy must be a symmetric 2x2 matrix")
            if np.linalg.eigvalsh(m).min() <= 0:
                raise ValueError("anisotropy must be positive definite")

    @property
    def M(self) -> np.ndarray:
        return np.eye(2) if self.anisotropy is None else np.asarray(self.anisotropy, dtype=float)

    @property
    def alpha(self) -> float:
        lmin = np.linalg.eigvalsh(self.M)[0]
        return float(lmin ** (self.p / 2))

    @property
    def beta(self) -> float:
        lmin, lmax = np.linalg.eigvalsh(self.M)
        if self.p >= 2:
            return float(lmax ** (self.p / 2))
        return float(lmax * lmin ** ((self.p - 2) / 2))

    def with_weight(self, weight: WeightSpec) -> "OperatorSpec":
        return OperatorSpec(self.p, weight, self.anisotropy)

    def to_dict(self) -> dict:
        d = {"p": self.p, "weight": self.weight.to_dict()}
        if self.anisotropy is not None:
            d["anisotropy"] = [list(r) for r in self.anisotropy]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OperatorSpec":
        an = d.get("anisotropy")
        an = tuple(tuple(float(v) for v in row) for row in an) if an is not None else None
        return cls(float(d["p"]), WeightSpec.from_dict(d.get("weight", {})), an)


def flux(spec: OperatorSpec, w, q) -> np.ndarray:
    """Vectorised flux for weight values ``w`` (N,) and gradients ``q`` (N, 2)."""
    q = np.asarray(q, dtype=float)
    mq = q @ spec.M
    s = np.einsum("ij,ij->i", q, mq)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(s > 0, s ** ((spec.p - 2) / 2), 0.0)
    return (np.asarray(w) * coef)[:, None] * mq


def a_flux(spec: OperatorSpec, x, q) -> np.ndarray:
    """A(x, q) at a single point."""
    q = np.asarray(q, dtype=float)
    if q.shape != (2,) or not np.all(np.isfinite(q)):
        raise ValueError(f"q must be a finite 2-vector, got {q!r}")
    w = spec.weight(np.asarray(x, dtype=float)[None])
    return flux(spec, w, q[None])[0]


def element_weights(mesh: DomainMesh, spec: OperatorSpec) -> np.ndarray:
    """One-point (barycentre) weight sample per triangle."""
    return spec.weight(mesh.barycenters)


def _check_field(mesh, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise ValueError(f"field has shape {u.shape}, expected ({mesh.n_nodes},)")
    if not np.all(np.isfinite(u)):
        raise ValueError("field must be finite")
    return u


def energy(mesh: DomainMesh, spec: OperatorSpec, u, wt=None) -> float:
    """sum_t w_t (grad u . M grad u)^(p/2) |t|."""
    u = _check_field(mesh, u)
    wt = element_weights(mesh, spec) if wt is None else wt
    g = mesh.gradients(u)
    s = np.einsum("ij,ij->i", g, g @ spec.M)
    return float(np.sum(wt * s ** (spec.p / 2) * mesh.areas))


def residual(mesh: DomainMesh, spec: OperatorSpec, u, wt=None) -> np.ndarray:
    """Discrete weak form: entry i is the integral of A(x, grad u) . grad phi_i.

    Boundary entries are set to zero (use ``mesh.is_boundary`` to mask).
    """
    r = full_residual(mesh, spec, u, wt)
    r[mesh.boundary_nodes] = 0.0
    return r


def full_residual(mesh: DomainMesh, spec: OperatorSpec, u, wt=None) -> np.ndarray:
    u = _check_field(mesh, u)
    wt = element_weights(mesh, spec) if wt is None else wt
    a = flux(spec, wt, mesh.gradients(u))
    local = np.einsum("tij,tj->ti", mesh.hat_gradients, a) * mesh.areas[:, None]
    return np.bincount(mesh.triangles.ravel(), local.ravel(), mesh.n_nodes)


def hessian(mesh: DomainMesh, spec: OperatorSpec, u, eps: float, wt=None,
            rank_one: float = 1.0) -> sp.csr_matrix:
    """Jacobian of :func:`full_residual` with |grad u|^2 replaced by |grad u|^2 + eps^2.

    ``rank_one`` (scalar or per triangle) scales the (p - 2) s^((p-4)/2) Mq Mq^T
    term; 0 gives the secant (Picard) matrix.
    """
    wt = element_weights(mesh, spec) if wt is None else wt
    g = mesh.gradients(u)
    M = spec.M
    mq = g @ M
    s = np.einsum("ij,ij->i", g, mq) + eps * eps
    p = spec.p
    with np.errstate(all="ignore"):
        c1 = wt * s ** ((p - 2) / 2)
        c2 = rank_one * wt * (p - 2) * s ** ((p - 4) / 2) if p != 2 else np.zeros_like(s)
    c1 = np.where(np.isfinite(c1), c1, 0.0)
    c2 = np.where(np.isfinite(c2), c2, 0.0)
    D = c1[:, None, None] * M[None] + c2[:, None, None] * np.einsum("ti,tj->tij", mq, mq)
    G = mesh.hat_gradients
    K = np.einsum("tia,tab,tjb->tij", G, D, G) * mesh.areas[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((K.ravel(), (rows, cols)), shape=(n, n))


def stiffness(mesh: DomainMesh, wt=None) -> sp.csr_matrix:
    """Weighted P1 Laplace stiffness matrix (the p = 2, M = I Jacobian)."""
    wt = np.ones(mesh.n_triangles) if wt is None else wt
    G = mesh.hat_gradients
    K = np.einsum("tia,tja->tij", G, G) * (wt * mesh.areas)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((K.ravel(), (rows, cols)), shape=(n, n))


# --------------------------------------------------------------------------
# structure conditions

@dataclass
class StructureReport:
    passed: bool
    samples: int
    margins: dict
    violations: list

    def __str__(self):
        state = "pass" if self.passed else "FAIL"
        m = ", ".join(f"{k}={v:.3g}" for k, v in self.margins.items())
        return f"structure conditions {state} ({self.samples} samples): {m}"


def check_structure_conditions(spec: OperatorSpec, sample_count: int = 10_000, seed: int = 0,
                               flux_fn=None, box=(-1.0, 1.0)) -> StructureReport:
    """Sample (x, q, q1, q2, lambda) and test the four ellipticity conditions.

    Margins are relative: coercivity ``(A.q - alpha w|q|^p) / (w|q|^p)``, bound
    ``(beta w|q|^(p-1) - |A|) / (w|q|^(p-1))``, monotonicity
    ``(A1-A2).(q1-q2) / (w |q1-q2|^2 (|q1|+|q2|)^(p-2))`` and the maximal
    relative homogeneity defect.  ``flux_fn(x, q)`` overrides the model flux
    (used for negative controls).
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    n = sample_count
    p = spec.p
    x = rng.uniform(box[0], box[1], size=(n, 2))
    w = spec.weight(x)

    def rand_q():
        th = rng.uniform(0, 2 * np.pi, n)
        mag = 10.0 ** rng.uniform(-3, 3, n)
        return np.column_stack([np.cos(th), np.sin(th)]) * mag[:, None]

    if flux_fn is None:
        def A(xx, qq):
            return flux(spec, spec.weight(xx), qq)
    else:
        A = flux_fn

    q, q1, q2 = rand_q(), rand_q(), rand_q()
    lam = rng.choice([-1.0, 1.0], n) * 10.0 ** rng.uniform(-2, 2, n)
    nq = np.linalg.norm(q, axis=1)
    Aq = A(x, q)
    viol = []

    def record(name, margin, bad):
        if np.any(bad):
            i = int(np.flatnonzero(bad)[np.argmin(margin[bad])])
            viol.append({"condition": name, "margin": float(margin[i]), "x": x[i].tolist(),
                         "q": q[i].tolist(), "q1": q1[i].tolist(), "q2": q2[i].tolist(),
                         "lambda": float(lam[i])})

    pos = w > 0
    coer = np.where(pos, (np.einsum("ij,ij->i", Aq, q) - spec.alpha * w * nq ** p)
                    / np.where(pos, w * nq ** p, 1.0), 0.0)
    record("coercivity", coer, coer < -1e-10)
    bnd = np.where(pos, (spec.beta * w * nq ** (p - 1) - np.linalg.norm(Aq, axis=1))
                   / np.where(pos, w * nq ** (p - 1), 1.0), 0.0)
    record("growth bound", bnd, bnd < -1e-10)
    d = q1 - q2
    nd = np.linalg.norm(d, axis=1)
    scale = w * nd ** 2 * (np.linalg.norm(q1, axis=1) + np.linalg.norm(q2, axis=1)) ** (p - 2)
    mono = np.einsum("ij,ij->i", A(x, q1) - A(x, q2), d) / np.where(pos, scale, 1.0)
    mono = np.where(pos, mono, np.inf)
    record("strict monotonicity", mono, (mono <= 0) & pos)
    lhs = A(x, lam[:, None] * q)
    rhs = (lam * np.abs(lam) ** (p - 2))[:, None] * Aq
    denom = np.abs(lam) ** (p - 1) * np.linalg.norm(Aq, axis=1)
    hom = np.linalg.norm(lhs - rhs, axis=1) / np.where(denom > 0, denom, 1.0)
    record("homogeneity", -hom, hom > 1e-10)
    margins = {
        "coercivity": float(coer.min()),
        "growth_bound": float(bnd.min()),
        "monotonicity": float(mono.min()),
        "homogeneity_defect": float(hom.max()),
    }
    return StructureReport(not viol, n, margins, viol)


# --------------------------------------------------------------------------
# Muckenhoupt A_p

@dataclass
class ApReport:
    estimate: float
    probe: list
    flagged: bool
    balls: int

    def __str__(self):
        return (f"A_p estimate {self.estimate:.4g} over {self.balls} balls; "
                f"probe {['%.3g' % v for v in self.probe]}; flagged={self.flagged}")


def _radial_ball_integral(gamma, c, d, r):
    """Integral of c|x|^gamma over the disc B(center, r) with |center| = d.

    Integrates rho^(gamma+1) times the angular measure of {|x| = rho} inside
    the ball; the part of the ball's full circles around the origin is done
    in closed form.
    """
    if d < r and gamma <= -2:
        return np.inf

    def arc(rho):
        if rho <= r - d:
            return 2 * np.pi
        if rho >= r + d or rho <= d - r:
            return 0.0
        cosv = (rho * rho + d * d - r * r) / (2 * rho * d)
        return 2 * np.arccos(np.clip(cosv, -1.0, 1.0))

    total = 0.0
    lo = abs(d - r)
    if d < r:
        total += 2 * np.pi * (r - d) ** (gamma + 2) / (gamma + 2)
    if d > 0:
        if lo > 0:
            total += integrate.quad(lambda t: t ** (gamma + 1) * arc(t), lo, d + r, limit=200)[0]
        else:
            total += integrate.quad(arc, 0.0, d + r, weight="alg", wvar=(gamma + 1, 0.0), limit=200)[0]
    return c * total


def ap_ratio(weight: WeightSpec, p: float, center, radius: float) -> float:
    """(int_B w)(int_B w^(1/(1-p)))^(p-1) / |B|^p for one ball."""
    cx = np.asarray(center, dtype=float) - np.asarray(weight.center)
    d = float(np.hypot(*cx))
    area = np.pi * radius ** 2
    if weight.is_constant:
        return 1.0
    g = weight.gamma
    i1 = _radial_ball_integral(g, weight.c, d, radius)
    i2 = _radial_ball_integral(g / (1 - p), weight.c ** (1 / (1 - p)), d, radius)
    if not np.isfinite(i2):
        return np.inf
    return float(i1 * i2 ** (p - 1) / area ** p)


def check_ap_weight(weight: WeightSpec, p: float, ball_sample_count: int = 1000, seed: int = 0,
                    box=(-1.0, 1.0), probe_levels: int = 12) -> ApReport:
    """Estimate the A_p constant of a radial weight by quadrature over random balls.

    Besides the random balls (centres uniform in ``box``, radii up to the box
    half-width) a probe family B(2^-k e, 2^-k (1 - 2^-k)) shrinks towards the
    weight centre while its gap to it closes; a non-decaying growth of the
    probe ratios flags a weight outside A_p.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if weight.gamma <= -2:
        raise ValueError("weight is not locally integrable")
    rng = np.random.default_rng(seed)
    half = 0.5 * (box[1] - box[0])
    best = 0.0
    for _ in range(ball_sample_count):
        c = np.asarray(weight.center) + rng.uniform(box[0], box[1], 2)
        r = half * rng.uniform(1e-3, 1.0)
        best = max(best, ap_ratio(weight, p, c, r))
    probe = []
    for k in range(1, probe_levels + 1):
        s = 2.0 ** -k
        probe.append(ap_ratio(weight, p, np.asarray(weight.center) + (s, 0.0), s * (1 - s)))
    inc = np.diff(probe)
    # increments of an A_p weight's probe decay geometrically; for gamma >= 2(p-1)
    # they stall (log divergence) or grow
    flagged = bool(np.isinf(best) or (np.all(inc > 0) and inc[-1] >= 0.9 * inc[-4]))
    return ApReport(float(best), [float(v) for v in probe], flagged, ball_sample_count)
