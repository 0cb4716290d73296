import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from perron_lab.dirichlet import solve_dirichlet
from perron_lab.mesh import unit_square_mesh
from perron_lab.obstacle import ObstacleSpec, solve_obstacle
from perron_lab.operators import OperatorSpec, energy, flux

MESH = unit_square_mesh(6)
ps = st.sampled_from([1.5, 2.0, 3.0, 4.0])
finite = st.floats(-10, 10, allow_nan=False)
coeffs = st.lists(finite, min_size=4, max_size=4)


def data(c):
    return MESH.interpolate(lambda x, y: c[0] * x + c[1] * np.sin(3 * y) + c[2] * x * y + c[3] * np.cos(2 * x))


@settings(max_examples=60, deadline=None)
@given(p=ps, q=st.tuples(finite, finite), lam=st.floats(-100, 100).filter(lambda v: abs(v) > 1e-3))
def test_flux_homogeneity(p, q, lam):
    spec = OperatorSpec(p)
    a = flux(spec, [1.0], [q])[0]
    b = flux(spec, [1.0], [(lam * q[0], lam * q[1])])[0]
    assert np.allclose(b, lam * abs(lam) ** (p - 2) * a, rtol=1e-9, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(p=ps, q1=st.tuples(finite, finite), q2=st.tuples(finite, finite))
def test_flux_monotone(p, q1, q2):
    spec = OperatorSpec(p, anisotropy=((2.0, 0.3), (0.3, 1.0)))
    a = flux(spec, [1.0, 1.0], [q1, q2])
    assert (a[0] - a[1]) @ (np.subtract(q1, q2)) >= -1e-9


@settings(max_examples=30, deadline=None)
@given(p=ps, c=coeffs, lam=st.floats(-5, 5))
def test_energy_homogeneity(p, c, lam):
    spec = OperatorSpec(p)
    u = data(c)
    assert np.isclose(energy(MESH, spec, lam * u), abs(lam) ** p * energy(MESH, spec, u), rtol=1e-9, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(p=ps, c=coeffs, shift=st.lists(st.floats(0, 3), min_size=4, max_size=4))
def test_comparison_principle(p, c, shift):
    spec = OperatorSpec(p)
    g1 = data(c)
    g2 = g1 + np.abs(data(shift)) + 0.01
    u1 = solve_dirichlet(MESH, spec, g1, tol=1e-11).solution
    u2 = solve_dirichlet(MESH, spec, g2, tol=1e-11).solution
    assert np.all(u1 <= u2 + 1e-8)
    b = MESH.boundary_nodes
    assert g1[b].min() - 1e-8 <= u1.min() and u1.max() <= g1[b].max() + 1e-8


@settings(max_examples=15, deadline=None)
@given(p=ps, c=coeffs, level=st.floats(-2, 2))
def test_obstacle_dominates(p, c, level):
    spec = OperatorSpec(p)
    f = data(c)
    psi = MESH.interpolate(lambda x, y: level - 8 * ((x - 0.5) ** 2 + (y - 0.4) ** 2))
    psi = np.minimum(psi, f + 0.0)
    psi[MESH.boundary_nodes] = np.minimum(psi[MESH.boundary_nodes], f[MESH.boundary_nodes])
    rep = solve_obstacle(MESH, spec, ObstacleSpec(psi, f), tol=1e-10)
    hf = solve_dirichlet(MESH, spec, f, tol=1e-10).solution
    assert np.all(rep.solution >= psi - 1e-12)
    assert np.all(rep.solution >= hf - 1e-7)
