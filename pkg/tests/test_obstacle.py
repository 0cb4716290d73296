import numpy as np
import pytest

from perron_lab.dirichlet import solve_dirichlet
from perron_lab.mesh import unit_square_mesh
from perron_lab.obstacle import InfeasibleObstacle, ObstacleSpec, solve_obstacle
from perron_lab.operators import OperatorSpec, WeightSpec
from perron_lab.oracle import brute_force_obstacle


def bump(x, y):
    return 0.25 - 4 * ((x - 0.5) ** 2 + (y - 0.5) ** 2)


def test_matches_brute_force_on_tiny_mesh():
    m = unit_square_mesh(4)
    psi = m.interpolate(bump)
    f = np.zeros(m.n_nodes)
    rep = solve_obstacle(m, OperatorSpec(2.0), ObstacleSpec(psi, f))
    assert np.abs(rep.solution - brute_force_obstacle(m, psi, f)).max() < 1e-8


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_kkt_conditions(square16, p):
    ob = ObstacleSpec.from_functions(square16, bump, lambda x, y: 0 * x)
    rep = solve_obstacle(square16, OperatorSpec(p), ob, tol=1e-9)
    u, inner = rep.solution, square16.interior_nodes
    assert np.all(u[inner] >= ob.psi[inner] - 1e-12)
    assert rep.kkt_violation <= 1e-8
    assert rep.active.any()
    assert np.all(rep.residual[inner] >= -1e-8)
    off = inner[~rep.active[inner]]
    assert np.abs(rep.residual[off]).max() <= 1e-8


def test_inactive_obstacle_gives_dirichlet_solution(square8):
    f = square8.interpolate(lambda x, y: x * y)
    hf = solve_dirichlet(square8, OperatorSpec(3.0), f, tol=1e-11).solution
    ob = ObstacleSpec(hf - 1.0, f)
    rep = solve_obstacle(square8, OperatorSpec(3.0), ob, tol=1e-11)
    assert not rep.active.any()
    assert np.abs(rep.solution - hf).max() < 1e-9


def test_unconstrained_nodes(square8):
    psi = square8.interpolate(bump)
    psi[square8.nearest_node((0.5, 0.5))] = -np.inf
    ob = ObstacleSpec(psi, np.zeros(square8.n_nodes))
    rep = solve_obstacle(square8, OperatorSpec(2.0), ob)
    assert rep.kkt_violation <= 1e-7
    assert not rep.active[square8.nearest_node((0.5, 0.5))]


def test_solution_is_supersolution(square16):
    spec = OperatorSpec(2.0, WeightSpec.power(1.0))
    ob = ObstacleSpec.from_functions(square16, bump, lambda x, y: 0.1 * x)
    rep = solve_obstacle(square16, spec, ob)
    assert rep.residual[square16.interior_nodes].min() >= -1e-7


def test_infeasible_obstacle(square8):
    psi = np.ones(square8.n_nodes)
    with pytest.raises(InfeasibleObstacle):
        solve_obstacle(square8, OperatorSpec(2.0), ObstacleSpec(psi, np.zeros(square8.n_nodes)))


def test_spec_validation():
    with pytest.raises(ValueError):
        ObstacleSpec(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        ObstacleSpec(np.array([0.0, np.inf]), np.zeros(2))


def test_obstacle_monotonicity(square16):
    spec = OperatorSpec(3.0)
    f = np.zeros(square16.n_nodes)
    lo = ObstacleSpec.from_functions(square16, bump, lambda x, y: 0 * x)
    hi = ObstacleSpec(lo.psi + square16.interpolate(lambda x, y: 0.1 * x * (1 - x) * y * (1 - y)), f)
    u1 = solve_obstacle(square16, spec, lo, tol=1e-10).solution
    u2 = solve_obstacle(square16, spec, hi, tol=1e-10).solution
    assert np.all(u1 <= u2 + 1e-8)


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_energy_optimal_over_feasible_set(square8, rng, p):
    from perron_lab.operators import energy
    spec = OperatorSpec(p)
    ob = ObstacleSpec.from_functions(square8, bump, lambda x, y: 0.2 * x)
    u = solve_obstacle(square8, spec, ob, tol=1e-10).solution
    e = energy(square8, spec, u)
    inner = square8.interior_nodes
    for _ in range(20):
        v = u.copy()
        v[inner] += np.abs(rng.standard_normal(len(inner))) * 0.05 * rng.uniform()
        v[inner] = np.maximum(v[inner] - 0.03 * rng.standard_normal(len(inner)), ob.psi[inner])
        assert e <= energy(square8, spec, v) + 1e-10
