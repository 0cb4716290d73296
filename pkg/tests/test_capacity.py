import numpy as np
import pytest

from perron_lab.capacity import (PsiConstructionError, build_psi_sequence, estimate_capacity,
                                 sobolev_norm, weighted_lumped_mass)
from perron_lab.mesh import rectangle_mesh
from perron_lab.operators import OperatorSpec, WeightSpec


def box(n, side=4.0):
    return rectangle_mesh(-side / 2, -side / 2, side / 2, side / 2, n, n)


@pytest.fixture(scope="module")
def box16():
    return box(16)


def test_minimiser_shape(box16):
    E = box16.find_nodes([[0.0, 0.0]])
    est = estimate_capacity(box16, OperatorSpec(2.0), E)
    phi = est.minimizer
    assert np.all((0 <= phi) & (phi <= 1))
    assert np.all(phi[est.pinned] == 1.0)
    assert np.all(phi[box16.boundary_nodes] == 0.0)
    assert est.value == pytest.approx(est.norm_p ** 2)
    assert est.value == pytest.approx(sobolev_norm(box16, OperatorSpec(2.0), phi) ** 2)


def test_point_capacity_decreases():
    vals = [estimate_capacity(m, OperatorSpec(2.0), m.find_nodes([[0.0, 0.0]])).value
            for m in (box(16), box(32))]
    assert vals[1] < vals[0]


def test_segment_heavier_than_point(box16):
    spec = OperatorSpec(2.0)
    pt = estimate_capacity(box16, spec, box16.find_nodes([[0.0, 0.0]])).value
    seg_pts = [[x, 0.0] for x in np.linspace(-0.5, 0.5, 5)]
    seg = estimate_capacity(rectangle_mesh(-4, -4, 4, 4, 32, 32), spec,
                            rectangle_mesh(-4, -4, 4, 4, 32, 32).find_nodes(seg_pts)).value
    assert seg > pt


def test_linear_in_weight_constant(box16):
    E = box16.find_nodes([[0.0, 0.0]])
    a = estimate_capacity(box16, OperatorSpec(1.5), E).value
    b = estimate_capacity(box16, OperatorSpec(1.5, WeightSpec.constant(1e-3)), E).value
    assert b == pytest.approx(1e-3 * a, rel=1e-6)


def test_preconditions(box16):
    with pytest.raises(ValueError):
        estimate_capacity(box16, OperatorSpec(2.0), box16.find_nodes([[2.0, 0.0]]))
    small = box(8, side=2.0)
    with pytest.raises(ValueError):
        estimate_capacity(small, OperatorSpec(2.0), small.find_nodes([[0.0, 0.0]]))
    assert estimate_capacity(box16, OperatorSpec(2.0), []).value == 0.0


def test_weighted_mass(box16):
    spec = OperatorSpec(2.0, WeightSpec.constant(3.0))
    assert weighted_lumped_mass(box16, spec).sum() == pytest.approx(3.0 * 16.0)


def test_psi_sequence_invariants(box16):
    spec = OperatorSpec(2.0, WeightSpec.constant(1e-3))
    seq = build_psi_sequence(box16, spec, box16.find_nodes([[0.0, 0.0]]), 3)
    assert seq.check_invariants(box16) == []
    assert all(n < 2.0 ** -j for j, n in enumerate(seq.psi_norms))
    assert np.all(seq.psi[-1] == 0.0)
    assert seq.hops == sorted(seq.hops, reverse=True)


def test_psi_sequence_fails_for_heavy_weight(box16):
    with pytest.raises(PsiConstructionError) as err:
        build_psi_sequence(box16, OperatorSpec(2.0), box16.find_nodes([[0.0, 0.0]]), 4)
    assert err.value.partial["reached_K"] == 0
    assert "maximal achievable K is 0" in str(err.value)


def test_psi_sequence_arguments(box16):
    E = box16.find_nodes([[0.0, 0.0]])
    with pytest.raises(ValueError):
        build_psi_sequence(box16, OperatorSpec(2.0), E, 0)
    with pytest.raises(ValueError):
        build_psi_sequence(box16, OperatorSpec(2.0), E, 2, hops=[0, 1])
    empty = build_psi_sequence(box16, OperatorSpec(2.0), [], 2)
    assert empty.psi_norms == [0.0, 0.0, 0.0]


def test_p2_capacity_matches_dense_solve():
    from perron_lab.oracle import _dense_laplacian
    m = box(8)
    E = m.find_nodes([[0.0, 0.0]])
    est = estimate_capacity(m, OperatorSpec(2.0), E, tol=1e-13)
    A = _dense_laplacian(m) + np.diag(m.lumped_mass)
    phi = np.zeros(m.n_nodes)
    phi[m.ring(E, 1)] = 1.0
    free = np.setdiff1d(m.interior_nodes, m.ring(E, 1))
    fixed = np.setdiff1d(np.arange(m.n_nodes), free)
    phi[free] = np.linalg.solve(A[np.ix_(free, free)], -A[np.ix_(free, fixed)] @ phi[fixed])
    assert est.value == pytest.approx(phi @ A @ phi, rel=1e-10)


def test_edge_fails_early_with_unit_weight():
    m = rectangle_mesh(-4, -4, 4, 4, 32, 32)
    E = m.find_nodes([[x, 0.0] for x in np.linspace(-0.5, 0.5, 5)])
    with pytest.raises(PsiConstructionError) as err:
        build_psi_sequence(m, OperatorSpec(2.0), E, 2)
    assert err.value.partial["reached_K"] < 2
