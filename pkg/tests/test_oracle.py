import numpy as np
import pytest

from perron_lab.mesh import DomainDescriptor, build_mesh, unit_square_mesh
from perron_lab.oracle import (ClosedForm, brute_force_obstacle, consistency_residual, eval_closed_form,
                               walk_on_spheres)
from perron_lab.parallel import thread_count


def test_closed_form_values():
    assert eval_closed_form(ClosedForm("affine", (3, -2, 0)), [1, 1]) == 1.0
    assert eval_closed_form(ClosedForm("harmonic-poly", (3,)), [1, 1]) == pytest.approx(-2.0)
    pk = ClosedForm("poisson-kernel", (0.0,))
    assert eval_closed_form(pk, [0, 0]) == pytest.approx(1.0)
    assert eval_closed_form(pk, [0, 1]) == 0.0
    assert eval_closed_form(ClosedForm("log-radial", (1, 2)), [np.e, 0]) == pytest.approx(3.0)
    rp = ClosedForm("radial-p", (1, 0), 3.0)
    assert eval_closed_form(rp, [4, 0]) == pytest.approx(2.0)
    assert rp.pole.tolist() == [0.0, 0.0]


@pytest.mark.parametrize("form, x", [
    (ClosedForm("poisson-kernel", (0.0,)), [1.0, 0.0]),
    (ClosedForm("poisson-kernel", (0.0,)), [2.0, 0.0]),
    (ClosedForm("log-radial", (1, 0)), [0.0, 0.0]),
])
def test_closed_form_singular_points(form, x):
    with pytest.raises(ValueError):
        eval_closed_form(form, x)


@pytest.mark.parametrize("kind, params, p", [
    ("unknown", (), 2.0), ("affine", (1, 2), 2.0), ("harmonic-poly", (2,), 3.0),
    ("radial-p", (1, 0), 2.0), ("harmonic-poly", (1.5,), 2.0),
])
def test_closed_form_validation(kind, params, p):
    with pytest.raises(ValueError):
        ClosedForm(kind, params, p)


def test_closed_form_round_trip():
    f = ClosedForm("radial-p", (1.5, -0.5), 4.0)
    assert ClosedForm.from_dict(f.to_dict()) == f


def test_vectorised_call_matches_pointwise():
    f = ClosedForm("harmonic-poly", (4,))
    x, y = np.array([0.1, 0.5]), np.array([0.3, -0.2])
    assert np.allclose(f(x, y), [eval_closed_form(f, [a, b]) for a, b in zip(x, y)])


def test_consistency_residual_decays():
    form = ClosedForm("harmonic-poly", (4,))
    r = [consistency_residual(unit_square_mesh(n), form) for n in (8, 16, 32)]
    assert r[0] > r[1] > r[2]
    assert consistency_residual(unit_square_mesh(8), ClosedForm("affine", (1, 2, 3))) < 1e-12


def test_radial_p_consistency_on_annulus():
    form = ClosedForm("radial-p", (1.0, 0.0), 3.0)
    dom = DomainDescriptor.annulus(0.5, 1.0)
    r = [consistency_residual(build_mesh(dom, h), form) for h in (0.1, 0.05)]
    assert r[1] < r[0]


def test_wos_affine_is_unbiased():
    est, se = walk_on_spheres(DomainDescriptor.unit_square(), lambda x, y: 2 * x - y, [0.3, 0.6], 4000)
    assert 0 < se < 0.05
    assert abs(est) < 4 * se


def test_wos_seeded_and_thread_independent(monkeypatch):
    dom = DomainDescriptor.disc()
    f = ClosedForm("harmonic-poly", (2,))
    monkeypatch.setenv("PERRON_LAB_THREADS", "1")
    a = walk_on_spheres(dom, f, [0.2, 0.1], 3000, seed=5)
    monkeypatch.setenv("PERRON_LAB_THREADS", "3")
    b = walk_on_spheres(dom, f, [0.2, 0.1], 3000, seed=5)
    c = walk_on_spheres(dom, f, [0.2, 0.1], 3000, seed=6)
    assert a == b
    assert a != c
    assert abs(a[0] - f(0.2, 0.1)) < 4 * a[1]


def test_wos_arguments():
    dom = DomainDescriptor.unit_square()
    with pytest.raises(ValueError):
        walk_on_spheres(dom, lambda x, y: x, [2.0, 0.5], 1000)
    with pytest.raises(ValueError):
        walk_on_spheres(dom, lambda x, y: x, [0.5, 0.5], 10)
    with pytest.raises(ValueError):
        walk_on_spheres(dom, ClosedForm("radial-p", (1, 0), 3.0), [0.5, 0.5], 1000)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("PERRON_LAB_THREADS", "2")
    assert thread_count() == 2
    monkeypatch.setenv("PERRON_LAB_THREADS", "zero")
    with pytest.raises(ValueError):
        thread_count()
    monkeypatch.setenv("PERRON_LAB_THREADS", "0")
    with pytest.raises(ValueError):
        thread_count()


def test_brute_force_without_contact():
    m = unit_square_mesh(4)
    f = m.interpolate(lambda x, y: x)
    u = brute_force_obstacle(m, np.full(m.n_nodes, -1.0), f)
    assert np.allclose(u, f)


def test_brute_force_limits():
    m = unit_square_mesh(6)
    with pytest.raises(ValueError):
        brute_force_obstacle(m, np.ones(m.n_nodes), np.zeros(m.n_nodes))
    psi = np.zeros(m.n_nodes)
    psi[m.boundary_nodes] = -1
    with pytest.raises(ValueError, match="cap"):
        brute_force_obstacle(m, psi, np.zeros(m.n_nodes))
