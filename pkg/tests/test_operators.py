import numpy as np
import pytest

from perron_lab.operators import (OperatorSpec, WeightSpec, a_flux, ap_ratio, check_ap_weight,
                                  check_structure_conditions, energy, flux, full_residual, hessian,
                                  residual, stiffness)

ANISO = ((2.0, 0.5), (0.5, 1.0))


def test_flux_p2_is_linear():
    spec = OperatorSpec(2.0)
    q = np.array([[1.0, -2.0], [0.0, 3.0]])
    assert np.allclose(flux(spec, np.ones(2), q), q)


def test_flux_zero_gradient_is_zero():
    for p in (1.2, 2.0, 3.0):
        assert np.all(a_flux(OperatorSpec(p), [0.3, 0.4], [0.0, 0.0]) == 0.0)


def test_a_flux_rejects_bad_q():
    with pytest.raises(ValueError):
        a_flux(OperatorSpec(2.0), [0, 0], [np.nan, 1.0])


@pytest.mark.parametrize("kwargs", [
    {"p": 1.0}, {"p": np.inf}, {"p": 2.0, "anisotropy": ((1.0, 2.0), (0.0, 1.0))},
    {"p": 2.0, "anisotropy": ((1.0, 0.0), (0.0, -1.0))},
])
def test_operator_spec_validation(kwargs):
    with pytest.raises(ValueError):
        OperatorSpec(**kwargs)


def test_weight_validation():
    with pytest.raises(ValueError):
        WeightSpec.constant(0.0)
    with pytest.raises(ValueError):
        WeightSpec.power(-2.0)
    assert WeightSpec.power(1.0)([[3.0, 4.0]])[0] == pytest.approx(5.0)


def test_spec_round_trip():
    spec = OperatorSpec(3.0, WeightSpec.product(0.5, 0.5, (0.1, 0.2)), ANISO)
    assert OperatorSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_energy_of_affine_field(square8, p):
    spec = OperatorSpec(p, WeightSpec.constant(2.0))
    u = square8.interpolate(lambda x, y: 3 * x - 4 * y)
    assert energy(square8, spec, u) == pytest.approx(2.0 * 5.0 ** p)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_affine_field_has_zero_interior_residual(square8, p):
    spec = OperatorSpec(p, anisotropy=ANISO)
    u = square8.interpolate(lambda x, y: 0.3 * x + 0.7 * y + 1)
    assert np.abs(residual(square8, spec, u)).max() < 1e-12


def test_stiffness_matches_p2_hessian(disc_mesh):
    spec = OperatorSpec(2.0, WeightSpec.power(1.0))
    wt = spec.weight(disc_mesh.barycenters)
    H = hessian(disc_mesh, spec, np.zeros(disc_mesh.n_nodes), 0.0, wt)
    assert abs(H - stiffness(disc_mesh, wt)).max() < 1e-12


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_hessian_is_residual_jacobian(square8, rng, p):
    spec = OperatorSpec(p, anisotropy=ANISO)
    u = square8.interpolate(lambda x, y: np.sin(2 * x) + y ** 2) + 0.01 * rng.standard_normal(square8.n_nodes)
    v = rng.standard_normal(square8.n_nodes)
    H = hessian(square8, spec, u, 0.0)
    t = 1e-6
    fd = (full_residual(square8, spec, u + t * v) - full_residual(square8, spec, u - t * v)) / (2 * t)
    assert np.allclose(H @ v, fd, rtol=1e-5, atol=1e-6 * np.abs(fd).max())


def test_structure_negative_control():
    spec = OperatorSpec(2.0)
    # a flux that is decreasing along one axis is not monotone
    rep = check_structure_conditions(spec, 2000, flux_fn=lambda x, q: q * np.array([1.0, -1.0]))
    assert not rep.passed
    names = {v["condition"] for v in rep.violations}
    assert "strict monotonicity" in names and "coercivity" in names


def test_structure_report_is_seeded():
    spec = OperatorSpec(3.0, WeightSpec.power(0.5))
    a = check_structure_conditions(spec, 500, seed=7)
    b = check_structure_conditions(spec, 500, seed=7)
    assert a.margins == b.margins


def test_ap_constant_weight_is_one():
    assert ap_ratio(WeightSpec.constant(3.0), 2.0, (0.2, 0.1), 0.5) == 1.0


def test_ap_power_weights():
    assert not check_ap_weight(WeightSpec.power(1.0), 2.0, 50).flagged
    assert not check_ap_weight(WeightSpec.power(0.5), 3.0, 50).flagged
    assert check_ap_weight(WeightSpec.power(2.5), 2.0, 50).flagged


def test_ap_ratio_ball_around_origin():
    # closed form for a ball centred at the pole: (2/(g+2)) (2/(g'+2))^(p-1) with g' = g/(1-p)
    g, p = 1.0, 2.0
    gp = g / (1 - p)
    expect = (2 / (g + 2)) * (2 / (gp + 2)) ** (p - 1)
    assert ap_ratio(WeightSpec.power(g), p, (0.0, 0.0), 0.7) == pytest.approx(expect, rel=1e-6)
