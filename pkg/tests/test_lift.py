import math

import numpy as np
import pytest

from anisocrit.domain import ScalarField
from anisocrit.errors import ValidationError
from anisocrit.lift import (energy_identity_check, laplacian_identity_spotcheck, lift,
                            omega_k, orbit_coordinates, restrict, sine_field)
from anisocrit.nehari import SolverOptions, ground_state, minimize_sphere

from conftest import weighted_spec


def test_omega_k():
    assert omega_k(1) == pytest.approx(2 * math.pi, rel=1e-15)
    assert omega_k(2) == pytest.approx(4 * math.pi, rel=1e-15)
    assert omega_k(3) == pytest.approx(2 * math.pi ** 2, rel=1e-15)


@pytest.mark.parametrize("k", [1, 2])
def test_lift_orbit_constant_and_roundtrip(grid8, rng, k):
    u = ScalarField(rng.standard_normal(grid8.size), grid8)
    v = lift(u, k, angular_samples=5)
    assert v.points.shape == (grid8.size * 5, 3 + k)
    assert np.array_equal(v.values.reshape(-1, 5), np.repeat(u.values[:, None], 5, axis=1))
    assert np.array_equal(restrict(v).values, u.values)
    back = orbit_coordinates(v.points, k)
    assert np.allclose(back, np.repeat(grid8.interior_coordinates(), 5, axis=0), atol=1e-14)


def test_lift_constant_and_errors(grid8):
    v = lift(ScalarField(np.ones(grid8.size), grid8), 1)
    assert np.all(v.values == 1.0)
    with pytest.raises(ValidationError):
        lift(ScalarField(np.ones(grid8.size), grid8), 0)


def test_energy_identity_small_gap():
    res = energy_identity_check(sine_field(weighted_spec(1, 16)), weighted_spec(1, 16))
    assert res.gap < 0.01
    assert res.lhs == pytest.approx(res.rhs, rel=0.01)


@pytest.mark.parametrize("u,k", [
    (lambda x: x[0] ** 2, 1),
    (lambda x: x[0] ** 3 * x[1] + x[2] ** 2, 2),
    (lambda x: 3.0, 1),
    (lambda x: x[1], 1),
])
def test_laplacian_identity(u, k):
    pts = np.array([[1.2, 0.3, 0.7], [1.8, 0.5, 0.1], [1.5, 0.9, 0.4]])
    assert laplacian_identity_spotcheck(u, k, pts, direction=np.ones(k + 1)) < 1e-6
    with pytest.raises(ValidationError):
        laplacian_identity_spotcheck(u, k, [[0.0, 0.1, 0.2]])


def test_scaled_forms_scale_the_level(weighted8):
    opts = SolverOptions(starts=1)
    base = ground_state(weighted8, 0.0, opts)
    w = omega_k(1)
    scaled = minimize_sphere(weighted8.functional.scaled(w), 0.0, weighted8.basis, 0, opts,
                             centre=weighted8.kappa.xi)
    assert scaled.ell == pytest.approx(w * base.ell, rel=1e-8)
    assert np.argmax(np.abs(scaled.u.values)) == np.argmax(np.abs(base.u.values))
    assert np.allclose(scaled.u.values, base.u.values, rtol=1e-4,
                       atol=1e-4 * np.abs(base.u.values).max())
