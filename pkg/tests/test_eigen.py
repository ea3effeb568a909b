import numpy as np
import pytest

from anisocrit.domain import CoefficientField, build_grid
from anisocrit.eigen import (dense_oracle, locate_interval, project_to_Y, smallest_eigenpairs)
from anisocrit.errors import SpectrumError, ValidationError
from anisocrit.operators import assemble

from conftest import classical_spec, weighted_spec

X1 = CoefficientField.power(1)


@pytest.fixture(scope="module")
def forms():
    grid = build_grid(weighted_spec(1, 6))
    S, M, _ = assemble(grid, X1, X1, X1)
    return S, M


def test_iterative_matches_dense(forms):
    S, M = forms
    basis = smallest_eigenpairs(S, M, 5, tol=1e-10)
    ref = dense_oracle(S, M)[:5]
    assert np.allclose(basis.values, ref, rtol=1e-10)
    assert np.all(basis.residuals <= 1e-10)


def test_basis_b_orthonormal(forms):
    S, M = forms
    E = smallest_eigenpairs(S, M, 4).vectors
    G = E.T @ (M.weights[:, None] * E)
    assert np.allclose(G, np.eye(4), atol=1e-8)


def test_seed_determinism(forms):
    S, M = forms
    a = smallest_eigenpairs(S, M, 4, seed=7)
    b = smallest_eigenpairs(S, M, 4, seed=7)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.vectors, b.vectors)


def test_classical_first_eigenvalue():
    grid = build_grid(classical_spec(12))
    one = CoefficientField.constant(1.0)
    S, M, _ = assemble(grid, one, one, one)
    vals = smallest_eigenpairs(S, M, 4).values
    # 7-point stencil: exact discrete values are known in closed form
    h = np.pi / 12
    disc = lambda k: (4 / h ** 2) * np.sin(k * h / 2) ** 2
    assert vals[0] == pytest.approx(3 * disc(1), rel=1e-9)
    assert np.allclose(vals[1:4], 2 * disc(1) + disc(2), rtol=1e-9)


def test_mode_count_validation(forms):
    S, M = forms
    with pytest.raises(ValidationError):
        smallest_eigenpairs(S, M, 0)


def test_locate_interval(forms):
    S, M = forms
    basis = smallest_eigenpairs(S, M, 4)
    v = basis.values
    assert locate_interval(-100.0, basis).m == 0
    loc = locate_interval(0.5 * (v[0] + v[1]), basis)
    assert (loc.m, loc.lower, loc.upper) == (1, v[0], v[1])
    assert locate_interval(v[0], basis).m == 1
    with pytest.raises(SpectrumError, match="increase --modes"):
        locate_interval(v[-1] + 1.0, basis)


def test_project_to_Y_orthogonal(forms, rng):
    S, M = forms
    basis = smallest_eigenpairs(S, M, 3)
    w = project_to_Y(rng.standard_normal(S.size), basis, 2, S)
    assert np.allclose(basis.vectors[:, :2].T @ (S.matrix @ w), 0.0, atol=1e-10)
