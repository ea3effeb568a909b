import numpy as np
import pytest

from anisocrit.domain import (Ball, Box, CoefficientField, DomainSpec, ScalarField,
                              boundary_normals, build_grid, parse_coefficient, sample_coefficient,
                              sphere_directions)
from anisocrit.errors import ConfigurationError, ValidationError

from conftest import weighted_spec


def test_box_grid_counts():
    grid = build_grid(weighted_spec(1, 8))
    assert grid.size == 7 ** 3
    assert np.allclose(grid.h, [1 / 8] * 3)
    x = grid.interior_coordinates()
    assert x[:, 0].min() == pytest.approx(1.125)
    assert x[:, 0].max() == pytest.approx(1.875)


def test_full_roundtrip(grid8, rng):
    u = rng.standard_normal(grid8.size)
    full = grid8.to_full(u)
    assert full.shape == (9, 9, 9)
    assert np.all(full[0] == 0) and np.all(full[-1] == 0)
    assert np.array_equal(grid8.from_full(full), u)


def test_ball_mask_interior():
    spec = DomainSpec(n=3, shape=Ball((1.5, 0, 0), 0.4), k=1, grid=10)
    grid = build_grid(spec)
    x = grid.interior_coordinates()
    assert np.all(np.sum((x - [1.5, 0, 0]) ** 2, axis=1) < 0.4 ** 2)
    assert spec.alpha == pytest.approx(1.1) and spec.beta == pytest.approx(1.9)


@pytest.mark.parametrize("doc", [
    {"n": 2, "shape": {"box": [[0, 1], [0, 1]]}, "grid": 8},
    {"n": 3, "shape": {"box": [[0, 1], [0, 1], [0, 1]]}, "k": 1, "grid": 8},
    {"n": 3, "shape": {"box": [[1, 1], [0, 1], [0, 1]]}, "grid": 8},
    {"n": 3, "shape": {"box": [[1, 2], [0, 1], [0, 1]]}, "grid": 2},
    {"n": 3, "shape": {"cube": 1}, "grid": 8},
    {"n": 3, "shape": {"ball": {"center": [0, 0, 0], "radius": -1}}, "grid": 8},
    {"shape": {"box": [[1, 2], [0, 1], [0, 1]]}},
])
def test_invalid_domains(doc):
    with pytest.raises(ConfigurationError):
        DomainSpec.from_dict(doc)


def test_dict_roundtrip():
    spec = weighted_spec(2, (8, 6, 4))
    again = DomainSpec.from_dict(spec.to_dict())
    assert again == spec


@pytest.mark.parametrize("doc,expect", [
    ("x1^k", (2, 1.0, 0.0)),
    ("x1^3", (3, 1.0, 0.0)),
    ("2*x1^1+0.5", (1, 2.0, 0.5)),
    ({"power": "k", "scale": 3}, (2, 3.0, 0.0)),
])
def test_parse_power(doc, expect):
    c = parse_coefficient(doc, k=2)
    assert (c.exponent, c.scale, c.shift) == expect


def test_parse_constant_and_errors():
    assert parse_coefficient(1, k=0).value == 1.0
    assert parse_coefficient("2.5", k=0).value == 2.5
    with pytest.raises(ConfigurationError):
        parse_coefficient("sin(x1)", k=0)
    with pytest.raises(ConfigurationError):
        parse_coefficient({"file": "missing.sbnf"}, k=0)


def test_coefficient_positivity(grid8):
    neg = CoefficientField.power(1, scale=1.0, shift=-1.5)
    with pytest.raises(ValidationError):
        sample_coefficient(neg, grid8)
    with pytest.raises(ValidationError):
        CoefficientField.tabulated(np.r_[np.ones(5), 0.0])
    vals = sample_coefficient(CoefficientField.power(2), grid8)
    assert np.allclose(vals, grid8.interior_coordinates()[:, 0] ** 2)


def test_scalar_field_validation(grid8):
    with pytest.raises(ValidationError):
        ScalarField(np.ones(3), grid8)
    with pytest.raises(ValidationError):
        ScalarField(np.full(grid8.size, np.nan), grid8)


@pytest.mark.parametrize("n", [3, 4])
def test_sphere_directions_unit(n):
    d = sphere_directions(n, 200)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.linalg.norm(d.mean(axis=0)) < 0.1


def test_boundary_normals_box_and_ball():
    box = boundary_normals(weighted_spec(1, 8), 100)
    assert len(box) == 6 * 100
    assert np.allclose(np.linalg.norm(box.normals, axis=1), 1.0)
    # outward: centre to boundary point has positive normal component
    centre = np.array([1.5, 0.5, 0.5])
    assert np.all(np.einsum("ij,ij->i", box.points - centre, box.normals) > 0)
    ball = boundary_normals(DomainSpec(n=3, shape=Ball((1.5, 0, 0), 0.4), k=1, grid=8), 500)
    assert np.allclose(np.linalg.norm(ball.points - [1.5, 0, 0], axis=1), 0.4)
