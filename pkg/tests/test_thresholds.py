import math

import numpy as np
import pytest

from anisocrit.domain import Ball, CoefficientField, DomainSpec, build_grid
from anisocrit.errors import ValidationError
from anisocrit.nehari import GroundStateResult, SolverOptions
from anisocrit.problem import Problem
from anisocrit.thresholds import concentration, kappa, sobolev_constant
from anisocrit.thresholds.sweep import (CSV_COLUMNS, SweepCurve, SweepPoint, bracket_lambda_star,
                                        classify, interval_lambdas, margin, matched_lambda,
                                        pool_size, sweep)
from anisocrit.thresholds.levels import ConcentrationDiagnostics

from conftest import weighted_spec

OPTS = SolverOptions(starts=1)


def test_sobolev_constant_values():
    assert sobolev_constant(3) == pytest.approx(3 * (math.pi / 2) ** (4 / 3), rel=1e-14)
    # S_4 = pi^2 sqrt(2/3)^... closed form: 4 * 2 * pi * (1/6)^{1/2}
    assert sobolev_constant(4) == pytest.approx(8 * math.pi / math.sqrt(6), rel=1e-14)
    with pytest.raises(ValidationError):
        sobolev_constant(2)


def test_kappa_weighted_box(grid8):
    x1 = CoefficientField.power(1)
    kap = kappa(x1, x1, grid8)
    assert kap.value == pytest.approx(4.2736, abs=1e-4)
    assert kap.face == 1.0 and not kap.unique
    assert kap.distance([1.25, 0.3, 0.9]) == pytest.approx(0.25)


def test_kappa_constant_and_scaled(grid8):
    one = CoefficientField.constant(1.0)
    kap = kappa(one, one, grid8)
    assert kap.constant_quotient and kap.distance([1.5, 0.5, 0.5]) == 0.0
    assert kap.value == pytest.approx(sobolev_constant(3) ** 1.5 / 3)
    two = CoefficientField.power(2)
    # q = x1^3 / x1^1 = x1^2 grows, minimum at alpha = 1
    assert kappa(two, CoefficientField.power(2), grid8).value == pytest.approx(
        2 ** 0 * sobolev_constant(3) ** 1.5 / 3)


def test_kappa_ball_unique_minimiser():
    spec = DomainSpec(n=3, shape=Ball((1.5, 0, 0), 0.4), k=1, grid=10)
    x1 = CoefficientField.power(1)
    kap = kappa(x1, x1, build_grid(spec))
    assert kap.unique and kap.face == pytest.approx(1.1)
    assert np.allclose(kap.xi, [1.1, 0, 0])


def test_concentration_diagnostics(grid8, weighted8):
    x = grid8.interior_coordinates()
    u = np.exp(-40 * np.sum((x - [1.25, 0.5, 0.5]) ** 2, axis=1))
    d = concentration(u, grid8, weighted8.kappa)
    assert np.allclose(d.peak, [1.25, 0.5, 0.5])
    assert d.peak_to_xi == pytest.approx(0.25)
    assert 0.5 <= d.mass_in_radius <= 1.0 and d.radius_nodes >= 1.0
    with pytest.raises(ValidationError):
        concentration(np.zeros_like(u), grid8, weighted8.kappa)


def test_margin():
    assert margin(5.0, 4.5, 4.0) == pytest.approx(1.0)
    assert margin(5.0, 5.0, 4.0) == pytest.approx(4e-4)


def _result(ell, radius):
    d = ConcentrationDiagnostics(1.0, np.zeros(3), radius, 0.0, 0.0, 0.5)
    return GroundStateResult(0.0, 0, ell, None, 0.0, 0, True, diagnostics=d)


def test_classify():
    assert classify(4.0, _result(6.0, 2.0), _result(5.0, 2.0)) == "concentrating"
    assert classify(4.0, _result(6.0, 2.0), _result(5.5, 2.0)) == "captured"
    assert classify(4.0, _result(6.0, 2.0), _result(5.0, 3.0)) == "captured"


def test_matched_lambda():
    coarse, fine = np.array([10.0, 20.0]), np.array([11.0, 22.0])
    assert matched_lambda(5.0, 0, coarse, fine) == 5.0
    assert matched_lambda(10.5, 0, coarse, fine) == 10.5
    assert matched_lambda(10.5, 0, coarse, fine * 0.9) == pytest.approx(10.5 * 0.99)
    assert matched_lambda(10.5, 1, coarse, fine) == pytest.approx(11.0 + 0.5 * 11.0 / 10.0)
    with pytest.raises(ValidationError):
        matched_lambda(1.0, 2, coarse, fine)


def test_interval_lambdas():
    lams = interval_lambdas(np.array([10.0, 20.0]), 1, 3, 0.0, 0.5)
    assert np.allclose(lams, [10.0, 12.5, 15.0])
    with pytest.raises(ValidationError):
        interval_lambdas(np.array([1.0]), 0, 0)


def test_pool_size(monkeypatch):
    monkeypatch.setenv("SBNL_THREADS", "1")
    assert pool_size(10) == 1
    monkeypatch.setenv("SBNL_THREADS", "x")
    with pytest.raises(ValidationError):
        pool_size(2)
    monkeypatch.delenv("SBNL_THREADS")
    assert 1 <= pool_size(3) <= 3


def test_monotonicity_violations():
    pts = [SweepPoint(lam, 0, ell, 4.0, 0.0, 1.0, 0.0, 1)
           for lam, ell in [(0.0, 5.0), (1.0, 4.9), (2.0, 4.95)]]
    curve = SweepCurve(pts, 4.0, np.array([10.0]))
    assert curve.monotonicity_violations() == [(1.0, 2.0)]
    assert pts[0].row() == (0.0, 0, 5.0, 4.0, 0.0, 1.0, "unrefined")
    assert len(CSV_COLUMNS) == len(pts[0].row())


def test_small_sweep_with_refinement(weighted8):
    v = weighted8.basis.values
    lams = [0.0, 0.5 * v[0], 0.5 * (v[0] + v[1])]
    fine = Problem.weighted(weighted_spec(1, 10), modes=6)
    curve = sweep(weighted8, lams, OPTS, refine=fine)
    assert [p.m for p in curve.points] == [0, 0, 1]
    assert not curve.monotonicity_violations()
    assert all(p.classification in ("concentrating", "captured") for p in curve.points)
    assert all(p.margin >= 1e-4 * p.kappa for p in curve.points)
    with pytest.raises(ValidationError):
        sweep(weighted8, [1.0, 0.0], OPTS)


def test_bracket_not_found_in_low_interval():
    # on a coarse box the level stays above kappa near the left end of T_0
    probs = [Problem.weighted(weighted_spec(1, g), modes=4) for g in (4, 6)]
    br = bracket_lambda_star(probs, 0, 4.0, OPTS)
    assert br.status in ("bracketed", "not_found", "at_or_below_left_end")
    assert br.interval[0] == pytest.approx(-probs[0].basis.values[0] if
                                           probs[0].basis.values[0] < probs[1].basis.values[0]
                                           else -probs[1].basis.values[0])
    if br.status == "bracketed":
        assert br.hi - br.lo <= 4.0 or len(br.evaluations) >= 60
        assert not next(e for e in br.evaluations if e.lam == br.lo).below
    with pytest.raises(ValidationError):
        bracket_lambda_star(probs[:1], 0, 1.0, OPTS)
