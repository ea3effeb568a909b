import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisocrit.bounds import (ConditionViolation, FFamily, admissible_gamma, certify_nonexistence,
                              check_condition_f, chi_field, comparison_bound, exp_bound,
                              fd_divergence, generic_f_bound, nonexistence_factor, optimize_gamma,
                              phi, phi_chi, pohozaev_residual, power_bound)
from anisocrit.domain import Ball, CoefficientField, DomainSpec, build_grid
from anisocrit.errors import ValidationError
from anisocrit.nehari import SolverOptions, ground_state

from conftest import weighted_spec


@pytest.mark.parametrize("k,n,beta,expect", [
    (2, 3, 2.0, 0.0625),
    (1, 3, 2.0, 0.0),
    (3, 3, 1.0, 1.0),
    (4, 4, 2.0, 1.5 * 1.5 / 4.0),
])
def test_power_bound(k, n, beta, expect):
    assert power_bound(k, n, beta) == pytest.approx(expect, abs=1e-15)


def test_exp_bound():
    assert exp_bound(1, 3, 1.5, 2.0) == 0.0625
    assert exp_bound(1, 3, 1.0, 3.5) is None
    assert exp_bound(2, 4, 1.0, 2.0) == 0.25
    with pytest.raises(ValidationError):
        exp_bound(0, 3, 1.0, 2.0)


def test_generic_matches_closed_forms():
    opt = optimize_gamma("power", 2, 3, 1.0, 2.0)
    assert opt.bound == pytest.approx(power_bound(2, 3, 2.0), abs=1e-10)
    opt = optimize_gamma("exponential", 1, 3, 1.5, 2.0)
    assert opt.bound == pytest.approx(exp_bound(1, 3, 1.5, 2.0), abs=1e-10)
    assert optimize_gamma("exponential", 1, 3, 1.0, 3.5) is None
    assert admissible_gamma("power", 2, 3, 1.0, 2.0) == (pytest.approx(1 / 3), 1.0)


def test_tabulated_family_matches_power():
    g = 0.5
    fam = FFamily.from_callables(lambda t: t ** -g, lambda t: -g * t ** (-g - 1),
                                 lambda t: g * (g + 1) * t ** (-g - 2), 1.0, 2.0)
    assert generic_f_bound(fam, 2, 3, 1.0, 2.0) == pytest.approx(0.0625, rel=1e-10)


def test_condition_violation_reports_t():
    # gamma above k/2 makes t^k f^2 decrease
    with pytest.raises(ConditionViolation) as info:
        check_condition_f(FFamily.power(2.0), 2, 3, 1.0, 2.0)
    assert 1.0 < info.value.t <= 2.0
    with pytest.raises(ValidationError):
        FFamily.tabulated(np.linspace(1, 2, 10), np.ones(10), np.zeros(10), np.zeros(10))


def test_comparison_bound(grid8):
    spec = weighted_spec(2, 8)
    grid = build_grid(spec)
    x2 = CoefficientField.power(2)
    assert comparison_bound(x2, x2, 2, spec, grid) == power_bound(2, 3, 2.0)
    assert comparison_bound(CoefficientField.power(2, scale=2.0), x2, 2, spec, grid) is None
    assert comparison_bound(x2, CoefficientField.power(2, scale=0.5), 2, spec, grid) == 0.0625
    assert comparison_bound(CoefficientField.power(2, scale=0.5), x2, 2, spec, grid) is None


def test_phi_values():
    assert phi(2.0, 1, 1.0) == 0.375
    assert phi(1.0, 3, 1.0) == 0.0
    with pytest.raises(ValidationError):
        phi_chi(1, 1.0, np.zeros(2), np.zeros(1))
    with pytest.raises(ValidationError):
        phi_chi(1, 1.0, np.ones(3), np.zeros(1))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([(5, 1), (6, 2), (4, 1)]), st.integers(0, 2 ** 32 - 1),
       st.floats(0.5, 2.0))
def test_chi_divergence_constant(Nk, seed, tau):
    N, k = Nk
    x = np.random.default_rng(seed).uniform(0.5, 2.0, N)
    assert fd_divergence(chi_field(k, tau), x) == pytest.approx(N - k, abs=1e-6)


def test_ball_certificate():
    spec = DomainSpec(n=3, shape=Ball((1.5, 0, 0), 0.4), k=1, grid=8)
    cert = certify_nonexistence(spec, 6.0, 10.0, samples_per_facet=2000)
    assert cert.valid and cert.t_range_ok
    assert cert.starshape_min_0 > 0 and cert.starshape_min_1 > 0
    assert cert.threshold == 0.0 and cert.N == 4
    sup = certify_nonexistence(spec, 8.0, 10.0, samples_per_facet=500)
    assert sup.threshold == pytest.approx(nonexistence_factor(8.0, 6.0) * 10.0)
    with pytest.raises(ValidationError):
        certify_nonexistence(spec, 5.0, 10.0)


def test_box_not_strictly_starshaped_from_face():
    cert = certify_nonexistence(weighted_spec(1, 8), 6.0, 10.0, samples_per_facet=400)
    assert not cert.valid and cert.starshape_min_0 == 0.0


def test_pohozaev_residual_ground_state(weighted8):
    opts = SolverOptions(starts=1)
    r = ground_state(weighted8, 0.0, opts)
    u = r.u.values
    F = weighted8.functional
    # for tau = 0 (phi = 1/(k+1)) the residual is k/(k+1) * omega_k int x1 (d_1 u)^2 > 0
    res = pohozaev_residual(F, u, 0.0, 1, 0.5)
    assert res > 0
    # the residual is linear in tau-dependent terms only through phi
    r1 = pohozaev_residual(F, u, 0.0, 1, 0.9)
    assert r1 < res
