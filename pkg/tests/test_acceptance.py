"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (also collected in the terminal
summary) and then asserts it.  Tolerances and runtime limits are fixed.
"""

import json
import time

import numpy as np
import pytest

from anisocrit.bounds import (FFamily, certify_nonexistence, chi_field, exp_bound, fd_divergence,
                              generic_f_bound, optimize_gamma, phi, power_bound)
from anisocrit.cli import main
from anisocrit.domain import Ball, Box, CoefficientField, DomainSpec, build_grid
from anisocrit.eigen import dense_oracle, smallest_eigenpairs
from anisocrit.lift import energy_identity_check, sine_field
from anisocrit.nehari import (SolverOptions, ground_state, initial_directions, nehari_scale,
                              transfer)
from anisocrit.operators import assemble
from anisocrit.problem import Problem
from anisocrit.thresholds.sweep import bracket_lambda_star, sweep

from conftest import record

BOX = [[1.0, 2.0], [0.0, 1.0], [0.0, 1.0]]
OPTS = SolverOptions()


def box_spec(k, grid):
    return DomainSpec(n=3, shape=Box(BOX), k=k, grid=grid)


def golden_section_max(f, lo, hi, tol=1e-13):
    """Plain golden-section search for the maximum of a unimodal f on [lo, hi]."""
    g = (np.sqrt(5.0) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def test_criterion_1_closed_form_bounds():
    t0 = time.perf_counter()
    bp = power_bound(2, 3, 2.0)
    be = exp_bound(1, 3, 1.5, 2.0)
    gp = optimize_gamma("power", 2, 3, 1.0, 2.0)
    ge = optimize_gamma("exponential", 1, 3, 1.5, 2.0)
    gp_direct = generic_f_bound(FFamily.power(gp.gamma), 2, 3, 1.0, 2.0)
    elapsed = time.perf_counter() - t0
    ok = (bp == 0.0625 and be == 0.0625 and abs(gp.bound - bp) <= 1e-10
          and abs(ge.bound - be) <= 1e-10 and gp_direct == gp.bound and elapsed < 1.0)
    assert record(1, ok, f"power={bp!r} exp={be!r} generic_power={gp.bound:.17g} "
                         f"generic_exp={ge.bound:.17g} time={elapsed:.3f}s")


def test_criterion_2_vector_field_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for N, k in ((5, 1), (6, 2)):
        field_ = chi_field(k, 1.0)
        for _ in range(20):
            x = rng.uniform(0.3, 2.0, N) * rng.choice([-1.0, 1.0], N)
            worst = max(worst, abs(fd_divergence(field_, x) - (N - k)))
    value = float(phi(2.0, 1, 1.0))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and value == 0.375 and elapsed < 1.0
    assert record(2, ok, f"max |div chi - (N-k)|={worst:.2e} phi(2)={value!r} "
                         f"time={elapsed:.3f}s")


def test_criterion_3_eigensolver_oracle():
    t0 = time.perf_counter()
    grid = build_grid(box_spec(1, 8))
    x1 = CoefficientField.power(1)
    S, M, _ = assemble(grid, x1, x1, x1)
    it = smallest_eigenpairs(S, M, 6).values
    ref = dense_oracle(S, M)[:6]
    rel = float(np.max(np.abs(it - ref) / np.abs(ref)))
    elapsed = time.perf_counter() - t0
    ok = rel <= 1e-8 and elapsed < 30
    assert record(3, ok, f"max relative difference={rel:.2e} time={elapsed:.1f}s")


def test_criterion_4_classical_spectrum():
    t0 = time.perf_counter()
    spec = DomainSpec(n=3, shape=Box([[0.0, np.pi]] * 3), k=0, grid=32)
    one = CoefficientField.constant(1.0)
    vals = Problem(spec, one, one, one, modes=4).basis.values
    elapsed = time.perf_counter() - t0
    dev = [abs(vals[0] - 3) / 3] + [abs(v - 6) / 6 for v in vals[1:4]]
    ok = max(dev) < 0.02 and elapsed < 120
    assert record(4, ok, f"eigenvalues={np.array2string(vals, precision=5)} "
                         f"max deviation={max(dev):.2%} time={elapsed:.1f}s")


def test_criterion_5_nehari_closed_form():
    t0 = time.perf_counter()
    prob = Problem.weighted(box_spec(1, 8), modes=1)
    F = prob.functional
    lam = 0.5 * prob.basis.values[0]
    rng = np.random.default_rng(5)
    worst_peak = worst_t = 0.0
    for _ in range(50):
        u = rng.random(F.stiffness.size) * (1 + rng.standard_normal(F.stiffness.size))
        t, peak = nehari_scale(F, lam, u)
        tg, pg = golden_section_max(lambda s: F.value(lam, s * u), 0.0, 4.0 * t)
        worst_peak = max(worst_peak, abs(peak - pg) / abs(pg))
        worst_t = max(worst_t, abs(t - tg) / t)
    elapsed = time.perf_counter() - t0
    ok = worst_peak <= 1e-10 and elapsed < 10
    assert record(5, ok, f"max relative level gap={worst_peak:.2e} "
                         f"(argmax gap {worst_t:.1e}) time={elapsed:.1f}s")


@pytest.fixture(scope="module")
def sweep_16():
    t0 = time.perf_counter()
    coarse = Problem.weighted(box_spec(1, 16), modes=4)
    fine = Problem.weighted(box_spec(1, 32), modes=4)
    v = coarse.basis.values
    l1, l2 = v[0], v[1]
    t0_pts = np.linspace(l1 - 0.9 * l1, l1 - 0.01 * l1, 25)
    t1_pts = np.linspace(l1, l2 - 0.01 * (l2 - l1), 25)
    curve = sweep(coarse, np.concatenate([t0_pts, t1_pts]), OPTS, refine=fine,
                  refine_when="above_kappa")
    return curve, time.perf_counter() - t0


def test_criterion_6_minimax_curve(sweep_16):
    curve, elapsed = sweep_16
    kap = curve.kappa
    bad_mono = curve.monotonicity_violations(1e-6)
    t1 = curve.interval(1)
    last = t1[-1]
    counts = (len(curve.interval(0)), len(t1))
    upper_ok = []
    for p in curve.points:
        mg = p.margin if p.margin is not None else 1e-4 * kap
        upper_ok.append(0 < p.ell <= kap * (1 + mg))
    refined = sum(p.margin is not None for p in curve.points)
    ok = (counts == (25, 25) and not bad_mono and last.ell < 0.05 * kap and all(upper_ok)
          and elapsed < 20 * 60)
    worst = max(curve.points, key=lambda p: p.ell / (kap * (1 + (p.margin or 1e-4 * kap))))
    assert record(6, ok, f"points={counts} monotone violations={len(bad_mono)} "
                         f"last T1 ell/kappa={last.ell / kap:.4f} "
                         f"upper bound held at {sum(upper_ok)}/{len(upper_ok)} "
                         f"(refined {refined}; tightest lambda={worst.lam:.4g} ell={worst.ell:.5g} "
                         f"margin={worst.margin}) time={elapsed:.0f}s")


def test_criterion_7_non_attainment_trend():
    t0 = time.perf_counter()
    results = []
    prev = None
    for g in (16, 32):
        prob = Problem.weighted(box_spec(1, g), modes=1)
        starts = None
        if prev is not None:
            # default starts plus the interpolated coarse minimiser
            starts = initial_directions(prob.functional, prob.basis, 0, prob.kappa.xi, OPTS)
            starts.append(transfer(prev[1].w, prev[0].grid, prob.grid))
        r = ground_state(prob, 0.0, OPTS, starts=starts)
        results.append(r)
        prev = (prob, r)
    kap = results[0].kappa
    gaps = [r.ell - kap for r in results]
    dist = [r.diagnostics.peak_to_xi for r in results]
    shrink = 1 - abs(gaps[1]) / abs(gaps[0])
    elapsed = time.perf_counter() - t0
    ok = shrink >= 0.30 and dist[1] <= dist[0] and elapsed < 30 * 60
    assert record(7, ok, f"ell16={results[0].ell:.6f} ell32={results[1].ell:.6f} "
                         f"kappa={kap:.6f} gap shrink={shrink:.1%} "
                         f"peak-to-face {dist[0]:.4f} -> {dist[1]:.4f} time={elapsed:.0f}s")


def test_criterion_8_lambda_star_bracket():
    t0 = time.perf_counter()
    probs = [Problem.weighted(box_spec(2, g), modes=2) for g in (8, 16)]
    resolution = 0.25
    br = bracket_lambda_star(probs, 0, resolution, OPTS)
    pb = power_bound(2, 3, 2.0)
    elapsed = time.perf_counter() - t0
    ok = br.lo >= pb - resolution and elapsed < 30 * 60
    assert record(8, ok, f"status={br.status} bracket=({br.lo:.6g}, {br.hi:.6g}] "
                         f"power bound={pb} evaluations={len(br.evaluations)} "
                         f"time={elapsed:.0f}s")


def test_criterion_9_starshape_certificate():
    t0 = time.perf_counter()
    spec = DomainSpec(n=3, shape=Ball((1.5, 0.0, 0.0), 0.4), k=1, grid=12)
    lam1 = float(Problem.weighted(spec, modes=1).basis.values[0])
    cert = certify_nonexistence(spec, 6.0, lam1, t0=1.1, t1=1.9)
    elapsed = time.perf_counter() - t0
    ok = (cert.valid and cert.starshape_min_0 > 0 and cert.starshape_min_1 > 0
          and cert.threshold == 0.0 and cert.critical == 6.0 and elapsed < 5)
    assert record(9, ok, f"min (x-xi0).nu={cert.starshape_min_0:.4g} "
                         f"min (x-xi1).nu={cert.starshape_min_1:.4g} samples={cert.samples} "
                         f"threshold={cert.threshold!r} time={elapsed:.2f}s")


def test_criterion_10_lift_energy_identity():
    t0 = time.perf_counter()
    field_ = sine_field(box_spec(1, 32))
    coarse = energy_identity_check(field_, box_spec(1, 32))
    fine = energy_identity_check(field_, box_spec(1, 64))
    ratio = coarse.gap / fine.gap
    elapsed = time.perf_counter() - t0
    ok = coarse.gap < 0.01 and ratio >= 3 and elapsed < 300
    assert record(10, ok, f"gap32={coarse.gap:.3e} gap64={fine.gap:.3e} ratio={ratio:.2f} "
                          f"time={elapsed:.1f}s")


def test_criterion_11_determinism(tmp_path):
    t0 = time.perf_counter()
    box = {"domain": {"n": 3, "k": 1, "shape": {"box": BOX}, "grid": 8,
                      "coeff": {"a": "x1^k", "b": "x1^k", "c": "x1^k"}},
           "solver": {"seed": 11}, "modes": 4}
    ball = {"domain": {"n": 3, "k": 1, "grid": 8,
                       "shape": {"ball": {"center": [1.5, 0, 0], "radius": 0.4}}}}
    commands = [
        (box, ["eig"]),
        (box, ["ground", "--lambda", "5", "--refine"]),
        (box, ["sweep", "--lambda-min", "0", "--lambda-max", "40", "--steps", "4"]),
        (dict(box, modes=2), ["lambda-star", "--m", "0", "--resolution", "8"]),
        (box, ["bounds", "--p", "6"]),
        (ball, ["certify", "--p", "6"]),
        (box, ["lift"]),
    ]
    mismatched = []
    for i, (doc, argv) in enumerate(commands):
        blobs = []
        for rep in range(2):
            out = tmp_path / f"c{i}_{rep}"
            cfg = tmp_path / f"c{i}_{rep}.json"
            cfg.write_text(json.dumps(dict(doc, output=out.name)))
            assert main([argv[0], str(cfg)] + argv[1:]) == 0
            blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if blobs[0] != blobs[1] or not blobs[0]:
            mismatched.append(argv[0])
    elapsed = time.perf_counter() - t0
    ok = not mismatched
    assert record(11, ok, f"{len(commands)} commands re-run, mismatches={mismatched or 'none'} "
                          f"time={elapsed:.0f}s")
