"""Sweeps of the ground-state level over lambda and brackets for lambda_{m,*}.

lambda_{m,*} = inf{lambda in T_m : ell_lambda < kappa}.  Numerically the
strict inequality is only trusted beyond a refinement margin::

    margin(h) = max(2 |ell^h - ell^{h/2}|, 1e-4 kappa)
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..eigen import locate_interval
from ..errors import SolverError, ValidationError
from ..nehari import GroundStateResult, SolverOptions, ground_state, transfer

log = logging.getLogger(__name__)

MONOTONE_RTOL = 1e-6
CSV_COLUMNS = ("lambda", "m", "ell", "kappa", "residual", "peak_radius_nodes", "classification")


def margin(ell_h: float, ell_half: float, kappa_value: float) -> float:
    return max(2.0 * abs(ell_h - ell_half), 1e-4 * kappa_value)


def classify(kappa_value: float, coarse: GroundStateResult, fine: GroundStateResult) -> str:
    """"concentrating" if the gap to kappa at least halves and the 50%-mass
    radius in node units does not grow under refinement, else "captured"."""
    gap_h = abs(kappa_value - coarse.ell)
    gap_half = abs(kappa_value - fine.ell)
    r_h = coarse.diagnostics.radius_nodes
    r_half = fine.diagnostics.radius_nodes
    if gap_half <= 0.5 * gap_h and r_half <= r_h:
        return "concentrating"
    return "captured"


@dataclass(frozen=True)
class SweepPoint:
    lam: float
    m: int
    ell: float
    kappa: float
    residual: float
    peak_radius_nodes: float
    peak_to_xi: float
    iterations: int
    classification: str = "unrefined"
    ell_refined: Optional[float] = None
    margin: Optional[float] = None
    below_kappa: bool = False
    flagged: bool = False

    def row(self) -> tuple:
        return (self.lam, self.m, self.ell, self.kappa, self.residual,
                self.peak_radius_nodes, self.classification)


@dataclass(eq=False)
class SweepCurve:
    points: List[SweepPoint]
    kappa: float
    eigenvalues: np.ndarray
    results: List[GroundStateResult] = field(default_factory=list, repr=False)
    brackets: Dict[int, "LambdaStarBracket"] = field(default_factory=dict)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def ells(self) -> np.ndarray:
        return np.array([p.ell for p in self.points])

    def interval(self, m: int) -> List[SweepPoint]:
        return [p for p in self.points if p.m == m]

    def monotonicity_violations(self, rtol: float = MONOTONE_RTOL) -> List[tuple]:
        """Consecutive pairs in one T_m where ell increases beyond ``rtol``."""
        bad = []
        for a, b in zip(self.points[:-1], self.points[1:]):
            if a.m == b.m and b.ell > a.ell + rtol * abs(a.ell):
                bad.append((a.lam, b.lam))
        return bad


def pool_size(jobs: int) -> int:
    """Workers for ``jobs`` independent solves, capped by SBNL_THREADS."""
    cap = os.cpu_count() or 1
    env = os.environ.get("SBNL_THREADS")
    if env:
        try:
            cap = min(cap, max(1, int(env)))
        except ValueError as exc:
            raise ValidationError(f"SBNL_THREADS must be an integer, got {env!r}") from exc
    return max(1, min(cap, jobs))


def _solve(args):
    problem, lam, opts, starts = args
    return ground_state(problem, lam, opts, starts=starts)


def solve_many(problem, lambdas: Sequence[float], opts: SolverOptions,
               starts: Optional[Sequence] = None) -> List[GroundStateResult]:
    """Independent ground-state solves, in the order of ``lambdas``.

    ``starts`` optionally gives a list of initial directions per lambda.
    """
    # shared immutable inputs are built once in the parent
    problem.basis, problem.kappa, problem.functional
    starts = starts if starts is not None else [None] * len(lambdas)
    jobs = [(problem, float(lam), opts, st) for lam, st in zip(lambdas, starts)]
    workers = pool_size(len(jobs))
    if workers == 1:
        return [_solve(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_solve, jobs))


def _repair(problem, results: List[GroundStateResult], opts: SolverOptions) -> List[bool]:
    """Re-solve points whose level rises within an interval, starting from the
    previous minimiser; I_lambda(w) is nonincreasing in lambda for fixed w, so
    that start is never worse than the previous level."""
    flagged = [False] * len(results)
    for i in range(1, len(results)):
        prev, cur = results[i - 1], results[i]
        if prev.m != cur.m or cur.ell <= prev.ell + MONOTONE_RTOL * abs(prev.ell):
            continue
        log.debug("monotone repair at lambda=%.6g (%.12g > %.12g)", cur.lam, cur.ell, prev.ell)
        try:
            retry = ground_state(problem, cur.lam, opts, starts=[prev.w])
        except SolverError as exc:
            log.debug("repair solve failed: %s", exc)
            retry = None
        if retry is not None and retry.ell < cur.ell:
            results[i] = retry
            cur = retry
        flagged[i] = cur.ell > prev.ell + MONOTONE_RTOL * abs(prev.ell)
    return flagged


def matched_lambda(lam: float, m: int, coarse_values, fine_values) -> float:
    """``lam`` itself if it lies in T_m on the fine grid too, otherwise the
    point at the same relative position of the fine T_m (T_0 scaled by lambda_1)."""
    if m >= len(fine_values):
        raise ValidationError("fine grid has too few eigenvalues")
    lo_f = -np.inf if m == 0 else fine_values[m - 1]
    if lo_f <= lam < fine_values[m]:
        return float(lam)
    if m == 0:
        return float(lam * fine_values[0] / coarse_values[0])
    lo_c, hi_c = coarse_values[m - 1], coarse_values[m]
    return float(lo_f + (lam - lo_c) * (fine_values[m] - lo_f) / (hi_c - lo_c))


def sweep(problem, lambdas: Sequence[float], opts: SolverOptions = SolverOptions(),
          refine=None, refine_when: str = "always") -> SweepCurve:
    """ell_lambda^h at each lambda (sorted, strictly increasing).

    ``refine`` is the same problem on a grid with half the spacing; it
    supplies margin(h), the below-kappa flag and the classification.
    ``refine_when`` is "always" or "above_kappa" (refine only points whose
    level exceeds kappa, where the margin decides the upper bound).
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ValidationError("sweep needs at least one lambda")
    if np.any(np.diff(lambdas) <= 0):
        raise ValidationError("sweep lambdas must be strictly increasing")
    if refine_when not in ("always", "above_kappa"):
        raise ValidationError(f"unknown refine_when {refine_when!r}")
    basis = problem.basis
    for lam in lambdas:
        locate_interval(lam, basis)
    results = solve_many(problem, lambdas, opts)
    flagged = _repair(problem, results, opts)
    kap = problem.kappa.value

    fine_results: Dict[int, GroundStateResult] = {}
    if refine is not None:
        idx = [i for i, r in enumerate(results) if refine_when == "always" or r.ell > kap]
        if idx:
            fine_values = refine.basis.values
            lam_fine = [matched_lambda(results[i].lam, results[i].m, basis.values, fine_values)
                        for i in idx]
            # the coarse minimiser, interpolated, starts the fine solve
            warm = [[transfer(results[i].w, problem.grid, refine.grid)] for i in idx]
            fine = solve_many(refine, lam_fine, opts, warm)
            fine_results = dict(zip(idx, fine))

    points = []
    for i, r in enumerate(results):
        d = r.diagnostics
        extra = {}
        if i in fine_results:
            f = fine_results[i]
            mg = margin(r.ell, f.ell, kap)
            extra = dict(classification=classify(kap, r, f), ell_refined=f.ell, margin=mg,
                         below_kappa=f.ell < kap - mg)
        else:
            extra = dict(below_kappa=r.ell < kap - 1e-4 * kap)
        points.append(SweepPoint(
            lam=r.lam, m=r.m, ell=r.ell, kappa=kap, residual=r.residual,
            peak_radius_nodes=d.radius_nodes, peak_to_xi=d.peak_to_xi,
            iterations=r.iterations, flagged=flagged[i], **extra))
    return SweepCurve(points, kap, basis.values.copy(), results)


def interval_lambdas(basis_values: np.ndarray, m: int, steps: int, lo_frac: float = 0.0,
                     hi_frac: float = 0.99) -> np.ndarray:
    """``steps`` equispaced points covering fractions [lo_frac, hi_frac] of T_m.

    T_0 is taken as [0, lambda_1)."""
    if steps < 1:
        raise ValidationError("steps must be positive")
    lower = 0.0 if m == 0 else float(basis_values[m - 1])
    upper = float(basis_values[m])
    return lower + (upper - lower) * np.linspace(lo_frac, hi_frac, steps)


# ---------------------------------------------------------------------------
# lambda_{m,*}


@dataclass(frozen=True)
class LambdaStarBracket:
    """``status`` is "bracketed" (lo < lambda_* <= hi), "at_or_below_left_end"
    (predicate true on the whole interval) or "not_found" (false at the
    right end)."""

    m: int
    lo: float
    hi: float
    status: str
    resolution: float
    interval: tuple
    evaluations: tuple = ()

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class PredicateEvaluation:
    lam: float
    ell_coarse: float
    ell_fine: float
    kappa: float
    margin: float

    @property
    def below(self) -> bool:
        return self.ell_fine < self.kappa - self.margin


def bracket_lambda_star(problems: Sequence, m: int, resolution: float,
                        opts: SolverOptions = SolverOptions(), max_evaluations: int = 60
                        ) -> LambdaStarBracket:
    """Bisection for lambda_{m,*} on the predicate ell^h < kappa - margin(h).

    ``problems`` is the same problem on successively finer grids; the two
    finest are used.  For m = 0 the search starts at -lambda_1.
    """
    if len(problems) < 2:
        raise ValidationError("bracket_lambda_star needs at least two grids")
    if not resolution > 0:
        raise ValidationError("resolution must be positive")
    coarse, fine = problems[-2], problems[-1]
    values = [p.basis.values for p in (coarse, fine)]
    for v in values:
        if len(v) < m + 1:
            raise ValidationError(f"need {m + 1} eigenvalues; increase modes")
    upper = min(float(v[m]) for v in values)
    if m == 0:
        left = -upper
        lower = 0.0
    else:
        left = max(float(v[m - 1]) for v in values)
        lower = left
    right = upper - 1e-3 * (upper - lower)
    if not left < right:
        raise ValidationError(f"interval T_{m} is empty on these grids")
    kap = fine.kappa.value
    evals: List[PredicateEvaluation] = []
    starts: Dict[int, np.ndarray] = {}

    def predicate(lam: float) -> bool:
        ells = []
        for key, prob in enumerate((coarse, fine)):
            warm = [starts[key]] if key in starts else None
            res = ground_state(prob, lam, opts)
            if warm is not None:
                try:
                    alt = ground_state(prob, lam, opts, starts=warm)
                    if alt.ell < res.ell:
                        res = alt
                except SolverError:
                    pass
            starts[key] = res.w
            ells.append(res.ell)
        ev = PredicateEvaluation(lam, ells[0], ells[1], kap, margin(ells[1], ells[0], kap))
        evals.append(ev)
        log.debug("lambda=%.8g ell_fine=%.10g margin=%.3g below=%s", lam, ev.ell_fine,
                  ev.margin, ev.below)
        return ev.below

    interval = (left, right)
    if predicate(left):
        return LambdaStarBracket(m, -np.inf, left, "at_or_below_left_end", resolution,
                                 interval, tuple(evals))
    if not predicate(right):
        return LambdaStarBracket(m, right, upper, "not_found", resolution, interval, tuple(evals))
    lo, hi = left, right
    while hi - lo > resolution and len(evals) < max_evaluations:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return LambdaStarBracket(m, lo, hi, "bracketed", resolution, interval, tuple(evals))
