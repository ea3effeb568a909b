"""Ground-state levels through the minimax over the unit sphere of Y_m.

For lam in T_m the level is::

    ell = inf_{w in Sigma_m}  I(w),     I(w) = max_{t>0, z in Z_m} J(t w + z)

For m = 0 the inner maximum has the closed form (1/n) Q(w)^{n/2} with
Q(w) = (||w||_a^2 - lam |w|_b^2) / |w|_{c,2*}^2.  For m >= 1 it is found by a
small Newton iteration in (log t, z).  The outer minimisation is a projected
descent on Sigma_m in the a-metric: the envelope derivative of I at w is
t * J'(t w + z), represented through one elliptic Riesz solve, and search
directions are built from these gradients with an L-BFGS two-loop recursion
in the a-inner product.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .domain import ScalarField
from .eigen import SpectralBasis, locate_interval
from .errors import SolverError, ValidationError
from .operators import Functional, abs_pow
from .thresholds.levels import concentration

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    tol_res: float = 1e-8
    tol_e: float = 1e-10
    max_iter: int = 5000
    seed: int = 0
    starts: int = 2
    memory: int = 8
    window: int = 10
    inner_tol: float = 1e-12
    inner_max_iter: int = 200
    bump_width: float = 2.0  # in grid steps
    perturbation: float = 0.05

    def __post_init__(self):
        for name in ("tol_res", "tol_e", "inner_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.starts < 1 or self.max_iter < 1:
            raise ValidationError("starts and max_iter must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class NehariPoint:
    """u = t w + sum z_j e_j, the maximiser of (t, z) -> J(t w + z)."""

    w: np.ndarray
    t: float
    z: np.ndarray
    u: np.ndarray
    peak: float
    grad_norm: float
    iterations: int = 0


@dataclass(eq=False)
class GroundStateResult:
    lam: float
    m: int
    ell: float
    u: ScalarField
    residual: float
    iterations: int
    converged: bool
    t: float = float("nan")
    z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    w: Optional[np.ndarray] = None
    start_levels: List[float] = field(default_factory=list)
    diagnostics: object = None
    kappa: Optional[float] = None


# ---------------------------------------------------------------------------
# inner problems


def nehari_scale(functional: Functional, lam: float, u) -> tuple:
    """Maximiser t and value of t -> J(t u) for m = 0.

    t = (D / |u|_c^{2*})^{1/(2*-2)},  peak = (1/n) (D / |u|_c^2)^{n/2},
    with D = ||u||_a^2 - lam |u|_b^2.
    """
    a2, b2, cp = functional.components(u)
    if cp == 0.0:
        raise ValidationError("nehari_scale needs a nonzero field")
    D = a2 - lam * b2
    if not D > 0:
        raise ValidationError(f"lambda={lam} is not below lambda_1 along u (D={D:.3e})")
    p = functional.exponent
    n = functional.n
    t = (D / cp) ** (1.0 / (p - 2))
    peak = (D / cp ** (2.0 / p)) ** (n / 2) / n
    return t, peak


class InnerMaximizer:
    """Newton ascent for (t, z) -> J(t w + E z) with t = exp(s)."""

    def __init__(self, functional: Functional, lam: float, E: np.ndarray,
                 tol: float = 1e-12, max_iter: int = 200):
        self.f = functional
        self.lam = lam
        self.E = E
        self.AE = functional.stiffness.matrix @ E
        self.BE = functional.mass.weights[:, None] * E
        self.tol = tol
        self.max_iter = max_iter

    def _quadratic(self, w, Aw):
        V = np.column_stack([w, self.E])
        AV = np.column_stack([Aw, self.AE])
        BV = np.column_stack([self.f.mass.weights * w, self.BE])
        Q2 = V.T @ AV - self.lam * (V.T @ BV)
        return V, 0.5 * (Q2 + Q2.T)

    def _eval(self, QV, W, Q2, x, full=True):
        t = np.exp(x[0])
        c = np.concatenate([[t], x[1:]])
        uq = QV @ c
        p = self.f.exponent
        pw = abs_pow(uq, p - 2)
        cp = float(W @ (pw * uq * uq))
        F = 0.5 * c @ Q2 @ c - cp / p
        if not full:
            return t, c, F
        gc = Q2 @ c - QV.T @ (W * pw * uq)
        Hc = Q2 - QV.T @ (((p - 1) * W * pw)[:, None] * QV)
        scale = abs(c @ Q2 @ c) + cp
        return t, c, F, gc, Hc, scale

    def maximize(self, w: np.ndarray, Aw: Optional[np.ndarray] = None,
                 start: Optional[np.ndarray] = None) -> NehariPoint:
        if Aw is None:
            Aw = self.f.stiffness.matrix @ w
        V, Q2 = self._quadratic(w, Aw)
        QV, W = self.f.critical.sample_block(V)
        m = self.E.shape[1]
        if start is None:
            D = Q2[0, 0]
            cp = self.f.critical.value(w)
            if not D > 0 or cp == 0:
                raise SolverError("degenerate direction: J is not positive along w")
            x = np.concatenate([[np.log(D / cp) / (self.f.exponent - 2)], np.zeros(m)])
        else:
            x = np.array(start, dtype=float)

        t, c, F, gc, Hc, scale = self._eval(QV, W, Q2, x)
        for it in range(self.max_iter + 1):
            gnorm = np.linalg.norm(gc)
            if gnorm * np.linalg.norm(c) <= self.tol * scale:
                break
            if it == self.max_iter:
                raise SolverError(f"inner maximisation did not converge (|grad|={gnorm:.3e})",
                                  iterations=it, residual=gnorm)
            gx = gc.copy()
            gx[0] *= t
            Hx = Hc.copy()
            Hx[0, :] *= t
            Hx[:, 0] *= t
            Hx[0, 0] += t * gc[0]
            mu, Qm = np.linalg.eigh(Hx)
            floor = 1e-10 * max(1.0, np.max(np.abs(mu)))
            d = Qm @ ((Qm.T @ gx) / np.maximum(np.abs(mu), floor))
            if abs(d[0]) > 1.0:
                d = d / abs(d[0])
            slope = gx @ d
            step = 1.0
            # near the maximiser the predicted gain is below rounding: take the Newton step
            if slope > 1e-10 * scale:
                for _ in range(60):
                    trial = self._eval(QV, W, Q2, x + step * d, full=False)
                    if trial[2] >= F + 1e-4 * step * slope or step * np.linalg.norm(d) < 1e-15:
                        break
                    step *= 0.5
            x = x + step * d
            t, c, F, gc, Hc, scale = self._eval(QV, W, Q2, x)
            if t < 1e-12:
                raise SolverError("degenerate direction: t collapsed to 0", iterations=it)
        return NehariPoint(w, float(t), c[1:].copy(), V @ c, float(F), float(np.linalg.norm(gc)), it)


def inner_maximize(functional: Functional, lam: float, w, basis: SpectralBasis, m: int,
                   tol: float = 1e-12) -> NehariPoint:
    """Maximiser of (t, z) -> J(t w + z) over t > 0, z in Z_m (m >= 1)."""
    if m < 1:
        raise ValidationError("inner_maximize is for m >= 1; use nehari_scale")
    if basis.count < m:
        raise ValidationError(f"basis has {basis.count} modes, need {m}")
    return InnerMaximizer(functional, lam, basis.vectors[:, :m], tol=tol).maximize(
        np.asarray(w, dtype=float))


# ---------------------------------------------------------------------------
# outer descent


@dataclass(eq=False)
class _Run:
    point: NehariPoint
    residual: float
    iterations: int
    converged: bool
    history: list


class SphereDescent:
    """Projected L-BFGS descent of I on Sigma_m."""

    def __init__(self, functional: Functional, lam: float, basis: Optional[SpectralBasis], m: int,
                 opts: SolverOptions):
        self.f = functional
        self.lam = lam
        self.m = m
        self.opts = opts
        self.A = functional.stiffness.matrix
        if m:
            E = basis.vectors[:, :m]
            self.E = E
            self.AE = self.A @ E
            self.gram = E.T @ self.AE
            self.inner = InnerMaximizer(functional, lam, E, opts.inner_tol, opts.inner_max_iter)

    def project(self, v):
        if not self.m:
            return v
        return v - self.E @ np.linalg.solve(self.gram, self.AE.T @ v)

    def retract(self, v):
        v = self.project(v)
        Av = self.A @ v
        nrm = np.sqrt(v @ Av)
        if not nrm > 0:
            raise SolverError("descent produced a zero direction")
        return v / nrm, Av / nrm

    def evaluate(self, w, Aw, start=None) -> NehariPoint:
        if not self.m:
            t, peak = nehari_scale(self.f, self.lam, w)
            return NehariPoint(w, t, np.zeros(0), t * w, peak, 0.0)
        return self.inner.maximize(w, Aw, start)

    @staticmethod
    def _start(point: NehariPoint):
        if point.z.size == 0:
            return None
        return np.concatenate([[np.log(point.t)], point.z])

    def tangent(self, v, w, Aw):
        v = self.project(v)
        return v - (Aw @ v) * w

    def run(self, w0) -> _Run:
        opts = self.opts
        w, Aw = self.retract(np.asarray(w0, dtype=float))
        pt = self.evaluate(w, Aw)
        g, y = self.f.gradient(self.lam, pt.u)
        G = self.tangent(pt.t * g, w, Aw)
        history = [pt.peak]
        memory = deque(maxlen=max(opts.memory, 1))
        use_memory = opts.memory > 0
        residual = np.inf
        converged = False
        it = 0
        for it in range(1, opts.max_iter + 1):
            Au = self.A @ pt.u
            residual = float(np.sqrt(max(g @ (self.A @ g), 0.0)) / np.sqrt(pt.u @ Au))
            if residual < opts.tol_res and self._energy_settled(history):
                converged = True
                break
            AG = self.A @ G
            accepted = None
            trials = []
            for attempt in range(2):
                if memory and attempt == 0:
                    d = -self._two_loop(G, memory)
                    d = self.tangent(d, w, Aw)
                    step = 1.0
                else:
                    memory.clear()
                    d = -G
                    gn = np.sqrt(max(G @ AG, 1e-300))
                    step = min(1.0, 0.1 / gn)
                slope = float(AG @ d)
                if not slope < 0:
                    continue
                trials.append((d, step))
                accepted = self._line_search(w, d, step, slope, pt)
                if accepted is not None:
                    break
            grad = None
            if accepted is None:
                # energy changes are at rounding level; accept steps that reduce the residual
                for d, step in reversed(trials):
                    found = self._noise_step(w, d, step, pt, residual, y)
                    if found is not None:
                        accepted, grad = found[:3], found[3:]
                        break
            if accepted is None:
                log.debug("line search stalled at iteration %d (residual %.3e)", it, residual)
                converged = residual < opts.tol_res
                break
            w_new, Aw_new, pt_new = accepted
            g_new, y = grad if grad is not None else self.f.gradient(self.lam, pt_new.u, x0=y)
            G_new = self.tangent(pt_new.t * g_new, w_new, Aw_new)
            if use_memory:
                s = w_new - w
                yv = G_new - G
                As = self.A @ s
                Ay = self.A @ yv
                sy = float(As @ yv)
                if sy > 1e-12 * np.sqrt(max(As @ s, 0) * max(Ay @ yv, 0)):
                    memory.append((s, yv, As, Ay, 1.0 / sy))
            w, Aw, pt, g, G = w_new, Aw_new, pt_new, g_new, G_new
            history.append(pt.peak)
        else:
            Au = self.A @ pt.u
            residual = float(np.sqrt(max(g @ (self.A @ g), 0.0)) / np.sqrt(pt.u @ Au))
            converged = residual < opts.tol_res and self._energy_settled(history)
        return _Run(pt, residual, it, converged, history)

    def _energy_settled(self, history) -> bool:
        k = min(self.opts.window, len(history) - 1)
        if k <= 0:
            return True
        drop = abs(history[-1 - k] - history[-1])
        return drop <= self.opts.tol_e * abs(history[-1])

    def _trial(self, w, d, step, start):
        try:
            w_new, Aw_new = self.retract(w + step * d)
            return w_new, Aw_new, self.evaluate(w_new, Aw_new, start)
        except (SolverError, ValidationError):
            return None

    def _line_search(self, w, d, step, slope, pt):
        """Backtracking Armijo search; None when no step gives a resolvable decrease."""
        noise = 1e-14 * abs(pt.peak)
        start = self._start(pt)
        for _ in range(40):
            if step * abs(slope) <= noise:
                return None
            trial = self._trial(w, d, step, start)
            if trial is not None and trial[2].peak <= pt.peak + 1e-4 * step * slope + noise:
                return trial
            step *= 0.5
        return None

    def _noise_step(self, w, d, step, pt, residual, y):
        noise = 1e-12 * abs(pt.peak)
        start = self._start(pt)
        for _ in range(8):
            trial = self._trial(w, d, step, start)
            if trial is not None and trial[2].peak <= pt.peak + noise:
                g_new, y_new = self.f.gradient(self.lam, trial[2].u, x0=y)
                u = trial[2].u
                r_new = np.sqrt(max(g_new @ (self.A @ g_new), 0.0)) / np.sqrt(u @ (self.A @ u))
                if r_new < 0.9 * residual:
                    return (*trial, g_new, y_new)
            step *= 0.5
        return None

    @staticmethod
    def _two_loop(G, memory):
        q = G.copy()
        alphas = []
        for s, yv, As, Ay, rho in reversed(memory):
            a = rho * (As @ q)
            q -= a * yv
            alphas.append(a)
        s, yv, As, Ay, rho = memory[-1]
        r = (As @ yv) / (Ay @ yv) * q
        for (s, yv, As, Ay, rho), a in zip(memory, reversed(alphas)):
            b = rho * (Ay @ r)
            r += s * (a - b)
        return r


def initial_directions(functional: Functional, basis: Optional[SpectralBasis], m: int,
                       centre: np.ndarray, opts: SolverOptions) -> list:
    """Deterministic seeded starts: even starts are a bump at ``centre``,
    odd starts the eigenfunction e_{m+1}; each gets a small seeded perturbation."""
    grid = functional.grid
    pts = grid.interior_coordinates()
    node = pts[np.argmin(np.linalg.norm(pts - centre, axis=1))]
    eps = opts.bump_width * float(np.max(grid.h))
    r2 = np.sum((pts - node) ** 2, axis=1)
    bump = (1.0 + r2 / eps ** 2) ** (-(grid.spec.n - 2) / 2)
    bases = [bump]
    if basis is not None and basis.count > m:
        bases.append(basis.vectors[:, m].copy())
    starts = []
    for i in range(opts.starts):
        base = bases[i % len(bases)]
        rng = np.random.default_rng([opts.seed, i])
        starts.append(base * (1.0 + opts.perturbation * rng.standard_normal(len(base))))
    return starts


def minimize_sphere(functional: Functional, lam: float, basis: Optional[SpectralBasis], m: int,
                    opts: SolverOptions = SolverOptions(), centre=None, starts=None) -> GroundStateResult:
    """ell = inf over Sigma_m of max_{t, z} J(t w + z); best of several starts."""
    if m and (basis is None or basis.count < m + 1):
        raise ValidationError(f"need {m + 1} eigenpairs for m={m}")
    if centre is None:
        centre = np.mean(functional.grid.interior_coordinates(), axis=0)
    if starts is None:
        starts = initial_directions(functional, basis, m, np.asarray(centre), opts)
    descent = SphereDescent(functional, lam, basis, m, opts)
    runs = []
    failures = []
    for i, w0 in enumerate(starts):
        try:
            run = descent.run(w0)
        except SolverError as exc:
            failures.append(exc)
            log.debug("start %d failed: %s", i, exc)
            continue
        log.debug("start %d: level %.12g residual %.2e after %d iterations",
                  i, run.point.peak, run.residual, run.iterations)
        runs.append(run)
    if not runs:
        raise SolverError(f"all {len(starts)} starts failed: {failures[0] if failures else ''}")
    levels = [r.point.peak for r in runs]
    converged = [r for r in runs if r.converged]
    pool = converged or runs
    best = min(pool, key=lambda r: r.point.peak)
    pt = best.point
    result = GroundStateResult(
        lam=float(lam), m=m, ell=functional.value(lam, pt.u),
        u=ScalarField(pt.u, functional.grid), residual=best.residual,
        iterations=sum(r.iterations for r in runs), converged=best.converged,
        t=pt.t, z=pt.z, w=pt.w, start_levels=levels)
    if not converged:
        raise SolverError(f"no start converged at lambda={lam} (best residual {best.residual:.3e})",
                          iterations=result.iterations, residual=best.residual, partial=result)
    return result


def ground_state(problem, lam: float, opts: SolverOptions = SolverOptions(),
                 starts=None) -> GroundStateResult:
    """Discrete ground-state level at ``lam`` for a :class:`~anisocrit.problem.Problem`.

    m = 0 minimises the Rayleigh-type quotient Q (closed-form inner maximum);
    m >= 1 runs the full minimax.
    """
    basis = problem.basis
    loc = locate_interval(lam, basis)
    kap = problem.kappa
    result = minimize_sphere(problem.functional, lam, basis, loc.m, opts,
                             centre=kap.xi, starts=starts)
    result.kappa = kap.value
    result.diagnostics = concentration(result.u.values, problem.grid, kap,
                                       problem.functional.critical.weights)
    return result


def transfer(values: np.ndarray, source, target) -> np.ndarray:
    """Multilinear interpolation of interior values from grid ``source`` to the
    interior nodes of grid ``target`` (zero outside the source lattice)."""
    full = source.to_full(np.asarray(values, dtype=float))
    interp = RegularGridInterpolator(source.axes, full, bounds_error=False, fill_value=0.0)
    return interp(target.interior_coordinates())


def with_options(opts: SolverOptions, **kw) -> SolverOptions:
    return replace(opts, **kw)
