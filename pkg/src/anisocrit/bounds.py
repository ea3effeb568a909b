"""Closed-form lower bounds for lambda_{0,*}, starshape certificates and the
vector field chi_tau used in the Pohozaev-type nonexistence argument.

Every bound here is a lower bound for lambda_{0,*} in the weighted case
a = b = c = x1^k on a domain with alpha <= x1 <= beta.  Given a positive f on
[alpha, beta] satisfying condition (f)::

    alpha^k f(alpha)^2 <= t^k f(t)^2,   t^k f(t)^{2*} <= alpha^k f(alpha)^{2*},

one has lambda_{0,*} >= min_t q(t) with q = -(t^k f')' / (t^k f).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .domain import BoundarySamples, CoefficientField, DomainSpec, Grid, boundary_normals
from .errors import ValidationError
from .lift import omega_k

GENERIC_SAMPLES = 10_000
TABLE_MIN_SAMPLES = 1000


def critical_exponent(n: int) -> float:
    if n < 3:
        raise ValidationError(f"critical exponent needs n >= 3, got {n}")
    return 2.0 * n / (n - 2)


def _check_k_n(k: int, n: int):
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if n < 3:
        raise ValidationError(f"n must be >= 3, got {n}")


def power_bound(k: int, n: int, beta: float) -> float:
    """max(0, g (k - g - 1) / beta^2) with g = max((k-1)/2, k/2*)."""
    _check_k_n(k, n)
    if not beta > 0:
        raise ValidationError("beta must be positive")
    p = critical_exponent(n)
    g = max((k - 1) / 2, k / p)
    return max(0.0, g * (k - g - 1) / beta ** 2)


def exp_bound(k: int, n: int, alpha: float, beta: float) -> Optional[float]:
    """k^2 / (4 beta^2) when beta / alpha <= n / (n-2), else None."""
    _check_k_n(k, n)
    if not (alpha > 0 and beta > 0) or alpha > beta:
        raise ValidationError("need 0 < alpha <= beta")
    if beta / alpha > n / (n - 2):
        return None
    return k ** 2 / (4 * beta ** 2)


# ---------------------------------------------------------------------------
# generic f


class ConditionViolation(ValidationError):
    """Condition (f) fails; ``t`` is the first violating sample."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


@dataclass(frozen=True, eq=False)
class FFamily:
    """Test function f for the generic bound.

    kind "power": f = t^{-gamma}; "exponential": f = exp(-gamma (t - alpha));
    "tabulated": samples ``t, f, df, d2f`` on [alpha, beta].
    """

    kind: str
    gamma: float = 0.0
    alpha: float = 1.0
    t: Optional[np.ndarray] = field(default=None, repr=False)
    f: Optional[np.ndarray] = field(default=None, repr=False)
    df: Optional[np.ndarray] = field(default=None, repr=False)
    d2f: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("power", "exponential", "tabulated"):
            raise ValidationError(f"unknown family {self.kind!r}")
        if self.kind != "tabulated" and not self.gamma >= 0:
            raise ValidationError("gamma must be nonnegative")
        if self.kind == "tabulated":
            arrays = [np.asarray(a, dtype=float) for a in (self.t, self.f, self.df, self.d2f)]
            if any(a.ndim != 1 or len(a) != len(arrays[0]) for a in arrays):
                raise ValidationError("tabulated family needs four equal-length 1-D arrays")
            if len(arrays[0]) < TABLE_MIN_SAMPLES:
                raise ValidationError(f"tabulated family needs >= {TABLE_MIN_SAMPLES} samples")
            if np.any(np.diff(arrays[0]) <= 0):
                raise ValidationError("tabulated t must be strictly increasing")
            if np.any(arrays[1] <= 0) or not all(np.all(np.isfinite(a)) for a in arrays):
                raise ValidationError("tabulated f must be positive and finite")

    @classmethod
    def power(cls, gamma: float) -> "FFamily":
        return cls("power", gamma)

    @classmethod
    def exponential(cls, gamma: float, alpha: float) -> "FFamily":
        return cls("exponential", gamma, alpha)

    @classmethod
    def tabulated(cls, t, f, df, d2f) -> "FFamily":
        t = np.asarray(t, dtype=float)
        return cls("tabulated", 0.0, float(t[0]), t, np.asarray(f, float), np.asarray(df, float),
                   np.asarray(d2f, float))

    @classmethod
    def from_callables(cls, f: Callable, df: Callable, d2f: Callable, alpha: float, beta: float,
                       samples: int = GENERIC_SAMPLES) -> "FFamily":
        t = np.linspace(alpha, beta, samples)
        return cls.tabulated(t, f(t), df(t), d2f(t))

    def value(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return t ** (-self.gamma)
        if self.kind == "exponential":
            return np.exp(-self.gamma * (t - self.alpha))
        return np.interp(t, self.t, self.f)

    def samples(self, alpha: float, beta: float, count: int = GENERIC_SAMPLES) -> np.ndarray:
        if self.kind == "tabulated":
            lo, hi = self.t[0], self.t[-1]
            tol = 1e-12 * max(1.0, abs(beta))
            if lo > alpha + tol or hi < beta - tol:
                raise ValidationError(f"table covers [{lo}, {hi}], need [{alpha}, {beta}]")
            return self.t[(self.t >= alpha - tol) & (self.t <= beta + tol)]
        return np.linspace(alpha, beta, count)

    def q(self, t, k: int) -> np.ndarray:
        """-(t^k f')' / (t^k f)."""
        t = np.asarray(t, dtype=float)
        g = self.gamma
        if self.kind == "power":
            return g * (k - g - 1) / t ** 2
        if self.kind == "exponential":
            return g * (k - g * t) / t
        if not np.array_equal(t, self.t):
            f = np.interp(t, self.t, self.f)
            df = np.interp(t, self.t, self.df)
            d2f = np.interp(t, self.t, self.d2f)
        else:
            f, df, d2f = self.f, self.df, self.d2f
        return -(k * df / t + d2f) / f


def check_condition_f(fam: FFamily, k: int, n: int, alpha: float, beta: float,
                      rtol: float = 1e-12) -> None:
    """Raise :class:`ConditionViolation` unless condition (f) holds on the samples.

    Closed-form families are checked directly against t = alpha; tabulated
    ones by monotonicity of g = t^k f^2 (nondecreasing) and h = t^k f^{2*}
    (nonincreasing), which implies the condition.
    """
    p = critical_exponent(n)
    t = fam.samples(alpha, beta)
    f = fam.value(t) if fam.kind != "tabulated" else fam.f[np.searchsorted(fam.t, t)]
    # log form avoids overflow for large exponents
    lg = k * np.log(t) + 2 * np.log(f)
    lh = k * np.log(t) + p * np.log(f)
    if fam.kind == "tabulated":
        bad_g = np.flatnonzero(np.diff(lg) < -rtol * np.maximum(1.0, np.abs(lg[1:])))
        bad_h = np.flatnonzero(np.diff(lh) > rtol * np.maximum(1.0, np.abs(lh[1:])))
        bad = [(i + 1, "t^k f^2 decreases") for i in bad_g] + \
              [(i + 1, "t^k f^2* increases") for i in bad_h]
    else:
        la = k * math.log(alpha) + 2 * math.log(float(fam.value(alpha)))
        lb = k * math.log(alpha) + p * math.log(float(fam.value(alpha)))
        bad = [(i, "t^k f^2 < alpha^k f(alpha)^2")
               for i in np.flatnonzero(lg < la - rtol * max(1.0, abs(la)))]
        bad += [(i, "t^k f^2* > alpha^k f(alpha)^2*")
                for i in np.flatnonzero(lh > lb + rtol * max(1.0, abs(lb)))]
    if bad:
        i, why = min(bad)
        raise ConditionViolation(f"condition (f) fails at t={t[i]!r}: {why}", float(t[i]))


def generic_f_bound(fam: FFamily, k: int, n: int, alpha: float, beta: float,
                    samples: int = GENERIC_SAMPLES) -> float:
    """min over a sample grid of [alpha, beta] (endpoints included) of q(t)."""
    _check_k_n(k, n)
    if not (0 < alpha <= beta):
        raise ValidationError("need 0 < alpha <= beta")
    check_condition_f(fam, k, n, alpha, beta)
    t = fam.samples(alpha, beta, samples)
    return float(np.min(fam.q(t, k)))


def admissible_gamma(kind: str, k: int, n: int, alpha: float, beta: float):
    """Range of gamma for which the family satisfies condition (f), or None if empty."""
    p = critical_exponent(n)
    if kind == "power":
        return k / p, k / 2
    if kind == "exponential":
        lo, hi = k / (p * alpha), k / (2 * beta)
        return (lo, hi) if lo <= hi * (1 + 1e-15) else None
    raise ValidationError(f"no gamma parameter for {kind!r}")


@dataclass(frozen=True)
class GammaOptimum:
    kind: str
    gamma: float
    bound: float


def optimize_gamma(kind: str, k: int, n: int, alpha: float, beta: float) -> Optional[GammaOptimum]:
    """Best generic bound over the admissible gamma range of a closed-form family."""
    rng = admissible_gamma(kind, k, n, alpha, beta)
    if rng is None:
        return None
    lo, hi = rng
    hi = max(lo, hi)

    def make(g):
        return FFamily.power(g) if kind == "power" else FFamily.exponential(g, alpha)

    def value(g):
        return generic_f_bound(make(g), k, n, alpha, beta)

    candidates = [lo, hi]
    if hi > lo:
        res = minimize_scalar(lambda g: -value(g), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13 * max(1.0, hi)})
        candidates.append(float(res.x))
    best = max(candidates, key=value)
    return GammaOptimum(kind, best, value(best))


# ---------------------------------------------------------------------------
# comparison


def _min_over_closure(coeff: CoefficientField, spec: DomainSpec, grid: Grid) -> float:
    if coeff.kind == "constant":
        return coeff.value
    if coeff.kind == "power_x1":
        lo, hi = spec.alpha, spec.beta
        if coeff.exponent == 0:
            return coeff.scale + coeff.shift
        ends = [coeff.scale * lo ** coeff.exponent, coeff.scale * hi ** coeff.exponent]
        return min(ends) + coeff.shift
    return float(np.min(grid.from_full(coeff.full_values(grid))))


def comparison_bound(a: CoefficientField, b: CoefficientField, k: int, spec: DomainSpec,
                     grid: Grid, tol: float = 1e-12) -> Optional[float]:
    """power_bound(k, n, beta) if a >= x1^k >= b on the grid and min a = alpha^k, else None."""
    if a.closed_form and b.closed_form:
        closed = grid.closed_mask().ravel()
        pts = grid.node_coordinates().reshape(-1, spec.n)[closed]
        av, bv = a.evaluate(pts), b.evaluate(pts)
    else:
        pts = grid.interior_coordinates()
        av = grid.from_full(a.full_values(grid))
        bv = grid.from_full(b.full_values(grid))
    w = pts[:, 0] ** k
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.any(av < w - tol * scale) or np.any(w < bv - tol * scale):
        return None
    if abs(_min_over_closure(a, spec, grid) - spec.alpha ** k) > tol * scale:
        return None
    return power_bound(k, spec.n, spec.beta)


# ---------------------------------------------------------------------------
# chi_tau


def phi(t, k: int, tau: float):
    """(1/(k+1)) [1 - (tau/t)^{k+1}]."""
    t = np.asarray(t, dtype=float)
    return (1.0 - (tau / t) ** (k + 1)) / (k + 1)


def phi_chi(k: int, tau: float, y, z):
    """(phi(|y|), chi_tau(y, z)) with chi_tau(y, z) = (phi(|y|) y, z)."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape != (k + 1,):
        raise ValidationError(f"y must have k+1={k + 1} components")
    r = float(np.linalg.norm(y))
    if r == 0.0:
        raise ValidationError("chi_tau is undefined at y = 0")
    ph = float(phi(r, k, tau))
    return ph, np.concatenate([ph * y, z])


def chi_field(k: int, tau: float) -> Callable:
    """x -> chi_tau(x) on R^N with the first k+1 coordinates as y."""
    def field_(x):
        x = np.asarray(x, dtype=float)
        return phi_chi(k, tau, x[:k + 1], x[k + 1:])[1]
    return field_


def fd_jacobian(fn: Callable, x, h: float = 1e-4) -> np.ndarray:
    """Central-difference Jacobian, J[i, j] = d fn_i / d x_j."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, axis=1)


def fd_divergence(fn: Callable, x, h: float = 1e-4) -> float:
    return float(np.trace(fd_jacobian(fn, x, h)))


# ---------------------------------------------------------------------------
# nonexistence


@dataclass(frozen=True)
class NonexistenceCertificate:
    p: float
    N: int
    k: int
    tau: float
    t0: float
    t1: float
    xi0: tuple
    xi1: tuple
    critical: float
    lambda1: float
    threshold: float
    starshape_min_0: float
    starshape_min_1: float
    t_range_ok: bool
    samples: int
    valid: bool


def nonexistence_factor(p: float, critical: float) -> float:
    """2 (p - 2*) / (2* (p - 2))."""
    return 2.0 * (p - critical) / (critical * (p - 2.0))


def certify_nonexistence(spec: DomainSpec, p: float, lambda1: float, xi0=None, xi1=None,
                         t0: Optional[float] = None, t1: Optional[float] = None,
                         samples_per_facet: int = 10_000, tol: float = 1e-10,
                         boundary: Optional[BoundarySamples] = None) -> NonexistenceCertificate:
    """Check that the domain is doubly starshaped and report the lambda threshold
    below which no nontrivial solution exists.

    t0, t1 default to the x1 extent of the domain; xi_i = (t_i, z_c) with z_c
    the centre of the remaining extents (the problem is invariant under
    translations in z).
    """
    k = spec.k
    if k < 1:
        raise ValidationError("the nonexistence certificate needs k >= 1")
    n = spec.n
    N = n + k
    crit = 2.0 * (N - k) / (N - k - 2)
    if p < crit:
        raise ValidationError(f"p={p} is below the critical exponent {crit}")
    if not lambda1 > 0:
        raise ValidationError("lambda1 must be positive")
    t0 = spec.alpha if t0 is None else float(t0)
    t1 = spec.beta if t1 is None else float(t1)
    zc = np.array([0.5 * (lo + hi) for lo, hi in spec.shape.extents[1:]])
    xi0 = np.concatenate([[t0], zc]) if xi0 is None else np.asarray(xi0, dtype=float)
    xi1 = np.concatenate([[t1], zc]) if xi1 is None else np.asarray(xi1, dtype=float)
    if boundary is None:
        boundary = boundary_normals(spec, samples_per_facet)
    pts, nrm = boundary.points, boundary.normals

    def star_min(xi):
        keep = np.linalg.norm(pts - xi, axis=1) > 1e-8
        return float(np.min(np.einsum("ij,ij->i", pts[keep] - xi, nrm[keep])))

    s0, s1 = star_min(xi0), star_min(xi1)
    slack = 1e-12 * max(1.0, abs(t1))
    t_ok = bool(0 < t0 < t1 and np.all(pts[:, 0] >= t0 - slack) and np.all(pts[:, 0] <= t1 + slack))
    threshold = nonexistence_factor(p, crit) * lambda1
    return NonexistenceCertificate(
        p=float(p), N=N, k=k, tau=t0, t0=t0, t1=t1,
        xi0=tuple(float(v) for v in xi0), xi1=tuple(float(v) for v in xi1),
        critical=crit, lambda1=float(lambda1), threshold=float(threshold),
        starshape_min_0=s0, starshape_min_1=s1, t_range_ok=t_ok, samples=len(pts),
        valid=bool(t_ok and s0 > tol and s1 > tol))


def pohozaev_residual(functional, u, lam: float, k: int, tau: float,
                      p: Optional[float] = None) -> float:
    """Signed Pohozaev residual of u for chi_tau, in Omega units.

    With P = int x1^k |u|^p and phi = phi(x1; k, tau)::

        C   = (N-k)(1/p - 1/2)(||u||^2 - lam |u|^2) + ||u||^2
        RHS = (N-k)[P/p + lam |u|^2 / 2 - ||u||^2 / 2]
              + int x1^k [(1 - k phi) (d_1 u)^2 + |grad' u|^2]

    RHS is the interior side of the variational identity, equal to the
    boundary flux for a true solution.  The residual C - RHS equals
    (N-k)/p J'(u)u + k int x1^k phi (d_1 u)^2, which is positive for a
    nontrivial solution when tau < alpha.
    """
    grid = functional.grid
    u = np.asarray(u, dtype=float)
    n = grid.spec.n
    N = n + k
    crit = functional.critical
    if p is not None and p != crit.exponent:
        crit = replace(crit, exponent=float(p))
    p = crit.exponent
    a2, b2 = functional.stiffness.norm_sq(u), functional.mass.norm_sq(u)
    P = crit.value(u)
    full = grid.to_full(u)
    lo = [slice(None)] * n
    hi = [slice(None)] * n
    lo[0], hi[0] = slice(0, -1), slice(1, None)
    x_face = 0.5 * (grid.axes[0][:-1] + grid.axes[0][1:])
    shape = [1] * n
    shape[0] = -1
    weight = (x_face ** k * phi(x_face, k, tau)).reshape(shape)
    d1 = (full[tuple(hi)] - full[tuple(lo)]) / grid.h[0]
    radial = float(np.sum(weight * d1 ** 2) * grid.cell_volume)
    c_side = (N - k) * (1 / p - 0.5) * (a2 - lam * b2) + a2
    rhs = (N - k) * (P / p + 0.5 * lam * b2 - 0.5 * a2) + (a2 - k * radial)
    return float(omega_k(k) * (c_side - rhs))
