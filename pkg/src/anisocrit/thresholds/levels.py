"""Sobolev constant, the concentration level kappa and concentration diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..domain import Ball, Box, CoefficientField, Grid
from ..errors import ValidationError


def sobolev_constant(n: int) -> float:
    """Best constant S of the embedding D^{1,2}(R^n) -> L^{2*}(R^n).

    Sharp value: S = pi n (n-2) (Gamma(n/2) / Gamma(n))^{2/n}.
    """
    if n < 3:
        raise ValidationError(f"Sobolev constant needs n >= 3, got {n}")
    return math.pi * n * (n - 2) * (math.gamma(n / 2) / math.gamma(n)) ** (2.0 / n)


def _monomial(coeff: CoefficientField):
    """(scale, exponent) if the coefficient is scale * x1**exponent, else None."""
    if coeff.kind == "constant":
        return coeff.value, 0
    if coeff.kind == "power_x1" and coeff.shift == 0.0:
        return coeff.scale, coeff.exponent
    return None


@dataclass(frozen=True, eq=False)
class Kappa:
    """kappa = q_min S^{n/2} / n with q = a^{n/2} / c^{(n-2)/2}.

    ``face`` is the x1 value of the minimizing set when q depends only on x1
    (monotonically); ``unique`` is False when the minimizer is a face or q is
    constant.  ``grid_minimizers`` lists closed-grid nodes attaining the
    grid minimum.
    """

    n: int
    q_min: float
    sobolev: float
    xi: np.ndarray
    q_min_grid: float
    analytic: bool
    unique: bool
    face: Optional[float]
    constant_quotient: bool
    grid_minimizers: np.ndarray
    shape: object = None

    @property
    def value(self) -> float:
        return self.q_min * self.sobolev ** (self.n / 2) / self.n

    def distance(self, point) -> float:
        """Distance from ``point`` to the set where q attains its minimum."""
        point = np.asarray(point, dtype=float)
        if self.constant_quotient:
            return 0.0
        if self.face is not None:
            if isinstance(self.shape, Box):
                return abs(point[0] - self.face)
            return float(np.linalg.norm(point - self.xi))
        return float(np.min(np.linalg.norm(self.grid_minimizers - point, axis=1)))


def quotient_values(a_vals, c_vals, n: int) -> np.ndarray:
    return a_vals ** (n / 2) / c_vals ** ((n - 2) / 2)


def kappa(a: CoefficientField, c: CoefficientField, grid: Grid) -> Kappa:
    """kappa^{a,c}: grid minimum of the weight quotient plus its closed form when known."""
    spec = grid.spec
    n = spec.n
    if a.closed_form and c.closed_form:
        closed = grid.closed_mask().ravel()
        pts = grid.node_coordinates().reshape(-1, n)[closed]
        q = quotient_values(a.evaluate(pts), c.evaluate(pts), n)
    else:
        pts = grid.interior_coordinates()
        a_full, c_full = a.full_values(grid), c.full_values(grid)
        q = quotient_values(grid.from_full(a_full), grid.from_full(c_full), n)
    if np.any(~np.isfinite(q)) or np.any(q <= 0):
        raise ValidationError("weight quotient must be positive")
    q_grid = float(q.min())
    ties = np.flatnonzero(q <= q_grid * (1 + 1e-12))
    minimizers = pts[ties]
    centre = np.array([0.5 * (lo + hi) for lo, hi in spec.shape.extents])
    xi = minimizers[np.argmin(np.linalg.norm(minimizers - centre, axis=1))]

    ma, mc = _monomial(a), _monomial(c)
    analytic = ma is not None and mc is not None
    face = None
    constant_quotient = False
    unique = len(ties) == 1
    q_min = q_grid
    if analytic:
        coef = ma[0] ** (n / 2) / mc[0] ** ((n - 2) / 2)
        expo = ma[1] * n / 2 - mc[1] * (n - 2) / 2
        if expo == 0:
            constant_quotient = True
            unique = False
            q_min = coef
        else:
            face = spec.alpha if expo > 0 else spec.beta
            q_min = coef * face ** expo
            xi = centre.copy()
            xi[0] = face
            unique = isinstance(spec.shape, Ball)
    return Kappa(n, float(q_min), sobolev_constant(n), np.asarray(xi, dtype=float), q_grid,
                 analytic, unique, face, constant_quotient, minimizers, spec.shape)


@dataclass(frozen=True)
class ConcentrationDiagnostics:
    max_abs: float
    peak: np.ndarray
    radius_nodes: float
    radius: float
    peak_to_xi: float
    mass_in_radius: float


def concentration(u, grid: Grid, kap: Kappa, c_weights: Optional[np.ndarray] = None,
                  exponent: Optional[float] = None) -> ConcentrationDiagnostics:
    """Peak value, 50%-mass radius of c|u|^{2*} around the peak, peak distance to xi."""
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise ValidationError("concentration of the zero field is undefined")
    exponent = exponent if exponent is not None else grid.spec.critical_exponent
    weights = c_weights if c_weights is not None else np.ones_like(u)
    pts = grid.interior_coordinates()
    i_peak = int(np.argmax(np.abs(u)))
    peak = pts[i_peak]
    mass = weights * np.abs(u) ** exponent
    mass = mass / mass.sum()
    dist = np.linalg.norm(pts - peak, axis=1)
    order = np.argsort(dist, kind="stable")
    cum = np.cumsum(mass[order])
    j = int(np.searchsorted(cum, 0.5 - 1e-14))
    j = min(j, len(cum) - 1)
    r50 = float(dist[order][j])
    h = float(np.max(grid.h))
    return ConcentrationDiagnostics(
        max_abs=float(np.abs(u[i_peak])),
        peak=peak,
        radius_nodes=max(1.0, r50 / h),
        radius=r50,
        peak_to_xi=kap.distance(peak),
        mass_in_radius=float(min(1.0, cum[j])),
    )
