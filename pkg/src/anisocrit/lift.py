"""O(k+1)-invariant functions on Omega = {(y, z) : (|y|, z) in Theta} and the
weighted problem on Theta.

For v(y, z) = u(|y|, z) with y in R^{k+1}::

    Delta v = x1^{-k} div(x1^k grad u),
    int_Omega |grad v|^2 = omega_k int_Theta x1^k |grad u|^2,

where omega_k = 2 pi^{(k+1)/2} / Gamma((k+1)/2) is the area of S^k.  Omega is
never gridded; its integrals carry omega_k analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .domain import (Box, CoefficientField, DomainSpec, Grid, ScalarField, build_grid,
                     sphere_directions)
from .errors import ValidationError
from .operators import assemble_stiffness


def omega_k(k: int) -> float:
    """Surface area of the unit sphere S^k in R^{k+1}."""
    if k < 0:
        raise ValidationError("k must be nonnegative")
    return 2.0 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def orbit_directions(k: int, count: int) -> np.ndarray:
    """``count`` unit vectors in R^{k+1}; equally spaced angles when k = 1."""
    if count < 1:
        raise ValidationError("need at least one angular sample")
    if k == 1:
        ang = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return sphere_directions(k + 1, count)


@dataclass(frozen=True, eq=False)
class LiftedField:
    """Samples of v(y, z) = u(|y|, z) on Omega.

    Row ``i`` of ``points`` is (y, z) with y = x1 * theta_j; ``source`` holds
    the Theta unknown it came from.
    """

    k: int
    points: np.ndarray
    values: np.ndarray
    source: np.ndarray
    angular: int
    grid: Grid

    @property
    def N(self) -> int:
        return self.points.shape[1]


def lift(u: ScalarField, k: int, angular_samples: int = 8) -> LiftedField:
    """Sample v(y, z) = u(|y|, z) on Theta nodes times ``angular_samples`` orbit points."""
    if k < 1:
        raise ValidationError(f"lift needs k >= 1, got {k}")
    grid = u.grid
    x = grid.interior_coordinates()
    if np.any(x[:, 0] <= 0):
        raise ValidationError("lift needs x1 > 0 on the grid")
    theta = orbit_directions(k, angular_samples)
    y = x[:, None, :1] * theta[None, :, :]
    z = np.broadcast_to(x[:, None, 1:], (len(x), len(theta), x.shape[1] - 1))
    points = np.concatenate([y, z], axis=2).reshape(-1, k + x.shape[1])
    source = np.repeat(np.arange(len(x)), len(theta))
    values = np.asarray(u.values)[source]
    return LiftedField(k, points, values, source, angular_samples, grid)


def restrict(v: LiftedField) -> ScalarField:
    """Inverse of :func:`lift`: the value on the first orbit sample of each node."""
    first = np.searchsorted(v.source, np.arange(v.grid.size))
    return ScalarField(v.values[first].copy(), v.grid)


def orbit_coordinates(points: np.ndarray, k: int) -> np.ndarray:
    """(|y|, z) for points (y, z) of Omega."""
    points = np.asarray(points, dtype=float)
    r = np.linalg.norm(points[:, :k + 1], axis=1)
    return np.column_stack([r, points[:, k + 1:]])


# ---------------------------------------------------------------------------
# closed-form test fields


@dataclass(frozen=True, eq=False)
class TestField:
    """Closed-form u on Theta with its gradient."""

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]

    __test__ = False  # not a pytest class

    def lifted_gradient_sq(self, points: np.ndarray, k: int) -> np.ndarray:
        """|grad v|^2 at Omega points from the chain rule, grad_y v = u_1 y / |y|."""
        x = orbit_coordinates(points, k)
        g = self.gradient(x)
        y = points[:, :k + 1]
        gy = g[:, :1] * y / x[:, :1]
        return np.sum(gy ** 2, axis=1) + np.sum(g[:, 1:] ** 2, axis=1)


def sine_field(spec: DomainSpec) -> TestField:
    """prod_i sin(pi (x_i - lo_i) / (hi_i - lo_i)) on a box; zero on its boundary."""
    if not isinstance(spec.shape, Box):
        raise ValidationError("sine_field is defined on boxes")
    lo = np.array([b[0] for b in spec.shape.bounds], dtype=float)
    L = np.array([b[1] - b[0] for b in spec.shape.bounds], dtype=float)

    def value(x):
        return np.prod(np.sin(np.pi * (x - lo) / L), axis=1)

    def gradient(x):
        s = np.sin(np.pi * (x - lo) / L)
        c = np.cos(np.pi * (x - lo) / L) * np.pi / L
        out = np.empty_like(x)
        for i in range(x.shape[1]):
            others = np.prod(np.delete(s, i, axis=1), axis=1)
            out[:, i] = c[:, i] * others
        return out

    return TestField(value, gradient)


# ---------------------------------------------------------------------------
# identities


@dataclass(frozen=True)
class EnergyIdentity:
    lhs: float
    rhs: float
    gap: float
    cells: tuple


def energy_identity_check(field_: TestField, spec: DomainSpec, k: Optional[int] = None,
                          order: int = 8, panels: int = 16,
                          angular_samples: int = 2) -> EnergyIdentity:
    """Compare int_Omega |grad v|^2 with omega_k u^T A u on the grid of ``spec``.

    The left side is independent of the grid: composite Gauss-Legendre
    quadrature (``panels`` panels of ``order`` points per axis) of |grad v|^2
    at lifted points, times the cylindrical measure omega_k x1^k.  Orbit
    constancy makes any number of angular samples exact.  The right side is
    the discrete weighted energy with a = x1^k.
    """
    k = spec.k if k is None else k
    if k < 1:
        raise ValidationError("energy identity needs k >= 1")
    grid = build_grid(spec)
    quad = build_grid(spec.with_grid((panels,) * spec.n))
    n = spec.n
    xg, wg = np.polynomial.legendre.leggauss(order)
    coords, weights = [], []
    for ax, axis in enumerate(quad.axes):
        centres = 0.5 * (axis[:-1] + axis[1:])
        h = quad.h[ax]
        coords.append((centres[:, None] + 0.5 * h * xg).ravel())
        weights.append(np.tile(0.5 * h * wg, len(centres)))
    theta = orbit_directions(k, angular_samples)
    # integrate slab by slab in x1 to bound memory
    rest = np.stack(np.meshgrid(*coords[1:], indexing="ij"), axis=-1).reshape(-1, n - 1)
    w_rest = weights[1]
    for extra in weights[2:]:
        w_rest = np.multiply.outer(w_rest, extra)
    w_rest = w_rest.ravel()
    if isinstance(spec.shape, Box):
        inside = np.ones(len(rest), dtype=bool)
    else:
        inside = None
    lhs = 0.0
    for x1, w1 in zip(coords[0], weights[0]):
        pts = np.column_stack([np.full(len(rest), x1), rest])
        keep = inside if inside is not None else spec.contains_closed(pts)
        sub = pts[keep]
        if not len(sub):
            continue
        # one orbit sample per point suffices (values are orbit-invariant); average a few
        acc = np.zeros(len(sub))
        for th in theta:
            omega_pts = np.column_stack([x1 * np.broadcast_to(th, (len(sub), k + 1)), sub[:, 1:]])
            acc += field_.lifted_gradient_sq(omega_pts, k)
        acc /= len(theta)
        lhs += w1 * x1 ** k * float(np.dot(w_rest[keep], acc))
    lhs *= omega_k(k)
    u = field_.value(grid.interior_coordinates())
    A = assemble_stiffness(grid, CoefficientField.power(k)).matrix
    rhs = omega_k(k) * float(u @ (A @ u))
    return EnergyIdentity(lhs, rhs, abs(lhs - rhs) / abs(lhs), tuple(spec.grid))


def laplacian_identity_spotcheck(u: Callable[[np.ndarray], float], k: int, points,
                                 h: float = 1e-4, direction=None) -> float:
    """max over ``points`` of |Delta v - x1^{-k} div(x1^k grad u)|, both by
    central differences with step ``h``.  ``u`` maps a Theta point to a value."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(points[:, 0] <= 0):
        raise ValidationError("sample points need x1 > 0")
    n = points.shape[1]
    N = n + k
    theta = np.zeros(k + 1)
    theta[0] = 1.0
    if direction is not None:
        theta = np.asarray(direction, dtype=float)
        theta = theta / np.linalg.norm(theta)

    def v(p):
        return u(np.concatenate([[np.linalg.norm(p[:k + 1])], p[k + 1:]]))

    worst = 0.0
    for x in points:
        p = np.concatenate([x[0] * theta, x[1:]])
        lap_v = 0.0
        for i in range(N):
            e = np.zeros(N)
            e[i] = h
            lap_v += (v(p + e) - 2 * v(p) + v(p - e)) / h ** 2
        div = 0.0
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            a_plus = (x[0] + 0.5 * e[0]) ** k
            a_minus = (x[0] - 0.5 * e[0]) ** k
            div += (a_plus * (u(x + e) - u(x)) - a_minus * (u(x) - u(x - e))) / h ** 2
        worst = max(worst, abs(lap_v - div / x[0] ** k))
    return worst
