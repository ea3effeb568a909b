"""Weighted stiffness, mass and critical forms and the energy functional.

The quadratic forms use the cell-volume (midpoint) rule on the nodes, so
with ``vol = h_1 ... h_n``::

    ||u||_a^2       = u^T A u       (conservative 2-point differences, face a)
    |u|_{b,2}^2     = sum b u^2 vol

The critical term integrates c |u_h|^{2*} of the multilinear interpolant u_h
by Gauss quadrature per cell.  Summing node values instead lets single-node
spikes beat the Sobolev level: the lattice quotient drops well below S.  The
7-point energy dominates the exact energy of u_h, so with the cell rule the
discrete quotient stays above S (for constant weights).

and J(u) = ||u||_a^2 / 2 - lam |u|_{b,2}^2 / 2 - |u|_{c,2*}^{2*} / 2*.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import distance_transform_edt
from scipy.sparse.linalg import LinearOperator, cg

from .domain import CoefficientField, Grid, sample_coefficient
from .errors import SolverError, ValidationError


def _check(u, size):
    u = np.asarray(u, dtype=float)
    if u.shape != (size,):
        raise ValidationError(f"field of shape {u.shape} does not match {size} unknowns")
    return u


def face_average(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the two endpoint values; NaN endpoints are ignored."""
    out = 0.5 * (left + right)
    out = np.where(np.isnan(left), right, out)
    return np.where(np.isnan(right), left, out)


@dataclass(frozen=True, eq=False)
class StiffnessOperator:
    """Symmetric positive definite discretisation of -div(a grad u)."""

    matrix: sp.csr_matrix
    grid: Grid

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def apply(self, u) -> np.ndarray:
        return self.matrix @ _check(u, self.size)

    def inner(self, u, v) -> float:
        return float(np.dot(self.matrix @ np.asarray(u, dtype=float), np.asarray(v, dtype=float)))

    def norm_sq(self, u) -> float:
        u = _check(u, self.size)
        return float(np.dot(self.matrix @ u, u))

    def solve(self, rhs, x0=None, rtol: float = 1e-12, maxiter: Optional[int] = None):
        """Jacobi-preconditioned conjugate gradients; returns ``(x, iterations)``."""
        rhs = _check(rhs, self.size)
        if not np.any(rhs):
            return np.zeros_like(rhs), 0
        inv_diag = 1.0 / self.diagonal
        precond = LinearOperator(self.matrix.shape, matvec=lambda r: inv_diag * r, dtype=float)
        count = [0]

        def _tick(_):
            count[0] += 1

        maxiter = maxiter or 20 * self.size
        x, info = cg(self.matrix, rhs, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter,
                     M=precond, callback=_tick)
        if info != 0:
            res = np.linalg.norm(rhs - self.matrix @ x) / np.linalg.norm(rhs)
            raise SolverError(f"elliptic solve did not converge in {count[0]} iterations "
                              f"(relative residual {res:.3e})", iterations=count[0], residual=res)
        return x, count[0]


@dataclass(frozen=True, eq=False)
class MassOperator:
    """Diagonal weights b * vol."""

    weights: np.ndarray

    def apply(self, u) -> np.ndarray:
        return self.weights * _check(u, len(self.weights))

    def inner(self, u, v) -> float:
        return float(np.dot(self.weights * np.asarray(u), np.asarray(v)))

    def norm_sq(self, u) -> float:
        u = _check(u, len(self.weights))
        return float(np.dot(self.weights * u, u))


def abs_pow(x: np.ndarray, e: float) -> np.ndarray:
    """|x|**e, by repeated squaring when e is a small even integer."""
    if e == 2:
        return x * x
    if e in (4, 6, 8):
        x2 = x * x
        out = x2 * x2
        for _ in range(int(e) // 2 - 2):
            out = out * x2
        return out
    return np.abs(x) ** e


def _gauss_points(exponent: float) -> int:
    """Points per axis integrating a trilinear field to the power ``exponent`` exactly."""
    return max(2, int(np.ceil((exponent + 1) / 2)))


def _linear_interpolation(cells: int, nodes: np.ndarray):
    """(cells*g, cells+1) matrix taking node values to Gauss points of each cell."""
    g = len(nodes)
    left = 0.5 * (1 - nodes)
    right = 0.5 * (1 + nodes)
    M = np.zeros((cells * g, cells + 1))
    rows = np.arange(cells * g)
    col = np.repeat(np.arange(cells), g)
    M[rows, col] = np.tile(left, cells)
    M[rows, col + 1] = np.tile(right, cells)
    return M


@dataclass(frozen=True, eq=False)
class CellQuadrature:
    """Tensor Gauss-Legendre rule on every cell for the multilinear interpolant.

    Interior unknowns are expanded to the full node lattice (zero elsewhere)
    and interpolated axis by axis, so no large sparse matrix is formed.
    """

    grid: Grid
    interp: tuple
    weights: np.ndarray

    @classmethod
    def build(cls, grid: Grid, coeff: CoefficientField, exponent: float) -> "CellQuadrature":
        g = _gauss_points(exponent)
        xg, wg = np.polynomial.legendre.leggauss(g)
        interp, coords, wts = [], [], []
        for ax, axis in enumerate(grid.axes):
            cells = len(axis) - 1
            h = float(grid.h[ax])
            interp.append(_linear_interpolation(cells, xg))
            centres = 0.5 * (axis[:-1] + axis[1:])
            coords.append((centres[:, None] + 0.5 * h * xg[None, :]).ravel())
            wts.append(np.tile(0.5 * h * wg, cells))
        w = wts[0]
        for extra in wts[1:]:
            w = np.multiply.outer(w, extra)
        quad = cls(grid, tuple(interp), w)
        if coeff.closed_form:
            pts = np.stack(np.meshgrid(*coords, indexing="ij"), axis=-1)
            cvals = coeff.evaluate(pts.reshape(-1, grid.spec.n)).reshape(w.shape)
        else:
            cvals = quad._interpolate(_fill_nearest(coeff.full_values(grid), grid.mask))
        if np.any(~np.isfinite(cvals)) or np.any(cvals <= 0):
            raise ValidationError("critical coefficient must be positive at every quadrature point")
        return cls(grid, tuple(interp), w * cvals)

    def _interpolate(self, full: np.ndarray) -> np.ndarray:
        for ax, M in enumerate(self.interp):
            full = np.moveaxis(np.tensordot(M, full, axes=([1], [ax])), 0, ax)
        return full

    def to_points(self, u: np.ndarray) -> np.ndarray:
        return self._interpolate(self.grid.to_full(u))

    def from_points(self, q: np.ndarray) -> np.ndarray:
        """Transpose of :meth:`to_points`."""
        for ax, M in enumerate(self.interp):
            q = np.moveaxis(np.tensordot(M.T, q, axes=([1], [ax])), 0, ax)
        return self.grid.from_full(q)


def _fill_nearest(full: np.ndarray, mask: np.ndarray) -> np.ndarray:
    bad = ~np.isfinite(full)
    if not np.any(bad):
        return full
    _, idx = distance_transform_edt(bad, return_indices=True)
    return full[tuple(idx)]


@dataclass(frozen=True, eq=False)
class CriticalForm:
    """u -> integral of c |u|^p with p = 2* by default.

    With ``cells`` set the integral is taken of the multilinear interpolant
    by Gauss quadrature on each cell (exact for constant c); otherwise node
    values are summed with the cell-volume weights ``weights``.  The node
    weights are kept in both cases for diagnostics.
    """

    weights: np.ndarray
    exponent: float
    cells: Optional[CellQuadrature] = None

    @property
    def quadrature(self) -> str:
        return "nodal" if self.cells is None else "cell"

    def value(self, u) -> float:
        u = _check(u, len(self.weights))
        if self.cells is None:
            return float(np.dot(self.weights, abs_pow(u, self.exponent)))
        q = self.cells.to_points(u)
        return float(np.vdot(self.cells.weights, abs_pow(q, self.exponent)))

    def derivative(self, u) -> np.ndarray:
        """Dual vector of v -> integral of c |u|^{p-2} u v (derivative of value / p)."""
        u = _check(u, len(self.weights))
        if self.cells is None:
            return self.weights * abs_pow(u, self.exponent - 2) * u
        q = self.cells.to_points(u)
        return self.cells.from_points(self.cells.weights * abs_pow(q, self.exponent - 2) * q)

    def sample_block(self, V: np.ndarray):
        """``(Q, W)`` with the columns of ``V`` at the quadrature points and their weights.

        The critical value of ``V @ c`` is ``sum(W * |Q @ c|**p)``.
        """
        V = np.asarray(V, dtype=float).reshape(len(self.weights), -1)
        if self.cells is None:
            return V, self.weights
        Q = np.column_stack([self.cells.to_points(v).ravel() for v in V.T])
        return Q, self.cells.weights.ravel()

    def hessian_block(self, u, V1: np.ndarray, V2: Optional[np.ndarray] = None) -> np.ndarray:
        """Matrix of the second variation of value / p, (p-1) c |u|^{p-2} [v1_i, v2_j]."""
        u = _check(u, len(self.weights))
        V1 = np.asarray(V1, dtype=float).reshape(len(u), -1)
        same = V2 is None
        V2 = V1 if same else np.asarray(V2, dtype=float).reshape(len(u), -1)
        p = self.exponent
        if self.cells is None:
            curv = (p - 1) * self.weights * abs_pow(u, p - 2)
            return V1.T @ (curv[:, None] * V2)
        curv = ((p - 1) * self.cells.weights * abs_pow(self.cells.to_points(u), p - 2)).ravel()
        Q1 = np.column_stack([self.cells.to_points(v).ravel() for v in V1.T])
        Q2 = Q1 if same else np.column_stack([self.cells.to_points(v).ravel() for v in V2.T])
        return Q1.T @ (curv[:, None] * Q2)


def assemble_stiffness(grid: Grid, a: CoefficientField) -> StiffnessOperator:
    n = grid.spec.n
    a_full = a.full_values(grid)
    index = grid.index
    vol = grid.cell_volume
    size = grid.size
    diag = np.zeros(size)
    rows, cols, vals = [], [], []
    for ax in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        ip = index[tuple(lo)].ravel()
        iq = index[tuple(hi)].ravel()
        w = face_average(a_full[tuple(lo)], a_full[tuple(hi)]).ravel() * vol / grid.h[ax] ** 2
        touch = (ip >= 0) | (iq >= 0)
        if np.any(~np.isfinite(w[touch])) or np.any(w[touch] <= 0):
            raise ValidationError("stiffness coefficient must be positive on every interior face")
        diag += np.bincount(ip[ip >= 0], weights=w[ip >= 0], minlength=size)
        diag += np.bincount(iq[iq >= 0], weights=w[iq >= 0], minlength=size)
        both = (ip >= 0) & (iq >= 0)
        rows.extend((ip[both], iq[both]))
        cols.extend((iq[both], ip[both]))
        vals.extend((-w[both], -w[both]))
    rows.append(np.arange(size))
    cols.append(np.arange(size))
    vals.append(diag)
    matrix = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(size, size))
    matrix.sum_duplicates()
    matrix.sort_indices()
    return StiffnessOperator(matrix, grid)


def assemble(grid: Grid, a: CoefficientField, b: CoefficientField, c: CoefficientField,
             quadrature: str = "cell"):
    """Return ``(StiffnessOperator, MassOperator, CriticalForm)`` on ``grid``.

    ``quadrature`` selects how the critical term is integrated: "cell" uses
    Gauss points of the multilinear interpolant, "nodal" the node values.
    """
    if quadrature not in ("cell", "nodal"):
        raise ValidationError(f"unknown quadrature {quadrature!r}")
    vol = grid.cell_volume
    p = grid.spec.critical_exponent
    stiffness = assemble_stiffness(grid, a)
    mass = MassOperator(sample_coefficient(b, grid) * vol)
    cells = CellQuadrature.build(grid, c, p) if quadrature == "cell" else None
    critical = CriticalForm(sample_coefficient(c, grid) * vol, p, cells)
    return stiffness, mass, critical


@dataclass(frozen=True)
class EnergyReport:
    lam: float
    norm_a2: float
    norm_b2: float
    crit_p: float
    exponent: float
    residual: float = float("nan")

    @property
    def value(self) -> float:
        return 0.5 * self.norm_a2 - 0.5 * self.lam * self.norm_b2 - self.crit_p / self.exponent

    @property
    def nehari(self) -> float:
        """J'(u)u = ||u||_a^2 - lam |u|_b^2 - |u|_c^p."""
        return self.norm_a2 - self.lam * self.norm_b2 - self.crit_p


class Functional:
    """The energy J_lam on a fixed discretisation."""

    def __init__(self, stiffness: StiffnessOperator, mass: MassOperator, critical: CriticalForm,
                 solve_rtol: float = 1e-12):
        self.stiffness = stiffness
        self.mass = mass
        self.critical = critical
        self.solve_rtol = solve_rtol

    @classmethod
    def from_coefficients(cls, grid, a, b, c, quadrature: str = "cell", **kw) -> "Functional":
        return cls(*assemble(grid, a, b, c, quadrature), **kw)

    def scaled(self, factor: float) -> "Functional":
        """The same functional with every form multiplied by ``factor`` > 0."""
        if not factor > 0:
            raise ValidationError("scale factor must be positive")
        crit = self.critical
        cells = None if crit.cells is None else replace(crit.cells, weights=factor * crit.cells.weights)
        return Functional(replace(self.stiffness, matrix=(factor * self.stiffness.matrix).tocsr()),
                          MassOperator(factor * self.mass.weights),
                          replace(crit, weights=factor * crit.weights, cells=cells),
                          self.solve_rtol)

    @property
    def grid(self) -> Grid:
        return self.stiffness.grid

    @property
    def n(self) -> int:
        return self.grid.spec.n

    @property
    def exponent(self) -> float:
        return self.critical.exponent

    def components(self, u):
        u = _check(u, self.stiffness.size)
        return self.stiffness.norm_sq(u), self.mass.norm_sq(u), self.critical.value(u)

    def value(self, lam: float, u) -> float:
        a2, b2, cp = self.components(u)
        return 0.5 * a2 - 0.5 * lam * b2 - cp / self.exponent

    def derivative(self, lam: float, u) -> np.ndarray:
        """Dual vector of J'(u): A u - lam B u - C(u)."""
        u = _check(u, self.stiffness.size)
        return self.stiffness.matrix @ u - lam * self.mass.weights * u - self.critical.derivative(u)

    def gradient(self, lam: float, u, x0=None):
        """Riesz representative g of J'(u) in the a-inner product.

        Returns ``(g, y)`` where ``y = A^{-1}(lam B u + C(u))`` so that
        ``g = u - y``; pass ``y`` back as ``x0`` to warm-start the next solve.
        """
        u = _check(u, self.stiffness.size)
        rhs = lam * self.mass.weights * u + self.critical.derivative(u)
        y, _ = self.stiffness.solve(rhs, x0=x0, rtol=self.solve_rtol)
        return u - y, y

    def dual_norm(self, lam: float, u, x0=None) -> float:
        g, _ = self.gradient(lam, u, x0=x0)
        return float(np.sqrt(max(self.stiffness.norm_sq(g), 0.0)))

    def energy(self, lam: float, u, with_residual: bool = True) -> EnergyReport:
        a2, b2, cp = self.components(u)
        res = self.dual_norm(lam, u) if with_residual else float("nan")
        return EnergyReport(float(lam), a2, b2, cp, self.exponent, res)

    def second_variation(self, lam: float, u, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        """Matrix J''(u)[v1_i, v2_j] for column blocks ``v1`` (N, p), ``v2`` (N, q)."""
        v1 = np.asarray(v1).reshape(len(u), -1)
        v2 = np.asarray(v2).reshape(len(u), -1)
        quad = v1.T @ (self.stiffness.matrix @ v2) - lam * v1.T @ (self.mass.weights[:, None] * v2)
        return quad - self.critical.hessian_block(u, v1, v2)
