"""Smallest eigenpairs of A e = lam B e and the interval lattice T_m.

The iterative solver is a block LOBPCG with B-orthonormal bases, a Jacobi
preconditioner and a seeded random start block.  ``dense_oracle`` solves the
same pencil densely and exists to cross-check it on coarse grids.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import SolverError, SpectrumError, ValidationError
from .operators import MassOperator, StiffnessOperator

log = logging.getLogger(__name__)

MAX_MODES = 32
DENSE_LIMIT = 2000


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """First M eigenpairs, ascending, with |e_j|_{b,2} = 1 (columns of ``vectors``)."""

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int = 0

    @property
    def count(self) -> int:
        return len(self.values)

    def span(self, m: int) -> np.ndarray:
        """Basis of Z_m as an (N, m) block."""
        return self.vectors[:, :m]


def project_to_Y(w: np.ndarray, basis: SpectralBasis, m: int, stiffness: StiffnessOperator):
    """Remove the Z_m component of ``w`` in the a-inner product."""
    if m == 0:
        return np.array(w, dtype=float)
    E = basis.vectors[:, :m]
    AE = stiffness.matrix @ E
    # Gram matrix instead of lam_j delta_ij keeps the projection exact to rounding
    coef = np.linalg.solve(E.T @ AE, AE.T @ w)
    return w - E @ coef


@dataclass(frozen=True)
class IntervalLocation:
    m: int
    lower: float
    upper: float

    def contains(self, lam: float) -> bool:
        return self.lower <= lam < self.upper


def tie_tolerance(lam: float) -> float:
    return 1e-9 * max(1.0, abs(lam))


def locate_interval(lam: float, basis: SpectralBasis) -> IntervalLocation:
    """Index m with lam in T_m = [lam_m, lam_{m+1}) (T_0 = (-inf, lam_1))."""
    m = int(np.sum(basis.values <= lam + tie_tolerance(lam)))
    if m >= basis.count:
        raise SpectrumError(
            f"lambda={lam} is not below the largest computed eigenvalue "
            f"{basis.values[-1]}; increase --modes")
    lower = -np.inf if m == 0 else float(basis.values[m - 1])
    return IntervalLocation(m, lower, float(basis.values[m]))


def _b_orthonormalize(X: np.ndarray, bw: np.ndarray, drop: float = 1e-12):
    """B-orthonormal basis of span(X) via eigendecomposition of the Gram matrix."""
    G = X.T @ (bw[:, None] * X)
    G = 0.5 * (G + G.T)
    scale = np.sqrt(np.maximum(np.diag(G), np.finfo(float).tiny))
    G = G / np.outer(scale, scale)
    d, V = np.linalg.eigh(G)
    keep = d > drop * d[-1]
    return (X / scale) @ (V[:, keep] / np.sqrt(d[keep]))


def _orthogonalize_against(Q: np.ndarray, X: np.ndarray, bw: np.ndarray) -> np.ndarray:
    for _ in range(2):
        Q = Q - X @ (X.T @ (bw[:, None] * Q))
    return Q


def smallest_eigenpairs(stiffness: StiffnessOperator, mass: MassOperator, M: int,
                        tol: float = 1e-8, maxiter: int = 5000, seed: int = 0,
                        guard: Optional[int] = None) -> SpectralBasis:
    """LOBPCG for the M smallest eigenpairs of the pencil (A, B).

    Convergence: ``||A e - lam B e|| <= tol * ||B e||`` for the first M pairs.
    """
    N = stiffness.size
    if M < 1 or M > min(N, MAX_MODES):
        raise ValidationError(f"M={M} must lie in [1, {min(N, MAX_MODES)}]")
    A = stiffness.matrix
    bw = mass.weights
    p = min(N, M + (guard if guard is not None else max(4, M // 2)))
    if N <= 3 * p:
        return _small_dense(stiffness, mass, M)
    inv_diag = 1.0 / stiffness.diagonal

    rng = np.random.default_rng(seed)
    X = _b_orthonormalize(rng.standard_normal((N, p)), bw)
    AX = A @ X
    theta, C = sla.eigh(0.5 * (X.T @ AX + AX.T @ X))
    X, AX = X @ C, AX @ C
    P = None
    resn = np.full(p, np.inf)
    for it in range(1, maxiter + 1):
        BX = bw[:, None] * X
        R = AX - BX * theta
        resn = np.linalg.norm(R, axis=0) / np.linalg.norm(BX, axis=0)
        if np.all(resn[:M] <= tol):
            break
        active = resn > tol
        W = inv_diag[:, None] * R[:, active]
        blocks = [W] if P is None else [W, P[:, active]]
        Q = _orthogonalize_against(np.hstack(blocks), X, bw)
        Q = _b_orthonormalize(Q, bw)
        Q = _orthogonalize_against(Q, X, bw)
        if Q.shape[1] == 0:
            break
        S = np.hstack([X, Q])
        AS = np.hstack([AX, A @ Q])
        H = S.T @ AS
        Gm = S.T @ (bw[:, None] * S)
        H = 0.5 * (H + H.T)
        Gm = 0.5 * (Gm + Gm.T)
        theta_all, Call = sla.eigh(H, Gm)
        C = Call[:, :p]
        theta = theta_all[:p]
        P = Q @ C[p:, :]
        X = S @ C
        AX = AS @ C
        if it % 20 == 0:
            # restore B-orthonormality lost to rounding
            X = _b_orthonormalize(X, bw)
            AX = A @ X
            theta, C2 = sla.eigh(0.5 * (X.T @ AX + AX.T @ X))
            X, AX = X @ C2, AX @ C2
            P = None
    else:
        raise SolverError(f"LOBPCG did not converge in {maxiter} iterations; "
                          f"residuals {resn[:M]}", iterations=maxiter, residual=resn[:M])
    log.debug("LOBPCG converged in %d iterations", it)
    return _finalize(A, bw, X[:, :M], theta[:M], iterations=it)


def _finalize(A, bw, X, theta, iterations=0) -> SpectralBasis:
    order = np.argsort(theta, kind="stable")
    X = X[:, order]
    theta = np.asarray(theta)[order]
    norms = np.sqrt(np.einsum("ij,ij->j", X, bw[:, None] * X))
    X = X / norms
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(X), axis=0)
    X = X * np.sign(X[idx, np.arange(X.shape[1])])
    R = A @ X - (bw[:, None] * X) * theta
    res = np.linalg.norm(R, axis=0) / np.linalg.norm(bw[:, None] * X, axis=0)
    return SpectralBasis(np.array(theta, dtype=float), np.ascontiguousarray(X), res, iterations)


def _small_dense(stiffness, mass, M) -> SpectralBasis:
    vals, vecs = _dense(stiffness, mass)
    return _finalize(stiffness.matrix, mass.weights, vecs[:, :M], vals[:M])


def _dense(stiffness: StiffnessOperator, mass: MassOperator):
    A = stiffness.matrix.toarray()
    return sla.eigh(0.5 * (A + A.T), np.diag(mass.weights))


def dense_oracle(stiffness: StiffnessOperator, mass: MassOperator) -> np.ndarray:
    """Full ascending spectrum of the pencil by a dense symmetric solve."""
    if stiffness.size > DENSE_LIMIT:
        raise ValidationError(f"dense oracle limited to {DENSE_LIMIT} unknowns, got {stiffness.size}")
    return sla.eigh(stiffness.matrix.toarray(), np.diag(mass.weights), eigvals_only=True)
