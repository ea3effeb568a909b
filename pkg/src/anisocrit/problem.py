"""A discretised problem instance: domain, coefficients, forms, spectrum, kappa."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

from .domain import CoefficientField, DomainSpec, build_grid, default_weighted_coefficients
from .eigen import SpectralBasis, smallest_eigenpairs
from .operators import Functional
from .thresholds.levels import Kappa, kappa


@dataclass(eq=False)
class Problem:
    spec: DomainSpec
    a: CoefficientField
    b: CoefficientField
    c: CoefficientField
    modes: int = 8
    eig_tol: float = 1e-8
    seed: int = 0
    quadrature: str = "cell"
    _basis: Optional[SpectralBasis] = field(default=None, repr=False)

    @classmethod
    def weighted(cls, spec: DomainSpec, **kw) -> "Problem":
        """a = b = c = x1^k."""
        return cls(spec, *default_weighted_coefficients(spec.k), **kw)

    @cached_property
    def grid(self):
        return build_grid(self.spec)

    @cached_property
    def functional(self) -> Functional:
        return Functional.from_coefficients(self.grid, self.a, self.b, self.c,
                                            quadrature=self.quadrature)

    @property
    def basis(self) -> SpectralBasis:
        if self._basis is None or self._basis.count < self.modes:
            modes = min(self.modes, self.grid.size)
            self._basis = smallest_eigenpairs(self.functional.stiffness, self.functional.mass,
                                              modes, tol=self.eig_tol, seed=self.seed)
        return self._basis

    @cached_property
    def kappa(self) -> Kappa:
        return kappa(self.a, self.c, self.grid)

    def refined(self, grid) -> "Problem":
        """Same problem on another grid (tabulated coefficients cannot be moved)."""
        return Problem(self.spec.with_grid(grid), self.a, self.b, self.c,
                       modes=self.modes, eig_tol=self.eig_tol, seed=self.seed,
                       quadrature=self.quadrature)
