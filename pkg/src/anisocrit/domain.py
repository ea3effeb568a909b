"""Domains, tensor grids, coefficient fields and boundary samples.

A domain is either an axis-aligned box or a ball in R^n (n = 3 or 4).  Both
are discretised on a uniform node-centred tensor grid; nodes strictly inside
the domain carry unknowns and every other node is a Dirichlet node where the
field vanishes.  The x1 extent of the continuum domain (``alpha`` and
``beta``) is always taken from the analytic shape, never from the node set.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np
from scipy.stats import norm, qmc

from .errors import ConfigurationError, ValidationError

SUPPORTED_DIMENSIONS = (3, 4)
MIN_CELLS = 4


@dataclass(frozen=True)
class Box:
    bounds: tuple  # ((lo_1, hi_1), ..., (lo_n, hi_n))

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)

    @property
    def extents(self):
        return self.bounds


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def extents(self):
        return tuple((c - self.radius, c + self.radius) for c in self.center)


Shape = Union[Box, Ball]


@dataclass(frozen=True)
class DomainSpec:
    """Geometry of the domain, weight exponent ``k`` and grid resolution."""

    n: int
    shape: Shape
    k: int = 0
    grid: tuple = (16, 16, 16)

    def __post_init__(self):
        grid = (self.grid,) * self.n if np.isscalar(self.grid) else self.grid
        object.__setattr__(self, "grid", tuple(int(g) for g in grid))
        self.validate()

    def validate(self):
        if self.n not in SUPPORTED_DIMENSIONS:
            raise ConfigurationError(
                f"dimension n={self.n} unsupported; use one of {SUPPORTED_DIMENSIONS}")
        if self.k < 0 or int(self.k) != self.k:
            raise ConfigurationError(f"weight exponent k={self.k} must be a nonnegative integer")
        if len(self.grid) != self.n:
            raise ConfigurationError(f"grid has {len(self.grid)} axes, expected {self.n}")
        if any(g < MIN_CELLS for g in self.grid):
            raise ConfigurationError(f"need at least {MIN_CELLS} cells per axis, got {self.grid}")
        if isinstance(self.shape, Box):
            if len(self.shape.bounds) != self.n:
                raise ConfigurationError("box bounds do not match dimension")
            for lo, hi in self.shape.bounds:
                if not hi > lo:
                    raise ConfigurationError(f"degenerate box extent [{lo}, {hi}]")
        elif isinstance(self.shape, Ball):
            if len(self.shape.center) != self.n:
                raise ConfigurationError("ball center does not match dimension")
            if not self.shape.radius > 0:
                raise ConfigurationError("ball radius must be positive")
        else:
            raise ConfigurationError(f"unknown shape {self.shape!r}")
        if self.k >= 1 and not self.alpha > 0:
            raise ConfigurationError(
                f"k={self.k} requires the closed domain inside x1 > 0 (alpha={self.alpha})")

    @property
    def alpha(self) -> float:
        """min x1 over the closed domain."""
        return self.shape.extents[0][0]

    @property
    def beta(self) -> float:
        """max x1 over the closed domain."""
        return self.shape.extents[0][1]

    @property
    def critical_exponent(self) -> float:
        return 2.0 * self.n / (self.n - 2)

    def with_grid(self, grid) -> "DomainSpec":
        return DomainSpec(self.n, self.shape, self.k, grid)

    def contains_closed(self, points: np.ndarray, atol: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(points)
        if isinstance(self.shape, Box):
            ok = np.ones(len(points), dtype=bool)
            for i, (lo, hi) in enumerate(self.shape.bounds):
                ok &= (points[:, i] >= lo - atol) & (points[:, i] <= hi + atol)
            return ok
        d2 = np.sum((points - np.asarray(self.shape.center)) ** 2, axis=1)
        return d2 <= (self.shape.radius + atol) ** 2

    @classmethod
    def from_dict(cls, doc: dict) -> "DomainSpec":
        try:
            n = int(doc["n"])
            shape_doc = doc["shape"]
            if "box" in shape_doc:
                shape = Box(shape_doc["box"])
            elif "ball" in shape_doc:
                ball = shape_doc["ball"]
                shape = Ball(ball["center"], ball["radius"])
            else:
                raise ConfigurationError(f"unknown shape block {shape_doc!r}")
            return cls(n=n, shape=shape, k=int(doc.get("k", 0)), grid=doc.get("grid", 16))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed domain document: {exc}") from exc

    def to_dict(self) -> dict:
        if isinstance(self.shape, Box):
            shape = {"box": [list(b) for b in self.shape.bounds]}
        else:
            shape = {"ball": {"center": list(self.shape.center), "radius": self.shape.radius}}
        return {"n": self.n, "k": self.k, "shape": shape, "grid": list(self.grid)}


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid over the bounding box of a domain.

    ``mask`` flags interior nodes; ``index`` maps every node to its position
    in the flat (row-major) vector of interior unknowns, or -1.
    """

    spec: DomainSpec
    axes: tuple
    h: np.ndarray
    mask: np.ndarray
    index: np.ndarray

    @property
    def shape(self):
        return self.mask.shape

    @property
    def size(self) -> int:
        """Number of interior nodes (unknowns)."""
        return int(self.mask.sum())

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def flat_interior(self) -> np.ndarray:
        return np.flatnonzero(self.mask.ravel())

    def node_coordinates(self) -> np.ndarray:
        """Coordinates of all nodes, shape ``grid.shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def interior_coordinates(self) -> np.ndarray:
        """Coordinates of the interior nodes in unknown order, shape (size, n)."""
        return self.node_coordinates().reshape(-1, self.spec.n)[self.flat_interior]

    def closed_mask(self) -> np.ndarray:
        """Nodes lying in the closed domain (interior plus boundary nodes)."""
        pts = self.node_coordinates().reshape(-1, self.spec.n)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(pts))))
        return self.spec.contains_closed(pts, atol=tol).reshape(self.shape)

    def to_full(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        full = np.full(self.mask.size, fill, dtype=float)
        full[self.flat_interior] = values
        return full.reshape(self.shape)

    def from_full(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full, dtype=float).ravel()[self.flat_interior]


def build_grid(spec: DomainSpec) -> Grid:
    """Discretise ``spec`` on a node-centred tensor grid."""
    spec.validate()
    axes = []
    for (lo, hi), cells in zip(spec.shape.extents, spec.grid):
        if not hi > lo:
            raise ConfigurationError(f"degenerate axis extent [{lo}, {hi}]")
        axes.append(np.linspace(lo, hi, cells + 1))
    h = np.array([(ax[-1] - ax[0]) / (len(ax) - 1) for ax in axes])
    shape = tuple(len(ax) for ax in axes)

    if isinstance(spec.shape, Box):
        mask = np.zeros(shape, dtype=bool)
        mask[(slice(1, -1),) * spec.n] = True
    else:
        mesh = np.meshgrid(*axes, indexing="ij")
        d2 = sum((m - c) ** 2 for m, c in zip(mesh, spec.shape.center))
        mask = d2 < spec.shape.radius ** 2
        # bounding-box faces are never interior, even under rounding
        for ax in range(spec.n):
            edge = [slice(None)] * spec.n
            edge[ax] = 0
            mask[tuple(edge)] = False
            edge[ax] = -1
            mask[tuple(edge)] = False
    if not mask.any():
        raise ConfigurationError("grid has no interior nodes")

    index = np.full(mask.size, -1, dtype=np.int64)
    index[np.flatnonzero(mask.ravel())] = np.arange(int(mask.sum()))
    return Grid(spec, tuple(axes), h, mask, index.reshape(shape))


@dataclass(frozen=True)
class ScalarField:
    """Values on the interior nodes of a grid (zero on Dirichlet nodes)."""

    values: np.ndarray
    grid: Grid = field(repr=False)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise ValidationError(
                f"field has {values.shape} values, grid has {self.grid.size} interior nodes")
        if not np.all(np.isfinite(values)):
            raise ValidationError("field contains non-finite values")
        object.__setattr__(self, "values", values)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def full(self) -> np.ndarray:
        return self.grid.to_full(self.values)


# ---------------------------------------------------------------------------
# coefficients

_POWER_RE = re.compile(
    r"^\s*(?:(?P<scale>[-+0-9.eE]+)\s*\*\s*)?x1\s*\^\s*(?P<exp>k|\d+)"
    r"\s*(?:\+\s*(?P<shift>[-+0-9.eE]+))?\s*$")


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Coefficient a, b or c.

    ``power_x1`` evaluates ``scale * x1**exponent + shift``, ``constant``
    evaluates ``value``, ``tabulated`` holds values on the interior nodes of
    one particular grid.
    """

    kind: str
    exponent: int = 0
    scale: float = 1.0
    shift: float = 0.0
    value: float = 1.0
    table: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("power_x1", "constant", "tabulated"):
            raise ConfigurationError(f"unknown coefficient kind {self.kind!r}")
        if self.kind == "tabulated":
            if self.table is None:
                raise ConfigurationError("tabulated coefficient needs a table")
            table = np.asarray(self.table, dtype=float)
            if not np.all(np.isfinite(table)) or np.any(table <= 0):
                bad = int(np.argmin(np.where(np.isfinite(table), table, -np.inf)))
                raise ValidationError(
                    f"tabulated coefficient must be positive; entry {bad} is {table[bad]}")
            object.__setattr__(self, "table", table)

    @classmethod
    def power(cls, k: int, scale: float = 1.0, shift: float = 0.0) -> "CoefficientField":
        return cls("power_x1", exponent=int(k), scale=float(scale), shift=float(shift))

    @classmethod
    def constant(cls, value: float = 1.0) -> "CoefficientField":
        return cls("constant", value=float(value))

    @classmethod
    def tabulated(cls, values) -> "CoefficientField":
        return cls("tabulated", table=np.asarray(values, dtype=float))

    @property
    def closed_form(self) -> bool:
        return self.kind != "tabulated"

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Closed-form value at arbitrary points of shape (m, n)."""
        points = np.atleast_2d(points)
        if self.kind == "constant":
            return np.full(len(points), self.value)
        if self.kind == "power_x1":
            return self.scale * points[:, 0] ** self.exponent + self.shift
        raise ValidationError("tabulated coefficients can only be sampled on their grid")

    def full_values(self, grid: Grid) -> np.ndarray:
        """Values on every node; NaN off the interior for tabulated data."""
        if self.kind == "tabulated":
            if self.table.shape != (grid.size,):
                raise ValidationError(
                    f"table has {self.table.shape} entries, grid has {grid.size} interior nodes")
            return grid.to_full(self.table, fill=np.nan)
        pts = grid.node_coordinates().reshape(-1, grid.spec.n)
        return self.evaluate(pts).reshape(grid.shape)

    def to_dict(self):
        if self.kind == "constant":
            return self.value
        if self.kind == "power_x1":
            return {"power": self.exponent, "scale": self.scale, "shift": self.shift}
        return {"tabulated": True}


def sample_coefficient(coeff: CoefficientField, grid: Grid) -> np.ndarray:
    """Coefficient values on the interior nodes, validated positive."""
    values = grid.from_full(coeff.full_values(grid)) if coeff.closed_form else coeff.table
    if coeff.kind == "tabulated" and values.shape != (grid.size,):
        raise ValidationError("tabulated coefficient does not match grid")
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ValidationError("coefficient must be strictly positive on interior nodes")
    return np.array(values, dtype=float)


def parse_coefficient(doc, k: int, grid: Optional[Grid] = None, base: Optional[Path] = None):
    """Build a coefficient from its JSON description.

    Accepted forms: a number, ``"x1^k"``, ``"2*x1^3+0.1"``,
    ``{"power": k, "scale": s, "shift": c}`` and ``{"file": path}`` (a field
    file on the run grid).
    """
    if isinstance(doc, (int, float)):
        return CoefficientField.constant(doc)
    if isinstance(doc, str):
        try:
            return CoefficientField.constant(float(doc))
        except ValueError:
            pass
        match = _POWER_RE.match(doc)
        if not match:
            raise ConfigurationError(f"cannot parse coefficient {doc!r}")
        exp = k if match["exp"] == "k" else int(match["exp"])
        return CoefficientField.power(exp, float(match["scale"] or 1.0),
                                      float(match["shift"] or 0.0))
    if isinstance(doc, dict):
        if "power" in doc:
            exp = k if doc["power"] == "k" else int(doc["power"])
            return CoefficientField.power(exp, doc.get("scale", 1.0), doc.get("shift", 0.0))
        if "constant" in doc:
            return CoefficientField.constant(doc["constant"])
        if "file" in doc:
            from .fieldio import read_field_on_grid

            path = Path(doc["file"])
            if base is not None and not path.is_absolute():
                path = base / path
            if grid is None:
                raise ConfigurationError("tabulated coefficients need the run grid")
            return CoefficientField.tabulated(read_field_on_grid(path, grid))
    raise ConfigurationError(f"cannot parse coefficient {doc!r}")


# ---------------------------------------------------------------------------
# boundary samples


@dataclass(frozen=True)
class BoundarySample:
    point: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class BoundarySamples:
    """Boundary points and outward unit normals, stored as (m, n) arrays."""

    points: np.ndarray
    normals: np.ndarray

    def __len__(self):
        return len(self.points)

    def __iter__(self) -> Iterator[BoundarySample]:
        for p, q in zip(self.points, self.normals):
            yield BoundarySample(p, q)

    def __getitem__(self, i) -> BoundarySample:
        return BoundarySample(self.points[i], self.normals[i])


def sphere_directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Quasi-uniform unit vectors on S^{n-1}."""
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        phi = np.pi * (1.0 + 5.0 ** 0.5) * i
        rho = np.sqrt(1.0 - z * z)
        dirs = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    else:
        u = qmc.Sobol(d=n, scramble=True, seed=seed).random_base2(max(0, (count - 1).bit_length()))[:count]
        dirs = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def boundary_normals(spec: DomainSpec, samples_per_facet: int = 10_000) -> BoundarySamples:
    """Sample the boundary with outward unit normals.

    A ball gets ``samples_per_facet`` points on its sphere; a box gets a
    tensor lattice of roughly that many points on each of its 2n facets.
    """
    if samples_per_facet < 1:
        raise ConfigurationError("samples_per_facet must be positive")
    n = spec.n
    if isinstance(spec.shape, Ball):
        dirs = sphere_directions(n, samples_per_facet)
        points = np.asarray(spec.shape.center) + spec.shape.radius * dirs
        return BoundarySamples(points, dirs)

    per_axis = max(1, int(math.ceil(samples_per_facet ** (1.0 / (n - 1)))))
    bounds = spec.shape.bounds
    points, normals = [], []
    for ax in range(n):
        others = [i for i in range(n) if i != ax]
        grids = [bounds[i][0] + (np.arange(per_axis) + 0.5) * (bounds[i][1] - bounds[i][0]) / per_axis
                 for i in others]
        mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, n - 1)
        for side, sign in ((0, -1.0), (1, 1.0)):
            pts = np.empty((len(mesh), n))
            pts[:, others] = mesh
            pts[:, ax] = bounds[ax][side]
            nrm = np.zeros((len(mesh), n))
            nrm[:, ax] = sign
            points.append(pts)
            normals.append(nrm)
    return BoundarySamples(np.concatenate(points), np.concatenate(normals))


def load_domain_document(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def coefficients_from_document(doc: dict, spec: DomainSpec, grid: Optional[Grid] = None,
                               base: Optional[Path] = None):
    coeff = doc.get("coeff", {"a": "x1^k", "b": "x1^k", "c": "x1^k"})
    return tuple(parse_coefficient(coeff.get(name, "x1^k"), spec.k, grid, base)
                 for name in ("a", "b", "c"))


def default_weighted_coefficients(k: int) -> Sequence[CoefficientField]:
    """a = b = c = x1^k."""
    c = CoefficientField.power(k)
    return (c, c, c)
