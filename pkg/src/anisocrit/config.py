"""Run configuration (JSON) and deterministic number formatting for reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .domain import DomainSpec, build_grid, coefficients_from_document
from .errors import ConfigurationError
from .fieldio import fmt
from .nehari import SolverOptions
from .problem import Problem

SOLVER_KEYS = ("tol_res", "tol_e", "max_iter", "seed", "starts", "memory")


@dataclass(eq=False)
class RunConfig:
    """Domain document, solver block and output directory.

    Example::

        {"domain": {"n": 3, "k": 1, "shape": {"box": [[1, 2], [0, 1], [0, 1]]},
                    "grid": 16, "coeff": {"a": "x1^k", "b": "x1^k", "c": "x1^k"}},
         "solver": {"tol_res": 1e-8, "tol_e": 1e-10, "max_iter": 5000,
                    "seed": 0, "starts": 2},
         "modes": 8,
         "output": "out"}
    """

    domain: dict
    spec: DomainSpec
    solver: SolverOptions = field(default_factory=SolverOptions)
    modes: int = 8
    output: Optional[Path] = None
    base: Path = Path(".")

    @classmethod
    def from_dict(cls, doc: dict, base: Path = Path(".")) -> "RunConfig":
        if not isinstance(doc, dict) or "domain" not in doc:
            raise ConfigurationError("config needs a 'domain' block")
        unknown = set(doc) - {"domain", "solver", "modes", "output"}
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        spec = DomainSpec.from_dict(doc["domain"])
        spec.validate()
        solver_doc = doc.get("solver", {}) or {}
        bad = set(solver_doc) - set(SOLVER_KEYS)
        if bad:
            raise ConfigurationError(f"unknown solver keys {sorted(bad)}")
        for key in ("tol_res", "tol_e"):
            if key in solver_doc and not (isinstance(solver_doc[key], (int, float))
                                          and solver_doc[key] > 0):
                raise ConfigurationError(f"solver.{key} must be a positive number")
        seed = solver_doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
            raise ConfigurationError("solver.seed must be a 64-bit unsigned integer")
        try:
            solver = SolverOptions(**solver_doc)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid solver block: {exc}") from exc
        modes = doc.get("modes", 8)
        if not isinstance(modes, int) or modes < 1:
            raise ConfigurationError("modes must be a positive integer")
        output = doc.get("output")
        output = (base / output) if output is not None else None
        return cls(doc["domain"], spec, solver, modes, output, base)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc, base=path.parent)

    def problem(self, grid=None, modes: Optional[int] = None) -> Problem:
        spec = self.spec if grid is None else self.spec.with_grid(grid)
        coeffs = coefficients_from_document(self.domain, spec, build_grid(spec), self.base)
        return Problem(spec, *coeffs, modes=modes or self.modes, seed=self.solver.seed)


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float printed to 17 significant digits.

    Non-finite floats become null.
    """
    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return fmt(o) if math.isfinite(o) else "null"
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            return "[" + ", ".join(enc(v, level + 1) for v in o) + "]"
        if hasattr(o, "item"):
            return enc(o.item(), level)
        if hasattr(o, "tolist"):
            return enc(o.tolist(), level)
        raise TypeError(f"cannot serialise {type(o).__name__}")

    return enc(obj, 0) + "\n"


def csv_text(header, rows) -> str:
    """Comma-separated text; floats to 17 significant digits."""
    def cell(v):
        if isinstance(v, float) or hasattr(v, "dtype"):
            v = float(v)
            return fmt(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
        return str(v)

    lines = [",".join(header)]
    lines += [",".join(cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"
