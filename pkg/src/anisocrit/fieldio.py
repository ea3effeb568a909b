"""SBNF field files.

One ASCII header line::

    SBNF v1 n=3 dims=16,16,16 h=0.0625,0.0625,0.0625 origin=1,0,0

followed by little-endian float64 values on the interior lattice (indices
1..d_i-1 on every axis), row-major.  ``dims`` are cells per axis and
``origin`` is the coordinate of lattice node 0.  Nodes of the lattice that
lie outside a masked (ball) domain are stored as zeros.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import Grid
from .errors import ValidationError

MAGIC = "SBNF"
VERSION = "v1"


def fmt(x: float) -> str:
    """17 significant digits, round-trip safe."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class FieldHeader:
    n: int
    dims: tuple
    h: tuple
    origin: tuple

    @property
    def interior_shape(self):
        return tuple(d - 1 for d in self.dims)

    @property
    def payload_count(self) -> int:
        return int(np.prod(self.interior_shape))

    def encode(self) -> bytes:
        line = (f"{MAGIC} {VERSION} n={self.n} dims={','.join(str(d) for d in self.dims)} "
                f"h={','.join(fmt(v) for v in self.h)} "
                f"origin={','.join(fmt(v) for v in self.origin)}\n")
        return line.encode("ascii")

    @classmethod
    def decode(cls, line: str) -> "FieldHeader":
        parts = line.strip().split()
        if len(parts) != 6 or parts[0] != MAGIC or parts[1] != VERSION:
            raise ValidationError(f"not an {MAGIC} {VERSION} header: {line!r}")
        kv = {}
        for item in parts[2:]:
            key, _, val = item.partition("=")
            kv[key] = val
        try:
            n = int(kv["n"])
            dims = tuple(int(v) for v in kv["dims"].split(","))
            h = tuple(float(v) for v in kv["h"].split(","))
            origin = tuple(float(v) for v in kv["origin"].split(","))
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"malformed header {line!r}") from exc
        if not len(dims) == len(h) == len(origin) == n:
            raise ValidationError(f"inconsistent header {line!r}")
        return cls(n, dims, h, origin)

    @classmethod
    def for_grid(cls, grid: Grid) -> "FieldHeader":
        return cls(grid.spec.n, tuple(grid.spec.grid), tuple(float(v) for v in grid.h),
                   tuple(float(ax[0]) for ax in grid.axes))


def _inner(grid: Grid):
    return (slice(1, -1),) * grid.spec.n


def encode_field(grid: Grid, values) -> bytes:
    values = np.asarray(values, dtype=float)
    lattice = grid.to_full(values)[_inner(grid)]
    header = FieldHeader.for_grid(grid)
    return header.encode() + np.ascontiguousarray(lattice, dtype="<f8").tobytes()


def write_field(path, grid: Grid, values) -> None:
    Path(path).write_bytes(encode_field(grid, values))


def decode_field(blob: bytes):
    newline = blob.find(b"\n")
    if newline < 0:
        raise ValidationError("missing header line")
    header = FieldHeader.decode(blob[:newline].decode("ascii"))
    payload = blob[newline + 1:]
    if len(payload) != 8 * header.payload_count:
        raise ValidationError(
            f"payload has {len(payload)} bytes, expected {8 * header.payload_count}")
    lattice = np.frombuffer(payload, dtype="<f8").astype(float).reshape(header.interior_shape)
    return header, lattice


def read_field(path):
    """Return ``(header, lattice)`` with the lattice shaped ``dims - 1``."""
    return decode_field(Path(path).read_bytes())


def read_field_on_grid(path, grid: Grid) -> np.ndarray:
    """Values on the interior nodes of ``grid`` (unknown ordering)."""
    header, lattice = read_field(path)
    if header.dims != tuple(grid.spec.grid):
        raise ValidationError(f"file dims {header.dims} do not match grid {grid.spec.grid}")
    return np.ascontiguousarray(lattice[grid.mask[_inner(grid)]])
