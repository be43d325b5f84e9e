"""Uniform grids, cubes in the uniform norm, cell sets, and grid functions.

Everything in the package lives on a fixed uniform Cartesian grid over an
axis-parallel box.  A cell is identified with its center; a cube Q(x, r) is
the closed L-infinity ball of radius r about x, so ``diam Q = 2r`` and
``|Q| = (2r)^n``.  Integrals are midpoint Riemann sums at cell centers,
which makes measures of cell sets and L_u norms over them exact quantities
of the discrete model, and keeps cube membership monotone in the radius.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

# Index slack for closed-cube membership of cell centers.  Positions are
# affine in the cell index, so the slack is applied in index units.
_IDX_EPS = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform discretization of a box in R^n, 1 <= n <= 3.

    ``dims[i]`` cells along axis i, cell side ``h`` (same for all axes),
    ``origin`` = min corner of the box.  Cell ``c`` (multi-index) has center
    ``origin + (c + 1/2) h`` and volume ``h^n``.
    """

    dims: tuple[int, ...]
    origin: tuple[float, ...]
    h: float

    def __post_init__(self):
        if not 1 <= len(self.dims) <= 3:
            raise ValueError("grid dimension must be 1, 2 or 3")
        if len(self.origin) != len(self.dims):
            raise ValueError("origin/dims length mismatch")
        if any(d < 1 for d in self.dims):
            raise ValueError("dims must be >= 1")
        if not self.h > 0:
            raise ValueError("h must be positive")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "h", float(self.h))

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.dims))

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple(d * self.h for d in self.dims)

    @property
    def box_max(self) -> tuple[float, ...]:
        return tuple(o + w for o, w in zip(self.origin, self.widths))

    @property
    def rmax(self) -> float:
        """Half the box diameter in the uniform norm (largest useful radius)."""
        return max(self.widths) / 2.0

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.h

    def cell_center(self, index) -> np.ndarray:
        idx = np.asarray(index, dtype=float)
        return np.asarray(self.origin) + (idx + 0.5) * self.h

    def centers_of(self, flat: np.ndarray) -> np.ndarray:
        """Centers of cells given by flat (C-order) indices, shape (N, n)."""
        multi = np.unravel_index(np.asarray(flat, dtype=np.int64), self.dims)
        return np.stack(
            [self.origin[i] + (multi[i] + 0.5) * self.h for i in range(self.n)],
            axis=-1,
        )

    def axis_window(self, lo: float, hi: float, axis: int) -> tuple[int, int]:
        """Closed index range [i0, i1] of cells with center in [lo, hi].

        Returns i0 > i1 when the window is empty.  The range is clipped to
        the grid, so cubes sticking out of the box lose their outside part.
        """
        a = (lo - self.origin[axis]) / self.h - 0.5
        b = (hi - self.origin[axis]) / self.h - 0.5
        i0 = max(0, int(math.ceil(a - _IDX_EPS)))
        i1 = min(self.dims[axis] - 1, int(math.floor(b + _IDX_EPS)))
        return i0, i1

    def contains_point(self, x) -> bool:
        return all(
            self.origin[i] - _IDX_EPS * self.h
            <= float(x[i])
            <= self.box_max[i] + _IDX_EPS * self.h
            for i in range(self.n)
        )


@dataclass(frozen=True)
class Cube:
    """Closed axis-parallel cube Q(x, r) = {y : ||y - x||_inf <= r}."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise ValueError("cube radius must be positive")

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def diam(self) -> float:
        return 2.0 * self.radius

    @property
    def volume(self) -> float:
        return self.diam ** self.n

    def scale(self, lam: float) -> "Cube":
        return Cube(self.center, lam * self.radius)

    @property
    def star(self) -> "Cube":
        """The slightly enlarged cube (9/8)Q used for bump supports."""
        return self.scale(9.0 / 8.0)

    def contains_point(self, x) -> bool:
        return all(abs(float(x[i]) - self.center[i]) <= self.radius + 1e-15 for i in range(self.n))

    def intersects(self, other: "Cube") -> bool:
        return all(
            abs(self.center[i] - other.center[i]) <= self.radius + other.radius
            for i in range(self.n)
        )


class CellSet:
    """A set of grid cells, stored as a boolean mask over the grid."""

    __slots__ = ("grid", "mask")

    def __init__(self, grid: Grid, mask: np.ndarray):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != grid.dims:
            raise ValueError("mask shape does not match grid dims")
        self.grid = grid
        self.mask = mask

    @classmethod
    def empty(cls, grid: Grid) -> "CellSet":
        return cls(grid, np.zeros(grid.dims, dtype=bool))

    @classmethod
    def full(cls, grid: Grid) -> "CellSet":
        return cls(grid, np.ones(grid.dims, dtype=bool))

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def __bool__(self) -> bool:
        return bool(self.mask.any())

    def __and__(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.grid, self.mask & other.mask)

    def __or__(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.grid, self.mask | other.mask)

    def __sub__(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.grid, self.mask & ~other.mask)

    def issubset(self, other: "CellSet") -> bool:
        self._check(other)
        return bool(np.all(~self.mask | other.mask))

    def flat_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask.ravel())

    def centers(self) -> np.ndarray:
        return self.grid.centers_of(self.flat_indices())

    def _check(self, other: "CellSet"):
        if other.grid is not self.grid and other.grid != self.grid:
            raise ValueError("cell sets live on different grids")


class GridFunction:
    """Real-valued samples, one per grid cell.  All values must be finite."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.dims:
            raise ValueError("values shape does not match grid dims")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        self.grid = grid
        self.values = values

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        axes = [grid.axis_centers(i) for i in range(grid.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(grid, np.asarray(fn(*mesh), dtype=float) * np.ones(grid.dims))

    def restrict(self, A: CellSet) -> np.ndarray:
        return self.values[A.mask]


def cube_cells(grid: Grid, cube: Cube) -> CellSet:
    """Cells whose centers lie in the closed cube (clipped to the box)."""
    if cube.n != grid.n:
        raise ValueError("cube/grid dimension mismatch")
    mask = np.zeros(grid.dims, dtype=bool)
    slices = []
    for ax in range(grid.n):
        i0, i1 = grid.axis_window(
            cube.center[ax] - cube.radius, cube.center[ax] + cube.radius, ax
        )
        if i0 > i1:
            return CellSet(grid, mask)
        slices.append(slice(i0, i1 + 1))
    mask[tuple(slices)] = True
    return CellSet(grid, mask)


def measure(A: CellSet) -> float:
    """Lebesgue measure of a cell set: (number of cells) * h^n."""
    return A.count * A.grid.h ** A.grid.n


def lu_norm(f: GridFunction, A: CellSet, u: float) -> float:
    """L_u norm of f over the cell set A; empty A gives 0 by convention."""
    if u < 1:
        raise ValueError("u must be in [1, inf]")
    vals = f.restrict(A)
    if vals.size == 0:
        return 0.0
    if math.isinf(u):
        return float(np.max(np.abs(vals)))
    hn = A.grid.h ** A.grid.n
    return float((np.abs(vals) ** u).sum() * hn) ** (1.0 / u)


# ---------------------------------------------------------------------------
# File formats.
#
# GFN1: magic b"GFN1", little-endian u32 n, u32 dims[n], f64 origin[n],
#       f64 h, then f64 values in row-major (last axis fastest) order.
# SET1: same header with magic b"SET1", then the cell bits packed LSB-first
#       in flat row-major order, zero-padded to a byte boundary.
# ---------------------------------------------------------------------------


def _write_header(fh, magic: bytes, grid: Grid):
    fh.write(magic)
    fh.write(struct.pack("<I", grid.n))
    fh.write(struct.pack(f"<{grid.n}I", *grid.dims))
    fh.write(struct.pack(f"<{grid.n}d", *grid.origin))
    fh.write(struct.pack("<d", grid.h))


def _read_header(fh, magic: bytes) -> Grid:
    got = fh.read(4)
    if got != magic:
        raise ValueError(f"bad magic {got!r}, expected {magic!r}")
    (n,) = struct.unpack("<I", fh.read(4))
    dims = struct.unpack(f"<{n}I", fh.read(4 * n))
    origin = struct.unpack(f"<{n}d", fh.read(8 * n))
    (h,) = struct.unpack("<d", fh.read(8))
    return Grid(dims, origin, h)


def save_gridfunction(path, f: GridFunction):
    with open(path, "wb") as fh:
        _write_header(fh, b"GFN1", f.grid)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_gridfunction(path) -> GridFunction:
    with open(path, "rb") as fh:
        grid = _read_header(fh, b"GFN1")
        values = np.frombuffer(fh.read(8 * grid.ncells), dtype="<f8").reshape(grid.dims)
        return GridFunction(grid, values.copy())


def save_cellset(path, A: CellSet):
    with open(path, "wb") as fh:
        _write_header(fh, b"SET1", A.grid)
        bits = np.packbits(A.mask.ravel().astype(np.uint8), bitorder="little")
        fh.write(bits.tobytes())


def load_cellset(path) -> CellSet:
    with open(path, "rb") as fh:
        grid = _read_header(fh, b"SET1")
        nbytes = (grid.ncells + 7) // 8
        bits = np.frombuffer(fh.read(nbytes), dtype=np.uint8)
        mask = np.unpackbits(bits, bitorder="little")[: grid.ncells].astype(bool)
        return CellSet(grid, mask.reshape(grid.dims))
