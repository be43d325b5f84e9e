"""Dyadic Whitney decomposition of the complement and its partition of unity.

Distances are uniform-norm distances to the cell centers of S (the single
convention used package-wide).  A dyadic cube at level ``l`` (side 2^l cells,
levels down to -2 are quarter-cell cubes) with integer index ``j`` covers
``origin + [j, j+1) * 2^l h`` per axis.  A cube is accepted once

    dist(x_Q, S) >= 2 diam Q,

and subdivided otherwise.  Top-down this guarantees, exactly and with no
tolerance, ``diam Q <= dist(Q, S) <= 4 diam Q`` with
``dist(Q, S) = dist(x_Q, S) - r_Q``, that accepted cubes tile the complement
with disjoint interiors, and that cubes whose enlargements meet have
comparable sizes.  All cube geometry is kept in integer units of h/64, so
membership and intersection tests are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import CellSet, Cube, Grid, GridFunction
from .regular_set import RegularSet

_UNIT = 64  # integer geometry: 1 cell side = 64 units; min cube side = 16 units


def distance_field(S: RegularSet, grid: Optional[Grid] = None) -> np.ndarray:
    """Exact uniform distance from every cell center to the nearest S cell
    center, as an array over the grid."""
    grid = grid or S.grid
    table = S._build_half_dist()
    odd = tuple(slice(1, 2 * d, 2) for d in grid.dims)
    return table[odd].astype(float) * grid.h / 2.0


class WhitneyDecomposition:
    """The accepted cube family with integer geometry and spatial indexes.

    Arrays over cubes: ``levels`` (dyadic level), ``jindex`` (N, n) integer
    cube indices at that level, ``centers64``/``radius64`` (h/64 units),
    ``flagged`` (the enlargement Q* leaves the computational box).
    """

    def __init__(self, grid: Grid, S: RegularSet, levels, jindex, flagged, window):
        self.grid = grid
        self.S = S
        self.levels = np.asarray(levels, dtype=np.int32)
        self.jindex = np.asarray(jindex, dtype=np.int64).reshape(len(self.levels), grid.n)
        self.window = window
        side64 = (_UNIT << np.maximum(self.levels, 0).astype(np.int64)) >> np.maximum(
            -self.levels, 0
        ).astype(np.int64)
        self.side64 = side64
        self.radius64 = side64 // 2
        self.centers64 = self.jindex * side64[:, None] + self.radius64[:, None]
        self.flagged = np.asarray(flagged, dtype=bool)
        self._key = {
            (int(l), tuple(int(v) for v in j)): i
            for i, (l, j) in enumerate(zip(self.levels, self.jindex))
        }
        self._cover = None
        self._support = None

    # -- basic geometry ------------------------------------------------------

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def centers(self) -> np.ndarray:
        o = np.asarray(self.grid.origin)
        return o + self.centers64 * (self.grid.h / _UNIT)

    @property
    def radii(self) -> np.ndarray:
        return self.radius64 * (self.grid.h / _UNIT)

    @property
    def diams(self) -> np.ndarray:
        return 2.0 * self.radii

    def cube(self, row: int) -> Cube:
        return Cube(tuple(self.centers[row]), float(self.radii[row]))

    def row_of(self, cube: Cube) -> int:
        h = self.grid.h
        side = 2.0 * cube.radius
        level = round(math.log2(side / h))
        j = []
        for i in range(self.grid.n):
            j.append(round((cube.center[i] - cube.radius - self.grid.origin[i]) / side))
        row = self._key.get((int(level), tuple(int(v) for v in j)))
        if row is None:
            raise KeyError("cube is not a member of the decomposition")
        return row

    def cell_range(self, row: int, lam_num: int = 1, lam_den: int = 1):
        """Inclusive per-axis index range of cells with center inside
        (lam_num/lam_den) * Q.  Exact integer arithmetic."""
        out = []
        for ax in range(self.grid.n):
            c = int(self.centers64[row, ax])
            r = int(self.radius64[row]) * lam_num
            lo = c * lam_den - r  # units h/64 * lam_den
            hi = c * lam_den + r
            den = _UNIT * lam_den
            # cell i center at (i + 1/2)*64*lam_den units
            i0 = -((-(2 * lo - den)) // (2 * den))
            i1 = (2 * hi - den) // (2 * den)
            i0 = max(0, i0)
            i1 = min(self.grid.dims[ax] - 1, i1)
            out.append((int(i0), int(i1)))
        return out

    def star_bounds64(self, row: int):
        """Q* = (9/8) Q bounds in units of h/512 (exact integers)."""
        c = self.centers64[row] * 8
        r = int(self.radius64[row]) * 9
        return c - r, c + r

    # -- spatial indexes -------------------------------------------------------

    def _build_index(self, lam_num: int, lam_den: int):
        """CSR mapping cell -> rows whose (lam) cube contains the cell center."""
        pairs_cell = []
        pairs_row = []
        dims = self.grid.dims
        for row in range(len(self)):
            rng = self.cell_range(row, lam_num, lam_den)
            if any(a > b for a, b in rng):
                continue
            axes = [np.arange(a, b + 1) for a, b in rng]
            if self.grid.n == 1:
                flat = axes[0]
            else:
                mesh = np.meshgrid(*axes, indexing="ij")
                flat = np.ravel_multi_index([m.ravel() for m in mesh], dims)
            pairs_cell.append(flat.ravel())
            pairs_row.append(np.full(flat.size, row, dtype=np.int64))
        cells = np.concatenate(pairs_cell) if pairs_cell else np.zeros(0, dtype=np.int64)
        rows = np.concatenate(pairs_row) if pairs_row else np.zeros(0, dtype=np.int64)
        order = np.argsort(cells, kind="stable")
        cells, rows = cells[order], rows[order]
        counts = np.bincount(cells, minlength=self.grid.ncells)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr, rows

    @property
    def cover_index(self):
        """Cells -> rows of cubes containing the cell center (closed Q)."""
        if self._cover is None:
            self._cover = self._build_index(1, 1)
        return self._cover

    @property
    def support_index(self):
        """Cells -> rows of cubes whose Q* contains the cell center."""
        if self._support is None:
            self._support = self._build_index(9, 8)
        return self._support

    def cover_counts(self) -> np.ndarray:
        indptr, _ = self.cover_index
        return np.diff(indptr).reshape(self.grid.dims)

    def rows_covering_cell(self, flat: int) -> np.ndarray:
        indptr, rows = self.cover_index
        return rows[indptr[flat] : indptr[flat + 1]]

    # -- neighbor queries ------------------------------------------------------

    def neighbor_rows(self, row: int) -> np.ndarray:
        """Rows K with K* ∩ Q* nonempty (includes ``row`` itself)."""
        lev = int(self.levels[row])
        out = []
        c8 = self.centers64[row] * 8
        r9 = int(self.radius64[row]) * 9
        for lev2 in range(lev - 3, lev + 4):
            side64 = (_UNIT << max(lev2, 0)) >> max(-lev2, 0)
            if side64 == 0:
                continue
            r2_9 = (side64 // 2) * 9
            jr = []
            ok = True
            for ax in range(self.grid.n):
                # |c8 - c2*8| <= r9 + r2_9 with c2 = j*side + side/2
                lo = c8[ax] - (r9 + r2_9)
                hi = c8[ax] + (r9 + r2_9)
                j0 = -((-(2 * lo - 8 * side64)) // (16 * side64))
                j1 = (2 * hi - 8 * side64) // (16 * side64)
                if j0 > j1:
                    ok = False
                    break
                jr.append(range(int(j0), int(j1) + 1))
            if not ok:
                continue
            for j in _product(jr):
                row2 = self._key.get((lev2, j))
                if row2 is not None:
                    out.append(row2)
        return np.asarray(sorted(set(out)), dtype=np.int64)

    def stars_intersect(self, a: int, b: int) -> bool:
        ca, ra = self.centers64[a] * 8, int(self.radius64[a]) * 9
        cb, rb = self.centers64[b] * 8, int(self.radius64[b]) * 9
        return bool(np.all(np.abs(ca - cb) <= ra + rb))


def _product(ranges):
    if len(ranges) == 1:
        for a in ranges[0]:
            yield (a,)
    elif len(ranges) == 2:
        for a in ranges[0]:
            for b in ranges[1]:
                yield (a, b)
    else:
        for a in ranges[0]:
            for b in ranges[1]:
                for c in ranges[2]:
                    yield (a, b, c)


def whitney_decompose(
    S: RegularSet,
    grid: Optional[Grid] = None,
    window: tuple[float, float] = (2.0, 6.0),
    min_level: int = -2,
) -> WhitneyDecomposition:
    """Build the dyadic Whitney family of the complement of S.

    Subdivides while ``dist(x_Q, S) < window[0] * diam Q``; ``window[1]`` is
    asserted as the upper sanity bound on accepted cubes.  The complement is
    covered exactly: every non-S cell center lies in at least one accepted
    cube (quarter-cell cubes suffice, by construction).
    """
    grid = grid or S.grid
    n = grid.n
    h = grid.h
    comp = ~S.cells.mask
    if not comp.any():
        return WhitneyDecomposition(grid, S, [], np.zeros((0, n)), [], window)

    comp_prefix = _prefix(comp)
    half = S._build_half_dist()  # h/2 units on the half lattice

    top = max(1, int(math.ceil(math.log2(max(grid.dims)))))
    levels, jindex, flagged = [], [], []
    lo_w, hi_w = window

    stack = [(top, (0,) * n)]
    s_centers = None
    while stack:
        lev, j = stack.pop()
        side_cells = 2 ** lev if lev >= 0 else None
        if lev >= 0:
            rng = []
            empty = False
            for ax in range(n):
                a = j[ax] * side_cells
                b = min((j[ax] + 1) * side_cells, grid.dims[ax]) - 1
                if a > b or a >= grid.dims[ax]:
                    empty = True
                    break
                rng.append((a, b))
            if empty:
                continue
            if _range_count(comp_prefix, rng) == 0:
                continue  # entirely inside S

        # exact distance from the cube center to the S cell centers
        side64 = (_UNIT << max(lev, 0)) >> max(-lev, 0)
        c64 = np.asarray(j, dtype=np.int64) * side64 + side64 // 2
        d = _center_dist(S, grid, half, c64, lev)
        diam = side64 * h / _UNIT
        if d >= lo_w * diam * (1.0 - 1e-12):
            if d > hi_w * diam * (1.0 + 1e-12):
                raise AssertionError("accepted cube outside the sanity window")
            levels.append(lev)
            jindex.append(j)
            flagged.append(_star_leaves_box(grid, c64, side64 // 2))
            continue
        if lev <= min_level:
            raise AssertionError("subdivision reached the floor without acceptance")
        for off in np.ndindex(*([2] * n)):
            stack.append((lev - 1, tuple(2 * j[ax] + off[ax] for ax in range(n))))

    return WhitneyDecomposition(grid, S, levels, jindex, flagged, window)


def _prefix(mask: np.ndarray) -> np.ndarray:
    p = mask.astype(np.int64)
    for ax in range(mask.ndim):
        p = np.cumsum(p, axis=ax)
        pad = [(0, 0)] * mask.ndim
        pad[ax] = (1, 0)
        p = np.pad(p, pad)
    return p


def _range_count(prefix: np.ndarray, rng) -> int:
    n = len(rng)
    total = 0
    for corner in np.ndindex(*([2] * n)):
        idx = tuple(rng[ax][1] + 1 if corner[ax] else rng[ax][0] for ax in range(n))
        sign = (-1) ** (n - sum(corner))
        total += sign * int(prefix[idx])
    return total


def _center_dist(S: RegularSet, grid: Grid, half: np.ndarray, c64, lev: int) -> float:
    """Exact uniform distance from the cube center to the S cell centers."""
    h = grid.h
    if lev >= 0:
        q = []
        inside = True
        for ax in range(grid.n):
            v, rem = divmod(int(c64[ax]), _UNIT // 2)
            if rem != 0 or not 0 <= v <= 2 * grid.dims[ax]:
                inside = False
                break
            q.append(v)
        if inside:
            return float(half[tuple(q)]) * h / 2.0
        centers = S.cells.centers()
        x = np.asarray(grid.origin) + np.asarray(c64, dtype=float) * (h / _UNIT)
        return float(np.max(np.abs(centers - x), axis=1).min())
    # sub-cell cube: local exhaustive scan around the host cell
    host = tuple(int(c64[ax]) // _UNIT for ax in range(grid.n))
    q = tuple(2 * host[ax] + 1 for ax in range(grid.n))
    d_cell = float(half[q]) * h / 2.0
    x = np.asarray(grid.origin) + np.asarray(c64, dtype=float) * (h / _UNIT)
    rad_cells = int(math.ceil(d_cell / h)) + 2
    best = math.inf
    sl = tuple(
        slice(max(0, host[ax] - rad_cells), min(grid.dims[ax], host[ax] + rad_cells + 1))
        for ax in range(grid.n)
    )
    sub = S.cells.mask[sl]
    if sub.any():
        idx = np.argwhere(sub)
        for ax in range(grid.n):
            idx[:, ax] += sl[ax].start
        centers = np.asarray(grid.origin) + (idx + 0.5) * h
        best = float(np.max(np.abs(centers - x), axis=1).min())
    if not math.isfinite(best):
        centers = S.cells.centers()
        best = float(np.max(np.abs(centers - x), axis=1).min())
    return best


def _star_leaves_box(grid: Grid, c64, r64: int) -> bool:
    for ax in range(grid.n):
        lo = 8 * int(c64[ax]) - 9 * r64
        hi = 8 * int(c64[ax]) + 9 * r64
        if lo < 0 or hi > 8 * _UNIT * grid.dims[ax]:
            return True
    return False


def neighbors(W: WhitneyDecomposition, Q: Cube) -> list[Cube]:
    """All cubes K of the family with K* ∩ Q* nonempty (Q itself included)."""
    row = W.row_of(Q)
    return [W.cube(int(r)) for r in W.neighbor_rows(row)]


# ---------------------------------------------------------------------------
# Partition of unity
# ---------------------------------------------------------------------------


def smoothstep_coeffs(m: int) -> np.ndarray:
    """Coefficients of the order-(2m+1) polynomial smoothstep on [0, 1]."""
    coeffs = np.zeros(2 * m + 2)
    for j in range(m + 1):
        c = math.comb(m + j, j) * math.comb(2 * m + 1, m - j) * (-1.0) ** j
        coeffs[m + 1 + j] = c
    return coeffs  # ascending powers


class PartitionOfUnity:
    """Smooth bumps subordinate to the Whitney family.

    psi_Q is a tensor product of a 1-D C^m profile equal to 1 on Q and
    vanishing outside Q* (transition band of width r_Q/8); phi_Q is psi_Q
    normalized by the total at each point, so the partition properties hold
    by construction wherever any bump is positive.
    """

    def __init__(self, W: WhitneyDecomposition, m: int):
        if m < 1:
            raise ValueError("smoothness order m must be >= 1")
        self.W = W
        self.m = int(m)
        self._step = smoothstep_coeffs(self.m)
        self._blocks: Optional[list] = None
        self._den: Optional[np.ndarray] = None

    def profile(self, s: np.ndarray) -> np.ndarray:
        """1-D profile in the scaled variable s = |x - c| / r."""
        s = np.asarray(s, dtype=float)
        out = np.ones_like(s)
        out[s >= 9.0 / 8.0] = 0.0
        band = (s > 1.0) & (s < 9.0 / 8.0)
        t = (s[band] - 1.0) * 8.0
        out[band] = 1.0 - np.polynomial.polynomial.polyval(t, self._step)
        return out

    def _block(self, row: int):
        W = self.W
        grid = W.grid
        rng = W.cell_range(row, 9, 8)
        if any(a > b for a, b in rng):
            return None
        c = W.centers[row]
        r = float(W.radii[row])
        axes = []
        for ax in range(grid.n):
            a, b = rng[ax]
            s = np.abs(grid.axis_centers(ax)[a : b + 1] - c[ax]) / r
            axes.append(self.profile(s))
        psi = axes[0]
        for vals in axes[1:]:
            psi = np.multiply.outer(psi, vals)
        slices = tuple(slice(a, b + 1) for a, b in rng)
        return slices, psi

    @property
    def blocks(self) -> list:
        if self._blocks is None:
            self._blocks = [self._block(row) for row in range(len(self.W))]
        return self._blocks

    @property
    def den(self) -> np.ndarray:
        """Sum of all bumps at every cell center."""
        if self._den is None:
            den = np.zeros(self.W.grid.dims)
            for blk in self.blocks:
                if blk is None:
                    continue
                slices, psi = blk
                den[slices] += psi
            self._den = den
        return self._den

    def phi_at_cells(self, row: int) -> np.ndarray:
        """phi_Q over the whole grid (zero outside supp psi_Q)."""
        out = np.zeros(self.W.grid.dims)
        blk = self.blocks[row]
        if blk is None:
            return out
        slices, psi = blk
        den = self.den[slices]
        with np.errstate(invalid="ignore", divide="ignore"):
            out[slices] = np.where(den > 0, psi / den, 0.0)
        return out

    def phi_sum_on_complement(self) -> np.ndarray:
        """Sum of phi_Q at complement cell centers (identically 1)."""
        comp = ~self.W.S.cells.mask
        total = np.zeros(self.W.grid.dims)
        for blk in self.blocks:
            if blk is None:
                continue
            slices, psi = blk
            den = self.den[slices]
            with np.errstate(invalid="ignore", divide="ignore"):
                total[slices] += np.where(den > 0, psi / den, 0.0)
        return total[comp]


def partition_of_unity(W: WhitneyDecomposition, m: int) -> PartitionOfUnity:
    return PartitionOfUnity(W, m)
