"""Regular subsets of the grid: generators, regularity constants, distances.

A set S is a union of closed grid cells (so it is closed and |Q ∩ S| is an
exact cell count).  Distances to S are measured in the uniform norm to the
*cell centers* of S; the package keeps one convention everywhere.  For exact
distance queries the module maintains an integer distance table on the
half-step lattice (cell centers and cube corners), built by repeated box
dilation, plus a nearest-source table with lexicographic tie-breaking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import CellSet, Cube, Grid, GridFunction, cube_cells, measure

_SCAN_CAP = 100_000  # full-S center scan above this count uses a stride subsample


@dataclass
class SetSpec:
    """Declarative description of a set construction.

    kind: one of box, half_space, fat_cantor, fat_sierpinski_carpet,
    lipschitz_subgraph, union.  ``params`` are kind-specific; see the
    individual ``_gen_*`` functions.
    """

    kind: str
    params: dict = field(default_factory=dict)


class RegularSet:
    """A closed set of cells with estimated regularity constants.

    theta >= 1 and delta > 0 satisfy, on the sampled (center, radius)
    lattice, |Q| <= theta |Q ∩ S| for every cube Q centered at a cell of S
    with diam Q <= delta.  ``meta`` carries generator bookkeeping (exact
    truncated-construction measure, sampling info).
    """

    def __init__(self, cells: CellSet, theta: float, delta: float, meta: Optional[dict] = None):
        if not cells:
            raise ValueError("regular set must be nonempty")
        self.cells = cells
        self.theta = float(theta)
        self.delta = float(delta)
        self.meta = dict(meta or {})
        self._half_dist: Optional[np.ndarray] = None
        self._half_src: Optional[np.ndarray] = None
        self._half_src_cap: int = -1

    @property
    def grid(self) -> Grid:
        return self.cells.grid

    # -- distance machinery -------------------------------------------------

    def _build_half_dist(self) -> np.ndarray:
        """Exact king-metric distance (in h/2 units) on the half-step lattice.

        Lattice point q (multi-index over 2*dims+1 per axis) sits at
        origin + q * h/2; cell centers are the odd points.  Entry = uniform
        distance to the nearest S cell center, in units of h/2.
        """
        if self._half_dist is not None:
            return self._half_dist
        grid = self.grid
        shape = tuple(2 * d + 1 for d in grid.dims)
        if grid.n == 1:
            dist = _half_dist_1d(self.cells.mask, shape[0])
        else:
            settled = np.zeros(shape, dtype=bool)
            src_slices = tuple(slice(1, 2 * d, 2) for d in grid.dims)
            settled[src_slices] = self.cells.mask
            dist = np.full(shape, -1, dtype=np.int32)
            dist[settled] = 0
            t = 0
            while not settled.all():
                t += 1
                dilated = settled
                for ax in range(grid.n):
                    a = dilated
                    m = a.copy()
                    sl_lo = [slice(None)] * grid.n
                    sl_hi = [slice(None)] * grid.n
                    sl_lo[ax] = slice(1, None)
                    sl_hi[ax] = slice(None, -1)
                    m[tuple(sl_hi)] |= a[tuple(sl_lo)]
                    m[tuple(sl_lo)] |= a[tuple(sl_hi)]
                    dilated = m
                new = dilated & ~settled
                dist[new] = t
                settled = dilated
        self._half_dist = dist
        return dist

    def _build_half_src(self, cap: int) -> np.ndarray:
        """Nearest S-cell flat index per lattice point, settled out to
        king distance ``cap`` (h/2 units); -1 beyond.  Ties resolve to the
        lexicographically smallest cell multi-index (= smallest flat index).
        """
        if self._half_src is not None and self._half_src_cap >= cap:
            return self._half_src
        grid = self.grid
        dist = self._build_half_dist()
        cap = min(int(cap), int(dist.max()))
        shape = dist.shape
        BIG = np.iinfo(np.int64).max
        src = np.full(shape, BIG, dtype=np.int64)
        src_slices = tuple(slice(1, 2 * d, 2) for d in grid.dims)
        flat = np.arange(grid.ncells, dtype=np.int64).reshape(grid.dims)
        src_grid = src[src_slices]
        src_grid[self.cells.mask] = flat[self.cells.mask]
        src[src_slices] = src_grid

        offsets = [off for off in np.ndindex(*([3] * grid.n))]
        offsets = [tuple(o - 1 for o in off) for off in offsets if any(o != 1 for o in off)]
        for t in range(1, cap + 1):
            frontier = dist == t
            if not frontier.any():
                break
            best = np.full(shape, BIG, dtype=np.int64)
            prev = dist == (t - 1)
            donor = np.where(prev, src, BIG)
            for off in offsets:
                shifted = _shift(donor, off, BIG)
                np.minimum(best, shifted, out=best)
            src[frontier] = best[frontier]
        self._half_src = src
        self._half_src_cap = cap
        return src

    def dist_to_centers(self, x) -> float:
        """Exact uniform distance from point x to the nearest S cell center."""
        grid = self.grid
        q = self._lattice_index(x)
        if q is not None:
            return float(self._build_half_dist()[q]) * grid.h / 2.0
        centers = self.cells.centers()
        return float(np.max(np.abs(centers - np.asarray(x, dtype=float)), axis=1).min())

    def nearest_cell(self, x) -> int:
        """Flat index of the S cell whose center is nearest to x.

        Ties break to the lexicographically smallest cell multi-index.
        """
        grid = self.grid
        q = self._lattice_index(x)
        if q is not None:
            d = int(self._build_half_dist()[q])
            src = self._build_half_src(d)
            val = src[q]
            if val != np.iinfo(np.int64).max and self._half_src_cap >= d:
                return int(val)
        centers = self.cells.centers()
        dists = np.max(np.abs(centers - np.asarray(x, dtype=float)), axis=1)
        return int(self.cells.flat_indices()[int(np.argmin(dists))])

    def _lattice_index(self, x):
        grid = self.grid
        q = []
        for i in range(grid.n):
            v = (float(x[i]) - grid.origin[i]) / (grid.h / 2.0)
            r = round(v)
            if abs(v - r) > 1e-6 or not 0 <= r <= 2 * grid.dims[i]:
                return None
            q.append(int(r))
        return tuple(q)

    def prepare_anchors(self, max_dist: float):
        """Pre-build the nearest-source table out to a physical distance."""
        cap = int(math.ceil(max_dist / (self.grid.h / 2.0))) + 1
        self._build_half_src(cap)


def _half_dist_1d(mask: np.ndarray, size: int) -> np.ndarray:
    pos = np.full(size, np.iinfo(np.int32).max // 2, dtype=np.int64)
    src_idx = np.flatnonzero(mask)
    lattice = np.arange(size)
    if src_idx.size == 0:
        raise ValueError("empty set")
    centers = 2 * src_idx + 1
    j = np.searchsorted(centers, lattice)
    d_right = np.where(j < centers.size, np.abs(centers[np.minimum(j, centers.size - 1)] - lattice), pos)
    d_left = np.where(j > 0, np.abs(lattice - centers[np.maximum(j - 1, 0)]), pos)
    return np.minimum(d_left, d_right).astype(np.int32)


def _shift(a: np.ndarray, off, fill):
    out = np.full_like(a, fill)
    src = []
    dst = []
    for o, size in zip(off, a.shape):
        if o == 0:
            src.append(slice(None))
            dst.append(slice(None))
        elif o > 0:
            src.append(slice(o, None))
            dst.append(slice(None, -o))
        else:
            src.append(slice(None, o))
            dst.append(slice(-o, None))
    out[tuple(dst)] = a[tuple(src)]
    return out


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def generate_set(spec: SetSpec, grid: Grid, estimate: bool = True, radii=None) -> RegularSet:
    """Rasterize a set construction and estimate its regularity constants."""
    gen = _GENERATORS.get(spec.kind)
    if gen is None:
        raise ValueError(f"unknown set kind {spec.kind!r}")
    mask, meta = gen(spec.params, grid)
    if not mask.any():
        raise ValueError("degenerate spec: truncated construction has empty mask")
    cells = CellSet(grid, mask)
    if estimate:
        theta, delta, est_meta = estimate_regularity(cells, radii)
        meta.update(est_meta)
    else:
        theta, delta = 1.0, grid.rmax
    rs = RegularSet(cells, theta, delta, meta)
    return rs


def _axes_mask(grid: Grid, per_axis_predicates) -> np.ndarray:
    mask = np.ones(grid.dims, dtype=bool)
    for ax, pred in enumerate(per_axis_predicates):
        if pred is None:
            continue
        line = pred(grid.axis_centers(ax))
        shape = [1] * grid.n
        shape[ax] = grid.dims[ax]
        mask &= line.reshape(shape)
    return mask


def _gen_box(params: dict, grid: Grid):
    lo = params.get("lo", [0.0] * grid.n)
    hi = params.get("hi", [1.0] * grid.n)
    preds = [
        (lambda c, a=float(lo[i]), b=float(hi[i]): (c >= a - 1e-12) & (c <= b + 1e-12))
        for i in range(grid.n)
    ]
    vol = float(np.prod([hi[i] - lo[i] for i in range(grid.n)]))
    return _axes_mask(grid, preds), {"kind": "box", "expected_measure": vol}


def _gen_half_space(params: dict, grid: Grid):
    axis = int(params.get("axis", 0))
    threshold = float(params.get("threshold", 0.0))
    side = int(params.get("side", +1))
    preds = [None] * grid.n
    if side >= 0:
        preds[axis] = lambda c: c >= threshold - 1e-12
    else:
        preds[axis] = lambda c: c <= threshold + 1e-12
    return _axes_mask(grid, preds), {"kind": "half_space"}


def _cantor_intervals(a: float, b: float, ratios) -> tuple[list, float]:
    """Middle-interval removal on [a, b]; ratio_g is the removed length per
    interval at generation g as a fraction of (b - a).  Returns the surviving
    intervals and the exact measure of the truncated construction.
    """
    base = b - a
    intervals = [(a, b)]
    for g, rho in enumerate(ratios, start=1):
        if not 0 < rho < 1:
            raise ValueError("removal ratios must lie in (0, 1)")
        cut = rho * base
        nxt = []
        for (lo, hi) in intervals:
            mid = 0.5 * (lo + hi)
            left = (lo, mid - cut / 2.0)
            right = (mid + cut / 2.0, hi)
            if left[1] <= left[0] or right[1] <= right[0]:
                raise ValueError("degenerate spec: removal ratios exhaust the interval")
            nxt.extend([left, right])
        intervals = nxt
    total = sum(hi - lo for lo, hi in intervals)
    return intervals, total


def _gen_fat_cantor(params: dict, grid: Grid):
    a = float(params.get("a", 0.0))
    b = float(params.get("b", 1.0))
    gens = int(params.get("generations", 4))
    ratios = params.get("ratios")
    if ratios is None:
        ratios = [4.0 ** (-g) for g in range(1, gens + 1)]
    intervals, total = _cantor_intervals(a, b, ratios)
    per_axis_line = None

    def line(c):
        keep = np.zeros_like(c, dtype=bool)
        for lo, hi in intervals:
            keep |= (c >= lo - 1e-12) & (c <= hi + 1e-12)
        return keep

    if grid.n == 1:
        preds = [line]
        expected = total
    else:
        # product construction: the same Cantor set along every axis
        preds = [line] * grid.n
        expected = total ** grid.n
    meta = {"kind": "fat_cantor", "expected_measure": expected, "intervals": len(intervals)}
    return _axes_mask(grid, preds), meta


def _gen_fat_sierpinski_carpet(params: dict, grid: Grid):
    if grid.n != 2:
        raise ValueError("fat_sierpinski_carpet requires n = 2")
    a = float(params.get("a", 0.0))
    b = float(params.get("b", 1.0))
    gens = int(params.get("generations", 3))
    ratios = params.get("ratios")
    if ratios is None:
        ratios = [3.0 ** (-g) for g in range(1, gens + 1)]
    base = b - a
    mask = np.zeros(grid.dims, dtype=bool)
    i0, i1 = grid.axis_window(a, b, 0)
    j0, j1 = grid.axis_window(a, b, 1)
    mask[i0 : i1 + 1, j0 : j1 + 1] = True

    squares = [(a, a, base)]  # (x0, y0, side)
    removed = 0.0
    for g, rho in enumerate(ratios, start=1):
        if not 0 < rho <= 1.0 / 3.0 + 1e-12:
            raise ValueError("carpet removal ratios must lie in (0, 1/3]")
        punch = []
        nxt = []
        for (x0, y0, side) in squares:
            ps = rho * side
            cx, cy = x0 + side / 2.0, y0 + side / 2.0
            punch.append((cx - ps / 2.0, cy - ps / 2.0, ps))
            removed += ps * ps
            third = side / 3.0
            for ii in range(3):
                for jj in range(3):
                    if ii == 1 and jj == 1:
                        continue
                    nxt.append((x0 + ii * third, y0 + jj * third, third))
        for (px, py, ps) in punch:
            u0, u1 = grid.axis_window(px, px + ps, 0)
            v0, v1 = grid.axis_window(py, py + ps, 1)
            if u0 <= u1 and v0 <= v1:
                mask[u0 : u1 + 1, v0 : v1 + 1] = False
        squares = nxt
    expected = base * base - removed
    meta = {
        "kind": "fat_sierpinski_carpet",
        "expected_measure": expected,
        "generations": gens,
    }
    return mask, meta


def _gen_lipschitz_subgraph(params: dict, grid: Grid):
    if grid.n < 2:
        raise ValueError("lipschitz_subgraph requires n >= 2")
    samples = np.asarray(params.get("samples", [0.6, 0.4, 0.7, 0.5, 0.65]), dtype=float)
    lo = params.get("xlo", grid.origin[0])
    hi = params.get("xhi", grid.box_max[0])
    xs = grid.axis_centers(0)
    knots = np.linspace(lo, hi, samples.size)
    phi = np.interp(xs, knots, samples)
    ys = grid.axis_centers(1)
    sub = ys[None, :] <= phi[:, None] + 1e-12
    mask = np.zeros(grid.dims, dtype=bool)
    if grid.n == 2:
        mask |= sub
    else:
        mask |= sub[:, :, None]
    return mask, {"kind": "lipschitz_subgraph"}


def _gen_union(params: dict, grid: Grid):
    specs = params.get("specs", [])
    if not specs:
        raise ValueError("degenerate spec: union of nothing")
    mask = np.zeros(grid.dims, dtype=bool)
    expected = 0.0
    for sub in specs:
        sub_spec = sub if isinstance(sub, SetSpec) else SetSpec(sub["kind"], sub.get("params", {}))
        m, meta = _GENERATORS[sub_spec.kind](sub_spec.params, grid)
        mask |= m
        expected += meta.get("expected_measure", 0.0)
    return mask, {"kind": "union", "expected_measure": expected}


_GENERATORS = {
    "box": _gen_box,
    "half_space": _gen_half_space,
    "fat_cantor": _gen_fat_cantor,
    "fat_sierpinski_carpet": _gen_fat_sierpinski_carpet,
    "lipschitz_subgraph": _gen_lipschitz_subgraph,
    "union": _gen_union,
}


# ---------------------------------------------------------------------------
# Regularity estimation
# ---------------------------------------------------------------------------


def _box_counts(mask: np.ndarray, w: int) -> np.ndarray:
    """Number of True cells of ``mask`` in the (2w+1)-window around each cell."""
    counts = mask.astype(np.float64)
    for ax in range(mask.ndim):
        c = np.cumsum(counts, axis=ax)
        c = np.concatenate([np.zeros_like(np.take(c, [0], axis=ax)), c], axis=ax)
        size = mask.shape[ax]
        idx_hi = np.minimum(np.arange(size) + w + 1, size)
        idx_lo = np.maximum(np.arange(size) - w, 0)
        counts = np.take(c, idx_hi, axis=ax) - np.take(c, idx_lo, axis=ax)
    return counts


def estimate_regularity(S: CellSet, radii=None) -> tuple[float, float, dict]:
    """Estimate (theta, delta) for the mask S.

    For each candidate delta (descending), theta(delta) is the max over
    sampled centers x in S and radii r <= delta/2 of |Q(x,r)| / |Q(x,r) ∩ S|,
    with both measures taken on the grid (clipped to the box, so the scan is
    not polluted by box truncation).  Returns the pair minimizing theta
    subject to delta >= 16h, preferring the largest such delta.
    """
    if not S:
        raise ValueError("cannot estimate regularity of an empty set")
    grid = S.grid
    h = grid.h
    if radii is None:
        radii = _default_radii(grid)
    radii = sorted(set(float(r) for r in radii if h <= r <= grid.rmax))
    if not radii:
        raise ValueError("no usable radii")

    stride = 1
    if S.count > _SCAN_CAP:
        stride = int(math.ceil((S.count / _SCAN_CAP) ** (1.0 / grid.n)))
    sample = np.zeros(grid.dims, dtype=bool)
    sample[tuple(slice(None, None, stride) for _ in range(grid.n))] = True
    sample &= S.mask
    centers_sampled = int(sample.sum())

    worst = []
    for r in radii:
        w = int(math.floor(r / h + 1e-9))
        s_counts = _box_counts(S.mask, w)
        ones = np.ones(grid.dims, dtype=bool)
        q_counts = _box_counts(ones, w)
        ratio = np.where(s_counts[sample] > 0, q_counts[sample] / np.maximum(s_counts[sample], 1), np.inf)
        worst.append(float(ratio.max()))

    deltas = [2.0 * r for r in radii]
    best_theta, best_delta = math.inf, None
    floor = 16.0 * h
    # theta(delta) = max over radii <= delta/2; it is nondecreasing in delta.
    run_max = -math.inf
    theta_of = []
    for i, r in enumerate(radii):
        run_max = max(run_max, worst[i])
        theta_of.append(run_max)
    for i in range(len(radii)):
        d = deltas[i]
        if d < floor:
            continue
        th = theta_of[i]
        if th < best_theta * (1.0 - 1e-12) or (
            th <= best_theta * (1.0 + 1e-12) and (best_delta is None or d > best_delta)
        ):
            best_theta, best_delta = th, d
    if best_delta is None:
        # all candidate deltas below the 16h floor: take the largest anyway
        best_theta, best_delta = theta_of[-1], deltas[-1]
    meta = {
        "centers_sampled": centers_sampled,
        "center_stride": stride,
        "radii": radii,
    }
    return float(best_theta), float(best_delta), meta


def theta_at(S: CellSet, delta: float) -> float:
    """Worst measure ratio max |Q(x,r)| / |Q(x,r) ∩ S| over sampled centers
    x in S and radii r <= delta/2 (grid-clipped measures on both sides)."""
    if not S:
        raise ValueError("empty set")
    grid = S.grid
    h = grid.h
    radii = [r for r in _default_radii(grid) if r <= delta / 2 + 1e-12] or [h]
    stride = 1
    if S.count > _SCAN_CAP:
        stride = int(math.ceil((S.count / _SCAN_CAP) ** (1.0 / grid.n)))
    sample = np.zeros(grid.dims, dtype=bool)
    sample[tuple(slice(None, None, stride) for _ in range(grid.n))] = True
    sample &= S.mask
    worst = 1.0
    ones = np.ones(grid.dims, dtype=bool)
    for r in radii:
        w = int(math.floor(r / h + 1e-9))
        s_counts = _box_counts(S.mask, w)[sample]
        q_counts = _box_counts(ones, w)[sample]
        worst = max(worst, float((q_counts / np.maximum(s_counts, 1)).max()))
    return worst


def _default_radii(grid: Grid) -> list[float]:
    h = grid.h
    out = []
    r = h
    while r <= grid.rmax + 1e-12:
        out.append(r)
        r *= 2.0 ** 0.5
    return out


def nearest_point(S: RegularSet, x) -> np.ndarray:
    """Center of the S cell nearest to x in the uniform norm.

    Ties break to the lexicographically smallest cell multi-index.
    """
    flat = S.nearest_cell(x)
    return S.grid.centers_of(np.asarray([flat]))[0]
