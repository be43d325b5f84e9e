"""Norm-like functionals: sharp maximal functions, Hardy-Littlewood maximal
functions, moduli of continuity, packing moduli, and the intrinsic /
whole-space (semi)norms built from them.

Radii and shift magnitudes run over a geometric ladder t_j = h 2^(j/4)
capped at half the box diameter (or at the integral cap Delta); dt/t
integrals use the log-trapezoid rule on that ladder, sup-type functionals
take the ladder maximum.  Truncating the continuum ranges to the ladder only
shrinks suprema, so one-sided comparisons stay valid tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import CellSet, Cube, Grid, GridFunction, cube_cells, lu_norm, measure
from .regular_set import RegularSet
from .tables import LocalApproxEngine, normalize


@dataclass(frozen=True)
class SpaceParams:
    """Parameter vector (s, k, p, q, u) for the smoothness functionals."""

    s: float
    k: int
    p: float
    q: float
    u: float = 1.0

    def __post_init__(self):
        if self.s < 0 or self.k < 0:
            raise ValueError("need s >= 0 and k >= 0")
        if self.q <= 0 or self.u < 1 or self.p <= 0:
            raise ValueError("need q > 0, p > 0, u >= 1")

    def check_sharp(self):
        """Admissibility for the generalized sharp maximal function."""
        if math.isinf(self.q):
            if not self.s <= self.k:
                raise ValueError(f"inadmissible (s, k, q): need s <= k when q = inf, got s={self.s} k={self.k}")
        elif not self.s < self.k:
            raise ValueError(f"inadmissible (s, k, q): need s < k for finite q, got s={self.s} k={self.k}")

    def check_sobolev(self):
        if not (self.p > 1 and self.s == self.k and math.isinf(self.q) and self.u == 1):
            raise ValueError("Sobolev functional needs p > 1, s = k, q = inf, u = 1")

    def check_tl(self):
        if not (0 < self.s < self.k and 1 < self.p < math.inf and 1 <= self.q and self.u == 1):
            raise ValueError("Triebel-Lizorkin functional needs 0 < s < k, 1 < p < inf, q >= 1, u = 1")

    def check_besov(self):
        if not (0 < self.s < self.k and 1 <= self.u <= self.p):
            raise ValueError("Besov functional needs 0 < s < k and 1 <= u <= p")
        if self.q < 0.25:
            raise ValueError("q below 1/4 is not validated")


class RadiusLadder:
    """Geometric radius ladder t_j = h 2^(j/density), first value h."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.size == 0 or np.any(np.diff(values) <= 0):
            raise ValueError("ladder must be nonempty and strictly increasing")
        self.values = values

    @classmethod
    def for_grid(cls, grid: Grid, tmax: Optional[float] = None, density: int = 4) -> "RadiusLadder":
        h = grid.h
        tmax = grid.rmax if tmax is None else min(tmax, grid.rmax)
        vals = []
        j = 0
        while True:
            t = h * 2.0 ** (j / density)
            if t > tmax * (1 + 1e-12):
                break
            vals.append(t)
            j += 1
        if not vals:
            vals = [h]
        return cls(np.asarray(vals))

    def upto(self, cap: float) -> np.ndarray:
        return self.values[self.values <= cap * (1 + 1e-12)]

    @staticmethod
    def log_weights(ts: np.ndarray) -> np.ndarray:
        """Trapezoid weights for ∫ g(t) dt/t on the nodes ts."""
        ts = np.asarray(ts, dtype=float)
        if ts.size == 1:
            return np.asarray([math.log(2.0) / 4.0])
        L = np.log(ts)
        w = np.zeros_like(L)
        w[0] = (L[1] - L[0]) / 2.0
        w[-1] = (L[-1] - L[-2]) / 2.0
        if ts.size > 2:
            w[1:-1] = (L[2:] - L[:-2]) / 2.0
        return w


def ladder_integral(
    values: np.ndarray, ts: np.ndarray, s: float, q: float, axis: int = 0, cap: Optional[float] = None
):
    """(∫ (values / t^s)^q dt/t)^(1/q) on the ladder; sup when q = inf.

    ``cap`` fixes the upper integration limit exactly: the last panel is
    completed up to it with the last value held, so the effective range does
    not wobble with the node set.  The integrand is scaled by its maximum
    before the q-th power so that large q neither overflows nor underflows.
    """
    ts = np.asarray(ts, dtype=float)
    values = np.moveaxis(values, axis, 0)
    if cap is not None and cap > ts[-1] * (1 + 1e-12):
        ts = np.concatenate([ts, [cap]])
        values = np.concatenate([values, values[-1:]], axis=0)
    tgrid = ts.reshape((len(ts),) + (1,) * (values.ndim - 1))
    g = values / tgrid ** s
    gmax = g.max(axis=0)
    if math.isinf(q):
        return gmax
    w = RadiusLadder.log_weights(ts).reshape(tgrid.shape)
    safe = np.where(gmax > 0, gmax, 1.0)
    scaled = g / safe[None, ...]
    out = safe * np.sum(w * scaled ** q, axis=0) ** (1.0 / q)
    return np.where(gmax > 0, out, 0.0)


def lp_over_mask(field: np.ndarray, mask: Optional[np.ndarray], p: float, hn: float) -> float:
    vals = field[mask] if mask is not None else field.ravel()
    if vals.size == 0:
        return 0.0
    if math.isinf(p):
        return float(np.max(np.abs(vals)))
    return float((np.abs(vals) ** p).sum() * hn) ** (1.0 / p)


# ---------------------------------------------------------------------------
# Tables plumbing
# ---------------------------------------------------------------------------


def realized_radii(ladder: RadiusLadder, h: float) -> np.ndarray:
    """Snap ladder radii to the window radii the grid actually realizes.

    A cube Q(x, t) centered at a cell contains exactly the cells within
    W = floor(t/h) steps, i.e. it *is* Q(x, W h).  Working on the snapped,
    deduplicated radii makes every functional a function of the integer
    windows alone, so refining the ladder density only adds nodes and never
    moves existing ones.
    """
    W = np.floor(ladder.values / h + 1e-9).astype(int)
    W = np.unique(W[W >= 1])
    return W * h


class FieldSet:
    """Normalized local-approximation fields of one function on a ladder.

    ``E[u]`` has shape (nt, *dims) and holds the normalized form
    |Q(x,t)|^{-1/u} E_k(f; Q(x,t))_{L_u(domain)} at every cell center x.
    """

    def __init__(self, ts: np.ndarray, fields: dict, n: int):
        self.ts = np.asarray(ts, dtype=float)
        self.E = {u: normalize(arr, ts, n, u) for u, arr in fields.items()}

    def at_cells(self, u: float, mask=None) -> np.ndarray:
        arr = self.E[u]
        if mask is None:
            return arr.reshape(len(self.ts), -1)
        return arr[:, mask]


def compute_fieldset(
    grid: Grid,
    domain_mask: Optional[np.ndarray],
    f: GridFunction,
    k: int,
    us: tuple,
    ladder: RadiusLadder,
    exact_tmax: Optional[float] = None,
    stride_factor: int = 8,
    engine: Optional[LocalApproxEngine] = None,
) -> FieldSet:
    engine = engine or LocalApproxEngine(grid, domain_mask, k)
    ts = realized_radii(ladder, grid.h)
    raw = engine.fields({"f": f.values}, tuple(us), ts, exact_tmax, stride_factor)
    fields = {u: raw[("f", u)] for u in us}
    return FieldSet(ts, fields, grid.n)


# ---------------------------------------------------------------------------
# Maximal functions
# ---------------------------------------------------------------------------


def sharp_maximal(
    f: GridFunction,
    S: Optional[RegularSet],
    alpha: float,
    ladder: RadiusLadder,
    fieldset: Optional[FieldSet] = None,
    **kw,
) -> np.ndarray:
    """sup over ladder radii of r^(-alpha) |Q|^{-1} E_k(f; Q(·,r))_{L_1},
    with k the greatest integer strictly below alpha + 1."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    k = -math.floor(-alpha)
    grid = f.grid
    mask = S.cells.mask if S is not None else None
    fieldset = fieldset or compute_fieldset(grid, mask, f, k, (1,), ladder, **kw)
    vals = fieldset.E[1]
    ts = fieldset.ts
    g = vals / ts.reshape((len(ts),) + (1,) * grid.n) ** alpha
    return g.max(axis=0)


def generalized_sharp(
    f: GridFunction,
    S: Optional[RegularSet],
    v: SpaceParams,
    Delta: float,
    ladder: RadiusLadder,
    fieldset: Optional[FieldSet] = None,
    **kw,
) -> np.ndarray:
    """The (s, k, q, u) sharp maximal function truncated at Delta."""
    v.check_sharp()
    grid = f.grid
    mask = S.cells.mask if S is not None else None
    fieldset = fieldset or compute_fieldset(grid, mask, f, v.k, (v.u,), ladder, **kw)
    keep = fieldset.ts <= Delta * (1 + 1e-12)
    vals = fieldset.E[v.u][keep]
    ts = fieldset.ts[keep]
    cap = Delta if math.isfinite(Delta) else None
    return ladder_integral(vals, ts, v.s, v.q, axis=0, cap=cap)


def hl_maximal(g: GridFunction, u: float, ladder: RadiusLadder) -> np.ndarray:
    """Hardy-Littlewood maximal function M_u g = (M |g|^u)^(1/u) over the
    ladder radii, with cube averages over the grid-clipped windows and the
    function extended by zero outside the box."""
    grid = g.grid
    h = grid.h
    power = np.abs(g.values) ** (u if not math.isinf(u) else 1)
    if math.isinf(u):
        raise ValueError("u must be finite for the maximal average")
    from .tables import _box_sum, _prefix

    pref = _prefix(power)
    best = np.zeros(grid.dims)
    for t in ladder.values:
        W = int(math.floor(t / h + 1e-9))
        sums = _box_sum(pref, W)
        avg = sums * h ** grid.n / ((2 * W + 1) * h) ** grid.n
        np.maximum(best, avg, out=best)
    return best ** (1.0 / u)


def zero_extend(f: GridFunction, S: RegularSet) -> GridFunction:
    """Extension by zero off S."""
    return GridFunction(f.grid, np.where(S.cells.mask, f.values, 0.0))


# ---------------------------------------------------------------------------
# Moduli of continuity
# ---------------------------------------------------------------------------


def _directions(n: int) -> list[tuple[int, ...]]:
    dirs = []
    for off in np.ndindex(*([3] * n)):
        d = tuple(o - 1 for o in off)
        if all(v == 0 for v in d):
            continue
        first = next(v for v in d if v != 0)
        if first < 0:
            continue
        dirs.append(d)
    return dirs


def modulus_continuity(
    f: GridFunction,
    k: int,
    p: float,
    t: float,
    ladder: Optional[RadiusLadder] = None,
    restrict: Optional[np.ndarray] = None,
) -> float:
    """omega_k(f; t)_{L_p}: max over lattice shifts of magnitude <= t of the
    L_p norm of the k-th finite difference, over cells where all k+1 sample
    points stay inside the box."""
    grid = f.grid
    h = grid.h
    if t < h * (1 - 1e-12):
        raise ValueError("t must be at least one cell width")
    steps = sorted(
        {
            int(math.floor(tt / h + 1e-9))
            for tt in (ladder.upto(t) if ladder is not None else [t])
        }
        | {int(math.floor(t / h + 1e-9))}
    )
    steps = [s for s in steps if s >= 1]
    signs = np.array([math.comb(k, j) * (-1) ** (k - j) for j in range(k + 1)])
    best = 0.0
    vals = f.values
    hn = h ** grid.n
    for d in _directions(grid.n):
        for s in steps:
            shift = tuple(s * di for di in d)
            sl_shape = []
            ok = True
            for ax in range(grid.n):
                total = abs(shift[ax]) * k
                if total >= grid.dims[ax]:
                    ok = False
                    break
                sl_shape.append(grid.dims[ax] - total)
            if not ok:
                continue
            acc = np.zeros(sl_shape)
            base_mask = None
            for j in range(k + 1):
                sl = []
                for ax in range(grid.n):
                    start = shift[ax] * j - min(0, shift[ax] * k)
                    sl.append(slice(start, start + sl_shape[ax]))
                acc = acc + signs[j] * vals[tuple(sl)]
            if restrict is not None:
                sl0 = []
                for ax in range(grid.n):
                    start = -min(0, shift[ax] * k)
                    sl0.append(slice(start, start + sl_shape[ax]))
                sel = restrict[tuple(sl0)]
                acc = acc[sel]
            flat = np.abs(acc).ravel()
            if flat.size == 0:
                continue
            if math.isinf(p):
                cand = float(flat.max())
            else:
                cand = float((flat ** p).sum() * hn) ** (1.0 / p)
            best = max(best, cand)
    return best


# ---------------------------------------------------------------------------
# Packing moduli
# ---------------------------------------------------------------------------


def kp_modulus(
    f: GridFunction,
    S: Optional[RegularSet],
    k: int,
    p: float,
    u: float,
    t: float,
    ladder: RadiusLadder,
    fieldset: Optional[FieldSet] = None,
    need_packing: bool = True,
    **kw,
) -> dict:
    """Packing and integral estimators of the (k,p)-modulus at diameter t.

    packing: greedy maximal packing of equal cubes of diameter t centered in
    the domain, scored by |Q ∩ S| E_k(f; Q)^p_{L_u(S)} (a lower bound for the
    supremum over packings).  integral: || E_k(f; Q(·, t))_{L_u(S)} ||_{L_p}
    over the domain, the two-sided comparison quantity.
    """
    grid = f.grid
    h = grid.h
    if t < 4 * h * (1 - 1e-12):
        raise ValueError("t must be at least 4h")
    mask = S.cells.mask if S is not None else None
    fieldset = fieldset or compute_fieldset(
        grid, mask, f, k, (u,), ladder, **kw
    )
    hn = h ** grid.n
    packing = _greedy_packing(fieldset, mask, grid, k, p, u, t) if need_packing else None
    it = int(np.argmin(np.abs(fieldset.ts - t)))
    field_t = fieldset.E[u][it]
    integral = lp_over_mask(field_t, mask, p, hn)
    return {"packing": packing, "integral": integral, "t_used": float(fieldset.ts[it])}


def _nearest_t_index(ts: np.ndarray, t: float) -> int:
    return int(np.argmin(np.abs(np.log(ts) - math.log(t))))


def _greedy_packing(
    fieldset: FieldSet, mask: Optional[np.ndarray], grid: Grid, k: int, p: float, u: float, t: float
) -> float:
    """Greedy disjoint family of cubes with diameter t centered in the domain."""
    h = grid.h
    r = t / 2.0
    it = _nearest_t_index(fieldset.ts, r)
    Efield = fieldset.E[u][it]
    tr = fieldset.ts[it]
    W = int(math.floor(tr / h + 1e-9))
    from .tables import _box_sum, _prefix

    chi = mask.astype(float) if mask is not None else np.ones(grid.dims)
    counts = _box_sum(_prefix(chi), W)
    meas = counts * h ** grid.n
    if math.isinf(p):
        score = Efield.copy()
    else:
        score = meas * Efield ** p
    if mask is not None:
        score = np.where(mask, score, -np.inf)
    flat = score.ravel()
    order = np.argsort(-flat, kind="stable")
    blocked = np.zeros(grid.dims, dtype=bool)
    total = 0.0
    best_single = 0.0
    sep = 2 * W + 1  # centers closer than this share cells: cubes overlap
    dims = grid.dims
    taken = 0
    for pos in order:
        val = flat[pos]
        if not np.isfinite(val) or val <= 0:
            break
        idx = np.unravel_index(pos, dims)
        if blocked[idx]:
            continue
        taken += 1
        if math.isinf(p):
            best_single = max(best_single, float(val))
        else:
            total += float(val)
        sl = tuple(
            slice(max(0, idx[ax] - (sep - 1)), min(dims[ax], idx[ax] + sep)) for ax in range(grid.n)
        )
        blocked[sl] = True
    if math.isinf(p):
        return best_single
    return total ** (1.0 / p)


# ---------------------------------------------------------------------------
# Trace and whole-space norms
# ---------------------------------------------------------------------------


def trace_seminorms(
    f: GridFunction,
    S: RegularSet,
    params: SpaceParams,
    ladder: RadiusLadder,
    fieldset: Optional[FieldSet] = None,
    which: tuple = ("sobolev", "tl", "besov"),
    **kw,
) -> dict:
    """Intrinsic trace functionals of f on S (dict with the requested parts)."""
    grid = f.grid
    hn = grid.h ** grid.n
    mask = S.cells.mask
    us = {1.0}
    if "besov" in which:
        us.add(params.u)
    fieldset = fieldset or compute_fieldset(grid, mask, f, params.k, tuple(us), ladder, **kw)
    fz = zero_extend(f, S)
    lp = lp_over_mask(fz.values, mask, params.p, hn)
    out = {"lp": lp}
    ts = fieldset.ts
    if "sobolev" in which:
        sharp = (fieldset.E[1] / ts.reshape((len(ts),) + (1,) * grid.n) ** params.k).max(axis=0)
        out["sobolev"] = lp + lp_over_mask(sharp, mask, params.p, hn)
        out["sobolev_sharp"] = lp_over_mask(sharp, mask, params.p, hn)
    if "tl" in which:
        keep = ts <= 1.0 + 1e-12
        g = ladder_integral(fieldset.E[1][keep], ts[keep], params.s, params.q, axis=0, cap=1.0)
        out["tl"] = lp + lp_over_mask(g, mask, params.p, hn)
        out["tl_sharp"] = lp_over_mask(g, mask, params.p, hn)
    if "besov" in which:
        keep = ts <= 1.0 + 1e-12
        norms = np.array(
            [lp_over_mask(fieldset.E[params.u][i], mask, params.p, hn) for i in np.flatnonzero(keep)]
        )
        semi = float(ladder_integral(norms[:, None], ts[keep], params.s, params.q, axis=0, cap=1.0)[0])
        out["besov"] = lp + semi
        out["besov_semi"] = semi
    return out


def wholespace_norms(
    F: GridFunction,
    params: SpaceParams,
    ladder: RadiusLadder,
    fieldset: Optional[FieldSet] = None,
    which: tuple = ("calderon", "tl", "besov_modulus", "besov_localapprox"),
    **kw,
) -> dict:
    """Whole-space functionals of F over the computational box."""
    grid = F.grid
    hn = grid.h ** grid.n
    us = {1.0}
    if "besov_localapprox" in which:
        us.add(params.u)
    fieldset = fieldset or compute_fieldset(grid, None, F, params.k, tuple(us), ladder, **kw)
    lp = lp_over_mask(F.values, None, params.p, hn)
    out = {"lp": lp}
    ts = fieldset.ts
    if "calderon" in which:
        sharp = (fieldset.E[1] / ts.reshape((len(ts),) + (1,) * grid.n) ** params.k).max(axis=0)
        out["calderon"] = lp + lp_over_mask(sharp, None, params.p, hn)
        out["calderon_sharp"] = lp_over_mask(sharp, None, params.p, hn)
    if "tl" in which:
        keep = ts <= 1.0 + 1e-12
        g = ladder_integral(fieldset.E[1][keep], ts[keep], params.s, params.q, axis=0, cap=1.0)
        out["tl"] = lp + lp_over_mask(g, None, params.p, hn)
        out["tl_sharp"] = lp_over_mask(g, None, params.p, hn)
    if "besov_modulus" in which:
        keep = ts <= 1.0 + 1e-12
        omegas = np.array(
            [modulus_continuity(F, params.k, params.p, tt, ladder) for tt in ts[keep]]
        )
        semi = float(ladder_integral(omegas[:, None], ts[keep], params.s, params.q, axis=0, cap=1.0)[0])
        out["besov_modulus"] = lp + semi
        out["besov_modulus_semi"] = semi
    if "besov_localapprox" in which:
        keep = ts <= 1.0 + 1e-12
        norms = np.array(
            [lp_over_mask(fieldset.E[params.u][i], None, params.p, hn) for i in np.flatnonzero(keep)]
        )
        semi = float(ladder_integral(norms[:, None], ts[keep], params.s, params.q, axis=0, cap=1.0)[0])
        out["besov_localapprox"] = lp + semi
        out["besov_localapprox_semi"] = semi
    return out
