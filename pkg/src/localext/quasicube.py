"""Reflected quasi-cubes: per Whitney cube, a nearby patch of S.

Each Whitney cube Q with diam Q <= delta_S gets an anchor a_Q (nearest S
cell center to x_Q, lexicographic ties) and the set

    H_Q = (Q(a_Q, eps r_Q) ∩ S) \\ union{ Q(a_K, eps r_K) : K in A_Q },

    A_Q = { K : Q(a_K, eps r_K) ∩ Q(a_Q, eps r_Q) != empty, r_K <= eps r_Q }.

Rasterization: patches keep cells whose centers lie in the closed cube (the
package-wide convention).  Cubes whose eps-patch is below grid scale
(eps r_K < h/2) subtract nothing -- their own patch is a single anchor cell
and removing single cells would empty the patches of every tiny cube -- so
the disjointness mechanism of the construction is exact among grid-visible
cubes and is asserted there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import CellSet, Grid
from .regular_set import RegularSet
from .whitney import WhitneyDecomposition, _UNIT


def default_epsilon(theta: float, n: int, N: int = 1) -> float:
    """Worst-case patch ratio eps = (2 C1 theta)^(-1/n) with C1 = N 12^n."""
    if theta < 1 or N < 1:
        raise ValueError("need theta >= 1 and N >= 1")
    c1 = N * 12 ** n
    return min(1.0, (2.0 * c1 * theta) ** (-1.0 / n))


class QuasiCubeFamily:
    """The map Q -> H_Q with its measured constants.

    ``small`` lists rows with diam <= delta_S (all others have H_Q empty by
    definition).  ``cells_of`` gives the flat cell indices of H_Q per small
    row; ``anchors`` the flat index of a_Q.  gamma1 = max |Q| / |H_Q| over
    small rows, gamma2 = max covering multiplicity over S cells.
    """

    def __init__(
        self,
        S: RegularSet,
        W: WhitneyDecomposition,
        epsilon: float,
        small_rows: np.ndarray,
        anchors: np.ndarray,
        cells_of: list,
        subtracted_pairs: int,
    ):
        self.S = S
        self.W = W
        self.epsilon = float(epsilon)
        self.small_rows = small_rows
        self.anchors = anchors  # flat S-cell index per small row
        self.cells_of = cells_of  # list of int arrays, aligned with small_rows
        self.subtracted_pairs = subtracted_pairs
        self._row_pos = {int(r): i for i, r in enumerate(small_rows)}
        grid = W.grid
        hn = grid.h ** grid.n
        vols = (W.diams[small_rows]) ** grid.n
        counts = np.array([c.size for c in cells_of], dtype=float)
        with np.errstate(divide="ignore"):
            ratios = np.where(counts > 0, vols / (counts * hn), np.inf)
        self.gamma1 = float(ratios.max()) if len(ratios) else 0.0
        overlap = np.zeros(grid.ncells, dtype=np.int32)
        for c in cells_of:
            overlap[c] += 1
        self.gamma2 = int(overlap.max()) if overlap.size else 0
        self._overlap = overlap

    @property
    def grid(self) -> Grid:
        return self.W.grid

    def has_row(self, row: int) -> bool:
        return int(row) in self._row_pos

    def cells(self, row: int) -> np.ndarray:
        """Flat indices of H_Q for a Whitney row (empty for large cubes)."""
        pos = self._row_pos.get(int(row))
        if pos is None:
            return np.zeros(0, dtype=np.int64)
        return self.cells_of[pos]

    def anchor(self, row: int) -> Optional[int]:
        pos = self._row_pos.get(int(row))
        return None if pos is None else int(self.anchors[pos])

    def overlap_field(self) -> np.ndarray:
        return self._overlap.reshape(self.grid.dims)

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "cubes_total": int(len(self.W)),
            "cubes_with_H": int(sum(1 for c in self.cells_of if c.size)),
        }


def build_quasicubes(
    S: RegularSet,
    W: WhitneyDecomposition,
    epsilon: float,
    delta: Optional[float] = None,
) -> QuasiCubeFamily:
    """Construct the quasi-cube family at a given patch ratio epsilon."""
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    grid = W.grid
    h = grid.h
    n = grid.n
    delta = S.delta if delta is None else float(delta)

    diams = W.diams
    small = np.flatnonzero(diams <= delta * (1.0 + 1e-12))
    if small.size == 0:
        return QuasiCubeFamily(S, W, epsilon, small, np.zeros(0, np.int64), [], 0)

    radii = W.radii
    centers = W.centers
    max_anchor_dist = 0.0
    for row in small:
        if W.levels[row] >= 0:
            max_anchor_dist = max(max_anchor_dist, 4.5 * float(diams[row]))
    if max_anchor_dist > 0:
        S.prepare_anchors(max_anchor_dist + h)

    anchors = np.empty(small.size, dtype=np.int64)
    for i, row in enumerate(small):
        anchors[i] = _anchor_of(S, W, int(row))
    anchor_multi = np.stack(np.unravel_index(anchors, grid.dims), axis=1)

    # group small rows by level for the A_Q scans
    lev_small = W.levels[small]
    by_level = {}
    for i, lev in enumerate(lev_small):
        by_level.setdefault(int(lev), []).append(i)
    for lev in by_level:
        by_level[lev] = np.asarray(by_level[lev])

    smask = S.cells.mask
    cells_of = []
    subtracted = 0
    eps = float(epsilon)
    for i, row in enumerate(small):
        r_q = float(radii[small[i]])
        a = anchor_multi[i]
        w_out = int(math.floor(eps * r_q / h + 1e-9))
        sl = tuple(
            slice(max(0, a[ax] - w_out), min(grid.dims[ax], a[ax] + w_out + 1))
            for ax in range(n)
        )
        block = smask[sl].copy()
        # subtract the patches of grid-visible smaller cubes (sub-grid cubes
        # subtract nothing, which keeps patches of tiny cubes nonempty)
        cap_r = eps * r_q
        for lev2, idxs in by_level.items():
            r_k = float(radii[small[idxs[0]]])
            if r_k > cap_r * (1.0 + 1e-12):
                continue
            if eps * r_k < h / 2:
                continue  # grid-invisible
            w_in = int(math.floor(eps * r_k / h + 1e-9))
            cand = idxs
            d = np.max(np.abs(anchor_multi[cand] - a), axis=1) * h
            near = cand[d <= eps * (r_k + r_q) + 1e-12]
            for jpos in near:
                if jpos == i:
                    continue
                b = anchor_multi[jpos]
                lo = np.maximum(b - w_in, [s.start for s in sl])
                hi = np.minimum(b + w_in, [s.stop - 1 for s in sl])
                if np.any(lo > hi):
                    continue
                sub_sl = tuple(
                    slice(lo[ax] - sl[ax].start, hi[ax] - sl[ax].start + 1)
                    for ax in range(n)
                )
                block[sub_sl] = False
                subtracted += 1
        local = np.argwhere(block)
        for ax in range(n):
            local[:, ax] += sl[ax].start
        cells_of.append(np.ravel_multi_index(local.T, grid.dims).astype(np.int64))

    return QuasiCubeFamily(S, W, eps, small, anchors, cells_of, subtracted)


def _anchor_of(S: RegularSet, W: WhitneyDecomposition, row: int) -> int:
    grid = W.grid
    if W.levels[row] >= 0:
        c64 = W.centers64[row]
        q = tuple(int(c64[ax]) // (_UNIT // 2) for ax in range(grid.n))
        d = int(S._build_half_dist()[q])
        src = S._build_half_src(d)
        val = src[q]
        if val != np.iinfo(np.int64).max:
            return int(val)
    x = W.centers[row]
    return S.nearest_cell(x)


def auto_epsilon(
    S: RegularSet,
    W: WhitneyDecomposition,
    eps0: float = 0.25,
    gamma1_cap: Optional[float] = None,
    gamma2_cap: float = 200.0,
    max_halvings: int = 8,
    N: int = 1,
) -> tuple[float, QuasiCubeFamily]:
    """Largest practical epsilon whose family passes the measured gates.

    Tries eps0, eps0/2, ...; accepts when every small cube has a nonempty
    patch and the measured gamma constants respect the caps.  Falls back to
    the worst-case formula value if no candidate passes.
    """
    if not 0 < eps0 <= 1:
        raise ValueError("eps0 must lie in (0, 1]")
    grid = W.grid
    if gamma1_cap is None:
        gamma1_cap = 4.0 * (N * 12 ** grid.n) * S.theta ** 2
    diagnostics = []
    eps = eps0
    for _ in range(max_halvings + 1):
        fam = build_quasicubes(S, W, eps)
        ok_nonempty = all(c.size > 0 for c in fam.cells_of)
        ok = ok_nonempty and fam.gamma1 <= gamma1_cap and fam.gamma2 <= gamma2_cap
        diagnostics.append(
            {
                "epsilon": eps,
                "nonempty": ok_nonempty,
                "gamma1": fam.gamma1,
                "gamma2": fam.gamma2,
            }
        )
        if ok:
            return eps, fam
        eps /= 2.0
    eps_paper = default_epsilon(S.theta, grid.n, N=N)
    fam = build_quasicubes(S, W, eps_paper)
    if all(c.size > 0 for c in fam.cells_of):
        return eps_paper, fam
    raise RuntimeError(f"no epsilon candidate passed; diagnostics: {diagnostics}")
