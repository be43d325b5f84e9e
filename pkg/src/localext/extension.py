"""The Whitney-type extension operator: identity on S, bump-blended
least-squares polynomials off S.

The operator object depends only on the set and the polynomial order (its
fields are the set, the cube family, the partition of unity, the quasi-cube
family, and k) -- never on any smoothness/integrability indices.  Per
function, each small cube contributes its fitted polynomial weighted by its
bump; cubes larger than delta_S contribute zero, so the extension has
compact support near S.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .approx import FitTable, Polynomial, ProjectorMap, assign_PQ
from .grid import CellSet, Cube, Grid, GridFunction, cube_cells, lu_norm, measure
from .quasicube import QuasiCubeFamily, auto_epsilon
from .regular_set import RegularSet
from .whitney import PartitionOfUnity, WhitneyDecomposition, partition_of_unity, whitney_decompose


class ExtensionOperator:
    """Everything needed to extend functions from S at a fixed order k."""

    def __init__(
        self,
        S: RegularSet,
        W: WhitneyDecomposition,
        pou: PartitionOfUnity,
        H: QuasiCubeFamily,
        k: int,
    ):
        self.S = S
        self.W = W
        self.pou = pou
        self.H = H
        self.k = int(k)
        self.fit_table = FitTable(S, W, H, k)

    @property
    def grid(self) -> Grid:
        return self.S.grid

    def sidecar(self) -> dict:
        info = self.H.summary()
        info["deficiency_count"] = len(self.fit_table.deficient_rows)
        info["enriched_count"] = len(self.fit_table.enriched_rows)
        return info


def build_extension_operator(
    S: RegularSet,
    k: int,
    m: Optional[int] = None,
    eps0: float = 0.25,
    W: Optional[WhitneyDecomposition] = None,
    pou: Optional[PartitionOfUnity] = None,
    H: Optional[QuasiCubeFamily] = None,
) -> ExtensionOperator:
    W = W if W is not None else whitney_decompose(S)
    pou = pou if pou is not None else partition_of_unity(W, m if m is not None else max(k, 1))
    if H is None:
        _, H = auto_epsilon(S, W, eps0=eps0)
    return ExtensionOperator(S, W, pou, H, k)


def extend(f: GridFunction, op: ExtensionOperator, pmap: Optional[ProjectorMap] = None) -> GridFunction:
    """Evaluate the extension at every cell center of the box."""
    stacked = extend_many({"f": f}, op, {"f": pmap} if pmap else None)
    return stacked["f"]


def extend_many(
    fs: dict[str, GridFunction],
    op: ExtensionOperator,
    pmaps: Optional[dict[str, ProjectorMap]] = None,
) -> dict[str, GridFunction]:
    """Extend several functions in one sweep over the cube family."""
    grid = op.grid
    W = op.W
    pou = op.pou
    names = list(fs)
    if pmaps is None:
        pmaps = {name: op.fit_table.assign(fs[name]) for name in names}
    den = pou.den
    nums = {name: np.zeros(grid.dims) for name in names}
    blocks = pou.blocks
    axes_centers = [grid.axis_centers(i) for i in range(grid.n)]
    for row in range(len(W)):
        blk = blocks[row]
        if blk is None:
            continue
        any_poly = any(pmaps[name].poly(row) is not None for name in names)
        if not any_poly:
            continue
        slices, psi = blk
        local_axes = [axes_centers[i][slices[i]] for i in range(grid.n)]
        for name in names:
            poly = pmaps[name].poly(row)
            if poly is None:
                continue
            vals = poly.eval_separable(local_axes)
            nums[name][slices] += psi * vals
    out = {}
    comp = ~op.S.cells.mask
    for name in names:
        values = fs[name].values.copy()
        with np.errstate(invalid="ignore", divide="ignore"):
            blended = np.where(den > 0, nums[name] / np.where(den > 0, den, 1.0), 0.0)
        values[comp] = blended[comp]
        out[name] = GridFunction(grid, values)
    return out


def extend_norm_check(
    f: GridFunction, op: ExtensionOperator, K: Cube, u: float, tf: Optional[GridFunction] = None
) -> Optional[tuple[float, float]]:
    """(||tf||_{L_u(K)}, ||f||_{L_u(25K ∩ S)}); None when 25K leaves the box."""
    grid = op.grid
    big = K.scale(25.0)
    for ax in range(grid.n):
        if big.center[ax] - big.radius < grid.origin[ax] - 1e-12 or big.center[
            ax
        ] + big.radius > grid.box_max[ax] + 1e-12:
            return None
    tf = tf if tf is not None else extend(f, op)
    lhs = lu_norm(tf, cube_cells(grid, K), u)
    rhs = lu_norm(f, cube_cells(grid, big) & op.S.cells, u)
    return lhs, rhs
