"""Local polynomial best approximation and the near-best linear projector.

E_k(f; A)_{L_u} is the distance from f to polynomials of degree <= k-1 in
L_u over a cell set A.  The workhorse is the discrete L2 least-squares fit
(a linear projector, exact for u = 2 and near-best for the other norms); an
LP formulation provides exact values for u in {1, inf} on small sets so the
near-best ratio can be measured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .grid import CellSet, Cube, Grid, GridFunction, cube_cells, lu_norm
from .regular_set import RegularSet
from .whitney import WhitneyDecomposition
from .quasicube import QuasiCubeFamily

_RCOND = 1e-10


@lru_cache(maxsize=None)
def multi_indices(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices |beta| <= k-1 in n variables, graded lexicographic."""
    if k <= 0:
        return ()
    out = []
    for deg in range(k):
        level = []

        def rec(prefix, remaining, axes_left):
            if axes_left == 1:
                level.append(prefix + (remaining,))
                return
            for v in range(remaining, -1, -1):
                rec(prefix + (v,), remaining - v, axes_left - 1)

        rec((), deg, n)
        out.extend(sorted(level, reverse=True))
    return tuple(out)


def space_dim(n: int, k: int) -> int:
    return len(multi_indices(n, k))


@dataclass
class Polynomial:
    """Polynomial of degree <= k-1 in the shifted-scaled monomial basis.

    p(x) = sum_beta coeffs[beta] * prod_i ((x_i - center_i) / scale)^beta_i.
    """

    n: int
    k: int
    center: tuple[float, ...]
    scale: float
    coeffs: np.ndarray
    deficient: bool = False

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (space_dim(self.n, self.k),):
            raise ValueError("coefficient count does not match basis size")

    @classmethod
    def zero(cls, n: int, k: int, center=None, scale: float = 1.0, deficient: bool = False):
        center = tuple([0.0] * n) if center is None else tuple(center)
        return cls(n, k, center, scale, np.zeros(space_dim(n, k)), deficient)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        B = basis_matrix(pts, self.n, self.k, self.center, self.scale)
        return B @ self.coeffs

    def eval_separable(self, axes_coords: list[np.ndarray]) -> np.ndarray:
        """Evaluate on a tensor grid given 1-D coordinates per axis."""
        mis = multi_indices(self.n, self.k)
        kmax = self.k
        pows = []
        for ax in range(self.n):
            t = (axes_coords[ax] - self.center[ax]) / self.scale
            pows.append(np.vander(t, kmax, increasing=True))
        if self.n == 1:
            sel = pows[0][:, [m[0] for m in mis]]
            return sel @ self.coeffs
        if self.n == 2:
            px = pows[0][:, [m[0] for m in mis]]
            py = pows[1][:, [m[1] for m in mis]]
            return np.einsum("xm,ym,m->xy", px, py, self.coeffs)
        px = pows[0][:, [m[0] for m in mis]]
        py = pows[1][:, [m[1] for m in mis]]
        pz = pows[2][:, [m[2] for m in mis]]
        return np.einsum("xm,ym,zm,m->xyz", px, py, pz, self.coeffs)

    def scaled(self, a: float) -> "Polynomial":
        return Polynomial(self.n, self.k, self.center, self.scale, a * self.coeffs, self.deficient)

    def plus(self, other: "Polynomial") -> "Polynomial":
        if (other.center, other.scale, other.k) != (self.center, self.scale, self.k):
            raise ValueError("polynomials use different bases")
        return Polynomial(self.n, self.k, self.center, self.scale, self.coeffs + other.coeffs)


def basis_matrix(pts: np.ndarray, n: int, k: int, center, scale: float) -> np.ndarray:
    mis = multi_indices(n, k)
    t = (pts - np.asarray(center)) / scale
    cols = [np.prod([t[:, i] ** beta[i] for i in range(n)], axis=0) for beta in mis]
    return np.stack(cols, axis=1) if cols else np.zeros((len(pts), 0))


def _bounding(center_pts: np.ndarray, h: float):
    lo = center_pts.min(axis=0)
    hi = center_pts.max(axis=0)
    center = (lo + hi) / 2.0
    scale = max(float((hi - lo).max()) / 2.0 + h / 2.0, h / 2.0)
    return tuple(center), scale


@dataclass
class FitFactors:
    """Reusable SVD factors of a least-squares fit on a fixed cell set."""

    cells: np.ndarray  # flat cell indices
    center: tuple
    scale: float
    U: np.ndarray
    sinv: np.ndarray
    Vt: np.ndarray
    deficient: bool
    enriched: bool = False

    def coeffs_for(self, values_flat: np.ndarray) -> np.ndarray:
        f = values_flat[self.cells]
        return self.Vt.T @ (self.sinv * (self.U.T @ f))


def fit_factors(
    grid: Grid, cells: np.ndarray, k: int, center=None, scale: Optional[float] = None
) -> FitFactors:
    pts = grid.centers_of(cells)
    if center is None or scale is None:
        center, scale = _bounding(pts, grid.h)
    B = basis_matrix(pts, grid.n, k, center, scale)
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    cut = s > _RCOND * (s[0] if s.size else 1.0)
    rank = int(cut.sum())
    sinv = np.where(cut, 1.0 / np.where(cut, s, 1.0), 0.0)
    deficient = rank < space_dim(grid.n, k)
    return FitFactors(cells, center, scale, U[:, :], sinv, Vt, deficient)


def projector(f: GridFunction, A: CellSet, k: int) -> Polynomial:
    """Discrete L2(A) least-squares polynomial of degree <= k-1.

    Linear in f, idempotent on polynomials; rank-deficient sets drop the
    unresolved directions (minimal-norm coefficients) and carry a flag.
    """
    if k < 1:
        raise ValueError("projector requires k >= 1 (k = 0 approximates by zero)")
    cells = A.flat_indices()
    if cells.size == 0:
        return Polynomial.zero(A.grid.n, k, deficient=True)
    fac = fit_factors(A.grid, cells, k)
    coeffs = fac.coeffs_for(f.values.ravel())
    return Polynomial(A.grid.n, k, fac.center, fac.scale, coeffs, fac.deficient)


def _lp_best(pts, fvals, n, k, u, center, scale, weight):
    """Exact best approximation via linear programming (u in {1, inf})."""
    B = basis_matrix(pts, n, k, center, scale)
    m = B.shape[1]
    npts = len(fvals)
    if math.isinf(u):
        A_ub = sp.vstack(
            [
                sp.hstack([sp.csr_matrix(B), -sp.csr_matrix(np.ones((npts, 1)))]),
                sp.hstack([sp.csr_matrix(-B), -sp.csr_matrix(np.ones((npts, 1)))]),
            ]
        ).tocsc()
        b_ub = np.concatenate([fvals, -fvals])
        c = np.zeros(m + 1)
        c[-1] = 1.0
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * (m + 1), method="highs")
        if res.status != 0:
            raise RuntimeError(f"LP failed: {res.message}")
        coeffs = res.x[:m]
        value = float(res.fun)
    else:
        eye = sp.identity(npts, format="csr")
        A_ub = sp.vstack(
            [
                sp.hstack([sp.csr_matrix(B), -eye]),
                sp.hstack([sp.csr_matrix(-B), -eye]),
            ]
        ).tocsc()
        b_ub = np.concatenate([fvals, -fvals])
        c = np.concatenate([np.zeros(m), np.full(npts, weight)])
        bounds = [(None, None)] * m + [(0, None)] * npts
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status != 0:
            raise RuntimeError(f"LP failed: {res.message}")
        coeffs = res.x[:m]
        value = float(res.fun)
    return value, coeffs


def local_best_approx(
    f: GridFunction, A: CellSet, k: int, u: float, mode: str = "fast"
) -> tuple[float, Polynomial]:
    """E_k(f; A)_{L_u} together with the approximating polynomial.

    u = 2 is exact via the projector.  For u in {1, inf}, ``fast`` returns
    the near-best projector residual, ``exact`` solves the LP (small A only).
    Other u get the fast mode.
    """
    grid = A.grid
    if k == 0:
        return lu_norm(f, A, u), Polynomial.zero(grid.n, 1)
    cells = A.flat_indices()
    if cells.size == 0:
        return 0.0, Polynomial.zero(grid.n, k, deficient=True)
    if mode == "exact" and u != 2 and (u == 1 or math.isinf(u)):
        if cells.size > 20000:
            raise ValueError("exact LP mode is meant for small cell sets")
        pts = grid.centers_of(cells)
        center, scale = _bounding(pts, grid.h)
        weight = grid.h ** grid.n
        value, coeffs = _lp_best(pts, f.values.ravel()[cells], grid.n, k, u, center, scale, weight)
        return value, Polynomial(grid.n, k, center, scale, coeffs)
    poly = projector(f, A, k)
    resid = GridFunction(grid, f.values - _poly_on_grid(poly, grid))
    return lu_norm(resid, A, u), poly


def _poly_on_grid(poly: Polynomial, grid: Grid) -> np.ndarray:
    axes = [grid.axis_centers(i) for i in range(grid.n)]
    return np.asarray(poly.eval_separable(axes))


def normalized_local_approx(
    f: GridFunction,
    Q: Cube,
    S: Optional[RegularSet],
    k: int,
    u: float,
    mode: str = "fast",
) -> float:
    """|Q|^(-1/u) E_k(f; Q ∩ S)_{L_u}, with |Q| the full cube volume."""
    grid = f.grid
    A = cube_cells(grid, Q)
    if S is not None:
        A = A & S.cells
    if not A:
        return 0.0
    value, _ = local_best_approx(f, A, k, u, mode=mode)
    if math.isinf(u):
        return value
    return value * Q.volume ** (-1.0 / u)


class ProjectorMap:
    """Per-cube polynomials P_Q (zero for cubes with diam > delta_S)."""

    def __init__(self, W: WhitneyDecomposition, k: int, polys: dict, deficient_rows, enriched_rows):
        self.W = W
        self.k = int(k)
        self.polys = polys  # row -> Polynomial (only small rows present)
        self.deficient_rows = list(deficient_rows)
        self.enriched_rows = list(enriched_rows)

    def poly(self, row: int) -> Optional[Polynomial]:
        return self.polys.get(int(row))

    @property
    def deficiency_count(self) -> int:
        return len(self.deficient_rows)


class FitTable:
    """Cached per-cube fit factors for one (Whitney family, H family, k).

    The factors depend only on the cell sets, so repeated extensions of
    different functions reuse them.  Patches that cannot resolve the full
    polynomial space are enlarged (doubling windows around the anchor,
    intersected with S) until they do or a cap is reached; cubes still
    deficient carry reduced bases and a flag.
    """

    def __init__(self, S: RegularSet, W: WhitneyDecomposition, H: QuasiCubeFamily, k: int):
        self.S = S
        self.W = W
        self.H = H
        self.k = int(k)
        self.factors: dict[int, FitFactors] = {}
        self._build()

    def _build(self):
        grid = self.W.grid
        h = grid.h
        m = space_dim(grid.n, self.k)
        smask = self.S.cells.mask
        anchors_multi = np.stack(np.unravel_index(self.H.anchors, grid.dims), axis=1)
        cap = max(4.0 * self.S.delta, 64.0 * h)
        for pos, row in enumerate(self.H.small_rows):
            cells = self.H.cells_of[pos]
            fac = None
            if cells.size >= m:
                fac = fit_factors(grid, cells, self.k)
                if not fac.deficient:
                    self.factors[int(row)] = fac
                    continue
            # enrich: grow a window around the anchor until full rank
            a = anchors_multi[pos]
            rho = max(self.H.epsilon * float(self.W.radii[row]), self.k * h)
            enriched = None
            while rho <= cap:
                w = int(math.floor(rho / h + 1e-9))
                sl = tuple(
                    slice(max(0, a[ax] - w), min(grid.dims[ax], a[ax] + w + 1))
                    for ax in range(grid.n)
                )
                local = np.argwhere(smask[sl])
                if local.shape[0] >= m:
                    for ax in range(grid.n):
                        local[:, ax] += sl[ax].start
                    cand = np.ravel_multi_index(local.T, grid.dims).astype(np.int64)
                    fac2 = fit_factors(grid, cand, self.k)
                    if not fac2.deficient:
                        fac2.enriched = True
                        enriched = fac2
                        break
                rho *= 2.0
            if enriched is not None:
                self.factors[int(row)] = enriched
            else:
                fac = fac if fac is not None else fit_factors(grid, cells, self.k) if cells.size else None
                if fac is None:
                    fac = FitFactors(
                        cells,
                        tuple(grid.centers_of(np.asarray([self.H.anchors[pos]]))[0]),
                        h,
                        np.zeros((0, 0)),
                        np.zeros(0),
                        np.zeros((0, m)),
                        True,
                    )
                self.factors[int(row)] = fac

    @property
    def deficient_rows(self):
        return [r for r, f in self.factors.items() if f.deficient]

    @property
    def enriched_rows(self):
        return [r for r, f in self.factors.items() if f.enriched]

    def assign(self, f: GridFunction) -> ProjectorMap:
        flat = f.values.ravel()
        polys = {}
        for row, fac in self.factors.items():
            if fac.U.size == 0:
                polys[row] = Polynomial.zero(self.W.grid.n, self.k, fac.center, fac.scale, True)
                continue
            coeffs = fac.coeffs_for(flat)
            polys[row] = Polynomial(
                self.W.grid.n, self.k, fac.center, fac.scale, coeffs, fac.deficient
            )
        return ProjectorMap(self.W, self.k, polys, self.deficient_rows, self.enriched_rows)


def assign_PQ(
    f: GridFunction,
    W: WhitneyDecomposition,
    H: QuasiCubeFamily,
    k: int,
    table: Optional[FitTable] = None,
) -> ProjectorMap:
    """P_Q = least-squares fit of f on H_Q for small cubes, zero otherwise."""
    table = table or FitTable(H.S, W, H, k)
    return table.assign(f)
