import math

import numpy as np
import pytest

from localext.grid import CellSet, Cube, Grid, GridFunction
from localext.regular_set import RegularSet, SetSpec, generate_set
from localext.approx import normalized_local_approx
from localext.functionals import RadiusLadder, compute_fieldset
from localext.tables import LocalApproxEngine


@pytest.mark.parametrize("n,k", [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2)])
def test_fields_match_per_cube_oracle(n, k):
    rng = np.random.default_rng(42 + 10 * n + k)
    dims = (160,) if n == 1 else (48, 48)
    grid = Grid(dims, (-1.0,) * n, 2.0 / dims[0])
    mask = rng.random(dims) < 0.6
    mask.ravel()[rng.integers(0, mask.size, 10)] = True
    S = RegularSet(CellSet(grid, mask), 2.0, 0.5)
    f = GridFunction(grid, rng.normal(size=dims))
    ladder = RadiusLadder(np.asarray([grid.h, 4 * grid.h, 10.5 * grid.h]))
    fieldset = compute_fieldset(grid, mask, f, k, (1, 2, math.inf), ladder)
    cells = np.argwhere(np.ones(dims, dtype=bool))
    sample = cells[rng.choice(len(cells), size=12, replace=False)]
    for it, t in enumerate(fieldset.ts):
        for idx in sample:
            x = grid.cell_center(tuple(idx))
            Q = Cube(tuple(x), float(t))
            for u in (1, 2, math.inf):
                want = normalized_local_approx(f, Q, S, k, u, mode="fast")
                got = fieldset.E[u][(it,) + tuple(idx)]
                assert got == pytest.approx(want, rel=1e-6, abs=1e-6), (t, idx, u)


def test_fields_whole_box_domain():
    rng = np.random.default_rng(5)
    grid = Grid((100,), (0.0,), 0.01)
    f = GridFunction(grid, rng.normal(size=100).cumsum())
    ladder = RadiusLadder(np.asarray([grid.h, 7.3 * grid.h]))
    fieldset = compute_fieldset(grid, None, f, 2, (2,), ladder)
    for it, t in enumerate(fieldset.ts):
        for i in (3, 50, 97):
            Q = Cube((grid.cell_center((i,))[0],), float(t))
            want = normalized_local_approx(f, Q, None, 2, 2)
            assert fieldset.E[2][it, i] == pytest.approx(want, rel=1e-8, abs=1e-12)


def test_strided_fields_interpolate_sublattice():
    rng = np.random.default_rng(11)
    grid = Grid((128,), (0.0,), 1 / 128)
    mask = np.ones(128, dtype=bool)
    f = GridFunction(grid, np.sin(3 * grid.axis_centers(0)) + 0.1 * rng.normal(size=128))
    t = 24.0 * grid.h
    ladder = RadiusLadder(np.asarray([t]))
    engine = LocalApproxEngine(grid, mask, 2)
    raw = engine.fields({"f": f.values}, (1,), ladder.values, exact_tmax=8 * grid.h, stride_factor=8)
    stride = 2 ** round(math.log2(t / (8 * grid.h)))
    vals = raw[("f", 1)][0]
    # exact at the evaluated sublattice, linear in between
    for i in range(0, 128 - stride, stride):
        Q = Cube((grid.cell_center((i,))[0],), float(t))
        want, _ = _unnormalized_l1(f, Q, grid, mask)
        assert vals[i] == pytest.approx(want, rel=1e-8, abs=1e-12)
        mid = vals[i : i + stride + 1]
        assert np.all(mid >= min(mid[0], mid[-1]) - 1e-12)
        assert np.all(mid <= max(mid[0], mid[-1]) + 1e-12)


def _unnormalized_l1(f, Q, grid, mask):
    from localext.grid import cube_cells, lu_norm
    from localext.approx import projector

    A = CellSet(grid, cube_cells(grid, Q).mask & mask)
    p = projector(f, A, 2)
    pts = A.centers()
    resid = f.restrict(A) - p(pts)
    return float(np.abs(resid).sum() * grid.h ** grid.n), p


def test_k0_fields_are_norms():
    rng = np.random.default_rng(2)
    grid = Grid((64,), (0.0,), 1 / 64)
    mask = rng.random(64) < 0.7
    mask[10] = True
    f = GridFunction(grid, rng.normal(size=64))
    ladder = RadiusLadder(np.asarray([5.2 * grid.h]))
    fieldset = compute_fieldset(grid, mask, f, 0, (1, 2, math.inf), ladder)
    S = RegularSet(CellSet(grid, mask), 1.0, 1.0)
    for i in (7, 30, 60):
        # the fieldset works on the realized window radius floor(t/h) h
        Q = Cube((grid.cell_center((i,))[0],), float(fieldset.ts[0]))
        for u in (1, 2, math.inf):
            want = normalized_local_approx(f, Q, S, 0, u)
            assert fieldset.E[u][0, i] == pytest.approx(want, rel=1e-9, abs=1e-12)
