import math

import numpy as np
import pytest

from localext.grid import CellSet, Cube, Grid, cube_cells
from localext.regular_set import RegularSet, SetSpec, generate_set
from localext.whitney import (
    PartitionOfUnity,
    distance_field,
    neighbors,
    partition_of_unity,
    whitney_decompose,
)


def make_point_set_1d():
    # S = one cell whose center is exactly 0, box [-8, 8]
    h = 1 / 64
    dims = 1024
    grid = Grid((dims,), (-8.0 - h / 2,), h)
    mask = np.zeros(dims, dtype=bool)
    idx = int(round((0.0 - grid.origin[0]) / h - 0.5))
    mask[idx] = True
    assert np.isclose(grid.cell_center((idx,))[0], 0.0)
    return RegularSet(CellSet(grid, mask), 1.0, 0.5)


@pytest.fixture(scope="module")
def point_set():
    return make_point_set_1d()


@pytest.fixture(scope="module")
def point_W(point_set):
    return whitney_decompose(point_set)


def test_distance_field_trivial_cases():
    grid = Grid((11, 11), (-0.55, -0.55), 0.1)
    mask = np.zeros((11, 11), dtype=bool)
    mask[5, 5] = True  # center cell at (0.0, 0.0)
    rs = RegularSet(CellSet(grid, mask), 1.0, 1.0)
    D = distance_field(rs)
    assert D[5, 5] == 0.0
    # uniform norm: distance is max coordinate difference
    assert D[8, 9] == pytest.approx(0.4)


def test_distance_field_matches_scan():
    rng = np.random.default_rng(3)
    grid = Grid((23, 17), (0.0, 0.0), 0.13)
    mask = rng.random((23, 17)) < 0.15
    mask[11, 8] = True
    rs = RegularSet(CellSet(grid, mask), 1.0, 1.0)
    D = distance_field(rs)
    centers_S = rs.cells.centers()
    for idx in [(0, 0), (22, 16), (7, 3), (11, 8), (4, 15)]:
        x = grid.cell_center(idx)
        d = np.max(np.abs(centers_S - x), axis=1).min()
        assert D[idx] == pytest.approx(d, abs=1e-12)


def _check_invariants(S, W):
    grid = W.grid
    centers = W.centers
    radii = W.radii
    diams = W.diams
    # (ii) exactly: diam <= dist(Q, S) <= 4 diam, dist(Q,S) = dist(x_Q,S) - r_Q
    for row in range(len(W)):
        d = S.dist_to_centers(centers[row])
        dQ = d - radii[row]
        assert dQ >= diams[row] * (1 - 1e-12)
        assert dQ <= 4 * diams[row] * (1 + 1e-12)
    # (i): every complement cell center covered; (iii): multiplicity <= 2^n
    counts = W.cover_counts()
    comp = ~S.cells.mask
    assert counts[comp].min() >= 1
    assert counts.max() <= 2 ** grid.n
    # cubes never contain S cell centers
    smask = S.cells.mask
    indptr, rows = W.cover_index
    scells = np.flatnonzero(smask.ravel())
    for c in scells[:: max(1, len(scells) // 50)]:
        assert indptr[c + 1] == indptr[c]


def test_point_set_decomposition(point_set, point_W):
    S, W = point_set, point_W
    assert len(W) > 20
    _check_invariants(S, W)
    # sizes accumulate geometrically toward S: smallest near, largest far
    d = np.abs(W.centers[:, 0])
    order = np.argsort(d)
    assert W.radii[order[0]] <= W.radii[order[-1]]


def test_half_space_decomposition_layers():
    grid = Grid((256,), (-1.0,), 2.0 / 256)
    S = generate_set(SetSpec("half_space", {}), grid)
    W = whitney_decompose(S)
    _check_invariants(S, W)
    # doubling layers: radius grows with distance from S
    d = np.array([S.dist_to_centers(c) for c in W.centers])
    r = W.radii
    corr = np.corrcoef(np.log(d), np.log(r))[0, 1]
    assert corr > 0.9


def test_fractal_decomposition_invariants():
    grid = Grid((512,), (-1.0,), 3.0 / 512)
    S = generate_set(SetSpec("fat_cantor", {"generations": 3}), grid)
    W = whitney_decompose(S)
    _check_invariants(S, W)


def test_carpet_decomposition_invariants():
    grid = Grid((128, 128), (-0.5, -0.5), 2.0 / 128)
    S = generate_set(SetSpec("fat_sierpinski_carpet", {"generations": 2}), grid)
    W = whitney_decompose(S)
    _check_invariants(S, W)


def brute_neighbors(W, row):
    out = []
    c = W.centers
    r = W.radii
    for k in range(len(W)):
        if np.all(np.abs(c[k] - c[row]) <= (9 / 8) * (r[k] + r[row]) + 1e-12):
            out.append(k)
    return sorted(out)


def test_neighbors_match_bruteforce(point_W):
    W = point_W
    rng = np.random.default_rng(0)
    rows = rng.choice(len(W), size=min(25, len(W)), replace=False)
    for row in rows:
        got = sorted(int(x) for x in W.neighbor_rows(int(row)))
        assert got == brute_neighbors(W, int(row))


def test_neighbor_size_ratio(point_W):
    W = point_W
    for row in range(len(W)):
        for other in W.neighbor_rows(row):
            ratio = W.diams[other] / W.diams[row]
            assert 0.25 - 1e-12 <= ratio <= 4.0 + 1e-12


def test_neighbors_public_api(point_W):
    W = point_W
    # an interval next to S: its star-neighbors must mix adjacent scales
    row = int(np.argmin(W.radii))
    Q = W.cube(row)
    ns = neighbors(W, Q)
    assert any(abs(n.radius - Q.radius) < 1e-12 for n in ns)  # itself
    levels = {round(math.log2(2 * n.radius / (W.grid.h))) for n in ns}
    assert len(levels) >= 2


def test_isolated_cube_neighbors():
    # two far-apart complement pockets: the biggest cube in one pocket does
    # not see cubes from the other pocket
    grid = Grid((512,), (0.0,), 1.0 / 512)
    mask = np.ones(512, dtype=bool)
    mask[100:120] = False
    mask[400:420] = False
    S = RegularSet(CellSet(grid, mask), 1.0, 0.05)
    W = whitney_decompose(S)
    centers = W.centers[:, 0]
    left = np.flatnonzero((centers > 100 / 512) & (centers < 120 / 512))
    for row in left:
        for other in W.neighbor_rows(int(row)):
            assert centers[other] < 130 / 512


def test_partition_properties(point_W):
    W = point_W
    pou = partition_of_unity(W, m=2)
    # (c): sums to 1 at complement cell centers, essentially exactly
    sums = pou.phi_sum_on_complement()
    assert np.max(np.abs(sums - 1.0)) < 1e-12
    # (a), (b) on a sample of cubes
    rng = np.random.default_rng(1)
    for row in rng.choice(len(W), size=min(20, len(W)), replace=False):
        phi = pou.phi_at_cells(int(row))
        assert phi.min() >= 0.0 and phi.max() <= 1.0 + 1e-12
        outside = np.ones(W.grid.dims, dtype=bool)
        rng_cells = W.cell_range(int(row), 9, 8)
        sl = tuple(slice(a, b + 1) for a, b in rng_cells)
        outside[sl] = False
        assert np.all(phi[outside] == 0.0)


def test_partition_corrupted_normalization_detected(point_W):
    # fault injection: an unnormalized bump sum is not identically 1
    W = point_W
    pou = partition_of_unity(W, m=2)
    comp = ~W.S.cells.mask
    raw = pou.den[comp]
    assert np.max(np.abs(raw - 1.0)) > 1e-6


def test_partition_gradient_bound(point_W):
    # (d): |grad phi_Q| * diam Q is bounded by one constant across scales,
    # measured by finite differences at cell centers on resolvable cubes
    W = point_W
    pou = partition_of_unity(W, m=2)
    h = W.grid.h
    consts = []
    for row in range(len(W)):
        if W.radii[row] < 16 * h:
            continue
        phi = pou.phi_at_cells(int(row))
        grad = np.abs(np.diff(phi)) / h
        consts.append(grad.max() * W.diams[row])
    assert consts, "no resolvable cubes in the sample"
    assert max(consts) < 50.0
    assert max(consts) / max(min(consts), 1e-300) < 25.0
