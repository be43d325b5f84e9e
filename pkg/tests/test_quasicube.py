import math

import numpy as np
import pytest

from localext.grid import CellSet, Grid, measure
from localext.regular_set import RegularSet, SetSpec, generate_set
from localext.quasicube import auto_epsilon, build_quasicubes, default_epsilon
from localext.whitney import whitney_decompose


def test_default_epsilon_values():
    # eps = (2 N 12^n theta)^(-1/n)
    assert default_epsilon(2.0, 1, N=1) == pytest.approx(1 / 48)
    assert default_epsilon(1.0, 1, N=1) == pytest.approx(1 / 24)
    assert default_epsilon(1.0, 2, N=1) == pytest.approx((2 * 144) ** -0.5)
    for theta in (1.0, 3.7, 100.0):
        for n in (1, 2, 3):
            assert default_epsilon(theta, n) <= 1.0


@pytest.fixture(scope="module")
def halfline():
    grid = Grid((1024,), (-8.0,), 16.0 / 1024)
    S = generate_set(SetSpec("half_space", {}), grid)
    W = whitney_decompose(S)
    return S, W


def test_build_halfline_properties(halfline):
    S, W = halfline
    eps, fam = auto_epsilon(S, W, eps0=0.25)
    grid = S.grid
    # every small cube has a nonempty patch; patches sit in 10Q and in S
    assert all(c.size > 0 for c in fam.cells_of)
    for pos, row in enumerate(fam.small_rows):
        cells = fam.cells_of[pos]
        centers = grid.centers_of(cells)
        c, r = W.centers[row], W.radii[row]
        assert np.all(np.max(np.abs(centers - c), axis=1) <= 10 * r + 1e-12)
        assert np.all(S.cells.mask.ravel()[cells])
    assert np.isfinite(fam.gamma1)
    assert fam.gamma2 >= 1


def test_empty_iff_large(halfline):
    S, W = halfline
    _, fam = auto_epsilon(S, W, eps0=0.25)
    small = set(int(r) for r in fam.small_rows)
    for row in range(len(W)):
        if row in small:
            assert fam.cells(row).size > 0
            assert W.diams[row] <= S.delta * (1 + 1e-12)
        else:
            assert fam.cells(row).size == 0
            assert W.diams[row] > S.delta * (1 - 1e-12)


def test_anchor_is_nearest_point(halfline):
    S, W = halfline
    _, fam = auto_epsilon(S, W, eps0=0.25)
    from localext.regular_set import nearest_point

    grid = S.grid
    rng = np.random.default_rng(2)
    idxs = rng.choice(len(fam.small_rows), size=min(30, len(fam.small_rows)), replace=False)
    for pos in idxs:
        row = int(fam.small_rows[pos])
        a = grid.centers_of(np.asarray([fam.anchors[pos]]))[0]
        expect = nearest_point(S, W.centers[row])
        assert np.allclose(a, expect)


def test_no_small_anchor_theft(halfline):
    # patches of sub-grid cubes keep their anchor cell
    S, W = halfline
    eps, fam = auto_epsilon(S, W, eps0=0.25)
    h = S.grid.h
    for pos, row in enumerate(fam.small_rows):
        if eps * W.radii[row] < h / 2:
            assert fam.anchors[pos] in fam.cells_of[pos]


def test_disjointness_mechanism_visible_pairs(halfline):
    S, W = halfline
    eps, fam = auto_epsilon(S, W, eps0=0.25)
    h = S.grid.h
    radii = W.radii
    visible = [
        pos
        for pos, row in enumerate(fam.small_rows)
        if eps * radii[row] >= h / 2
    ]
    sets = {pos: set(fam.cells_of[pos].tolist()) for pos in visible}
    anchors = S.grid.centers_of(fam.anchors)
    for i_at, i in enumerate(visible):
        for j in visible[i_at + 1 :]:
            if not sets[i] & sets[j]:
                continue
            ri = float(radii[fam.small_rows[i]])
            rj = float(radii[fam.small_rows[j]])
            # overlapping patches force comparable radii (neither eps-dominates)
            assert ri > eps * rj - 1e-12
            assert rj > eps * ri - 1e-12


def test_gamma1_reflects_measure_comparison(halfline):
    S, W = halfline
    _, fam = auto_epsilon(S, W, eps0=0.25)
    grid = S.grid
    hn = grid.h ** grid.n
    worst = 0.0
    for pos, row in enumerate(fam.small_rows):
        vol = W.diams[row] ** grid.n
        worst = max(worst, vol / (fam.cells_of[pos].size * hn))
    assert fam.gamma1 == pytest.approx(worst)


def test_auto_epsilon_first_candidate_passes(halfline):
    S, W = halfline
    eps, fam = auto_epsilon(S, W, eps0=0.25)
    assert eps == pytest.approx(0.25)


def test_auto_epsilon_halves_on_failure(halfline):
    S, W = halfline
    # an absurd gamma cap forces halvings down to the formula fallback
    eps, fam = auto_epsilon(S, W, eps0=1.0, gamma1_cap=None, gamma2_cap=200.0)
    assert eps <= 1.0
    assert all(c.size > 0 for c in fam.cells_of)


def test_build_rejects_bad_epsilon(halfline):
    S, W = halfline
    with pytest.raises(ValueError):
        build_quasicubes(S, W, 0.0)
    with pytest.raises(ValueError):
        build_quasicubes(S, W, 1.5)


def test_cantor_family_stability():
    # gamma constants stay finite and comparable when h halves
    gammas = {}
    for dims in (1024, 2048):
        grid = Grid((dims,), (-1.0,), 3.0 / dims)
        S = generate_set(SetSpec("fat_cantor", {"generations": 3}), grid)
        W = whitney_decompose(S)
        eps, fam = auto_epsilon(S, W, eps0=0.25)
        gammas[dims] = (fam.gamma1, fam.gamma2)
        assert np.isfinite(fam.gamma1)
    g1a, g2a = gammas[1024]
    g1b, g2b = gammas[2048]
    assert 0.5 <= g1a / g1b <= 2.0
    assert 0.5 <= (g2a or 1) / (g2b or 1) <= 2.0
