import numpy as np
import pytest

from conftest import PG_COMPATIBLE_MUB, ROI_ZX, ROI_ZXY, basis_game
from incompat.discrimination import p_guess, p_guess_compatible, random_game
from incompat.incompatibility import optimal_game_from_dual, roi
from incompat.measurements import qubit_mubs, random_compatible_set, random_measurement_set
from incompat.oracle import brute_compatible, brute_jm, brute_pguess, compatible_targets


@pytest.mark.parametrize("seed", range(20))
def test_brute_pguess_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    n, m, o, p = rng.integers(1, 4, size=4)
    d = int(rng.integers(2, 4))
    game = random_game(d, int(n), int(max(p, 1)), seed=rng.integers(2**32))
    M = random_measurement_set(d, int(m), int(max(o, 2)), seed=rng.integers(2**32))
    assert abs(brute_pguess(game, M) - p_guess(game, M)) <= 1e-12


def test_brute_pguess_cap():
    game = random_game(2, 3, 3, seed=0)
    with pytest.raises(ValueError, match="cap"):
        brute_pguess(game, random_measurement_set(2, 3, 3, seed=0), cap=100)


def test_compatible_targets_cover_all_strings():
    strings, B = compatible_targets(random_game(2, 2, 3, seed=1))
    assert strings.shape == (9, 2)
    assert np.real(np.trace(B, axis1=1, axis2=2)).sum() == pytest.approx(3.0)


def test_mub_anchor(mub_game, zx):
    """Independent route to the frozen anchors: exhaustive strategies and a
    POVM search, with no SDP involved."""
    pg = brute_pguess(mub_game, zx)
    pgc = brute_compatible(mub_game, restarts=20, seed=0)
    assert pg == pytest.approx(1.0, abs=1e-12)
    assert pgc == pytest.approx(PG_COMPATIBLE_MUB, abs=1e-6)
    assert pg / pgc - 1 == pytest.approx(ROI_ZX, abs=1e-5)
    assert p_guess_compatible(mub_game)[0] >= pgc - 1e-4


def test_zxy_anchor():
    M = qubit_mubs("ZXY")
    game = basis_game(M)
    pgc = brute_compatible(game, restarts=20, seed=1)
    assert brute_pguess(game, M) / pgc - 1 == pytest.approx(ROI_ZXY, abs=1e-5)
    # the game built from the dual witness is no better than the basis game here
    r = roi(M)
    best = optimal_game_from_dual(r.dual)
    assert brute_pguess(best, M) / brute_compatible(best, restarts=20, seed=2) <= 1 + ROI_ZXY + 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_compatible_sdp_dominates_search(seed):
    game = random_game(2, 2, 2, seed=seed)
    assert p_guess_compatible(game)[0] >= brute_compatible(game, restarts=5, seed=seed) - 1e-4


def test_brute_jm_finds_parents():
    ok, G = brute_jm(qubit_mubs("ZZ"), restarts=10, seed=0)
    assert ok
    ok, _ = brute_jm(qubit_mubs("ZX", 0.5), restarts=20, seed=1)
    assert ok
    ok, _ = brute_jm(random_compatible_set(2, 2, 2, seed=2), restarts=20, seed=2)
    assert ok
    assert np.allclose(G.sum(axis=0), np.eye(2), atol=1e-9)


def test_brute_jm_fails_on_incompatible(zx):
    ok, G = brute_jm(zx, restarts=5, seed=0)
    assert not ok and G is None


def test_brute_jm_outcome_limit():
    with pytest.raises(ValueError, match="limit"):
        brute_jm(random_measurement_set(2, 3, 3, seed=0))
