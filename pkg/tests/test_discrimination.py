import numpy as np
import pytest

from conftest import PG_COMPATIBLE_MUB, basis_game
from incompat.discrimination import (
    DiscriminationGame,
    advantage,
    is_simulable,
    monotone_audit,
    optimal_strategy,
    p_guess,
    p_guess_compatible,
    random_game,
    separating_game,
)
from incompat.incompatibility import roi
from incompat.linalg import DimensionError
from incompat.measurements import (
    InvariantError,
    MeasurementSet,
    apply_simulation,
    qubit_mubs,
    random_compatible_set,
    random_kernel,
    random_measurement_set,
    trivial_set,
)


def z_game():
    return basis_game(qubit_mubs("Z"))


def test_p_guess_examples(mub_game):
    assert p_guess(z_game(), qubit_mubs("Z")) == pytest.approx(1.0, abs=1e-12)
    assert p_guess(z_game(), qubit_mubs("X")) == pytest.approx(0.5, abs=1e-12)
    assert p_guess(mub_game, qubit_mubs("ZX")) == pytest.approx(1.0, abs=1e-12)


def test_optimal_strategy_picks_matching_basis(mub_game):
    value, x, g = optimal_strategy(mub_game, qubit_mubs("ZX"))
    assert list(x) == [0, 1]
    assert g.tolist() == [[0, 1], [0, 1]]


def test_ties_go_to_lowest_setting():
    _, x, _ = optimal_strategy(z_game(), qubit_mubs("ZZ"))
    assert list(x) == [0]


def test_p_guess_dimension_mismatch():
    with pytest.raises(DimensionError):
        p_guess(z_game(), random_measurement_set(3, 1, 2, seed=0))


def test_game_validation():
    with pytest.raises(InvariantError, match="ensemble 0"):
        DiscriminationGame(np.array([[np.eye(2) / 2] * 2]), [[0.3, 0.3]], [1.0]).validate()
    with pytest.raises(InvariantError, match="trace"):
        DiscriminationGame(np.array([[np.eye(2)] * 2]), [[0.5, 0.5]], [1.0]).validate()


def test_from_ensembles_pads_short_ensembles():
    z = qubit_mubs("Z").elements[0]
    game = DiscriminationGame.from_ensembles([(z, [0.5, 0.5]), (np.eye(2)[None] / 2, [1.0])])
    assert (game.n, game.p) == (2, 2)
    assert game.probs[1].tolist() == [1.0, 0.0]
    assert np.allclose(game.joint.sum(), 1.0)


def test_compatible_single_ensemble_is_helstrom():
    game = random_game(2, 1, 2, seed=5)
    W = game.weighted_states()[0]
    helstrom = 0.5 * (1 + np.abs(np.linalg.eigvalsh(W[0] - W[1])).sum())
    value, G = p_guess_compatible(game)
    assert value == pytest.approx(helstrom, abs=1e-7)
    G.validate()


def test_compatible_examples(mub_game):
    assert p_guess_compatible(z_game())[0] == pytest.approx(1.0, abs=1e-7)
    assert p_guess_compatible(mub_game)[0] == pytest.approx(PG_COMPATIBLE_MUB, abs=1e-7)


def test_compatible_matches_inverse_dual_normalization(zx, mub_game):
    r = roi(zx)
    N = np.real(np.trace(r.dual.omega, axis1=-2, axis2=-1)).sum()
    # the MUB game is the optimal game up to relabeling, and P_g^C = 1 / N
    assert 1.0 / N == pytest.approx(PG_COMPATIBLE_MUB, abs=1e-6)


def test_advantage_mub(zx, mub_game):
    assert advantage(mub_game, zx) == pytest.approx(1 + roi(zx).value, abs=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_advantage_of_compatible_set_at_most_one(seed):
    M = random_compatible_set(2, 2, 2, seed=seed)
    rng = np.random.default_rng(seed)
    for _ in range(5):
        game = random_game(2, 2, 2, seed=rng.integers(2**32))
        assert advantage(game, M) <= 1 + 1e-6


def test_advantage_bounded_by_roi(zx):
    bound = 1 + roi(zx).value
    rng = np.random.default_rng(7)
    for _ in range(20):
        game = random_game(2, int(rng.integers(1, 4)), 2, seed=rng.integers(2**32))
        assert advantage(game, zx) <= bound + 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_p_guess_monotone_under_simulation(seed):
    rng = np.random.default_rng(seed)
    M = random_measurement_set(2, 2, 3, seed=rng.integers(2**32))
    K = random_kernel(2, 3, 3, 2, seed=rng.integers(2**32))
    Mp = apply_simulation(M, K)
    for _ in range(10):
        game = random_game(2, 3, 2, seed=rng.integers(2**32))
        assert p_guess(game, Mp) <= p_guess(game, M) + 1e-9


def test_simulable_to_itself(zx):
    ok, K = is_simulable(zx, zx)
    assert ok
    K.validate()
    assert np.abs(apply_simulation(zx, K).elements - zx.elements).max() < 1e-7


def test_simulable_to_trivial(zx):
    ok, K = is_simulable(zx, trivial_set(2, 3, 4))
    assert ok
    assert np.abs(apply_simulation(zx, K).elements - trivial_set(2, 3, 4).elements).max() < 1e-7


def test_x_is_not_a_post_processing_of_z():
    ok, K = is_simulable(qubit_mubs("Z"), qubit_mubs("X"))
    assert not ok and K is None


def test_separating_game_z_to_x():
    game = separating_game(qubit_mubs("Z"), qubit_mubs("X"))
    gap = p_guess(game, qubit_mubs("X")) - p_guess(game, qubit_mubs("Z"))
    assert gap > 1e-9
    assert game.n == 1
    assert gap == pytest.approx(0.5, abs=1e-6)


def test_separating_game_trivial_to_z():
    triv = trivial_set(2, 1, 2)
    game = separating_game(triv, qubit_mubs("Z"))
    assert p_guess(game, triv) == pytest.approx(0.5, abs=1e-9)
    assert p_guess(game, qubit_mubs("Z")) - p_guess(game, triv) == pytest.approx(0.5, abs=1e-6)


def test_separating_game_rejects_simulable_pair(zx):
    with pytest.raises(InvariantError, match="simulable"):
        separating_game(zx, qubit_mubs("Z"))


def test_audit_simulable_pairs(zx):
    M = random_measurement_set(2, 2, 2, seed=11)
    report = monotone_audit(M, apply_simulation(M, random_kernel(2, 2, 2, 2, seed=12)), 30, seed=1)
    assert report["simulable"] and report["passed"]
    report = monotone_audit(zx, qubit_mubs("Z"), 100, seed=2)
    assert report["simulable"] and report["passed"]
    assert report["min_slack"] >= -1e-9


def test_audit_non_simulable_pair(zx):
    report = monotone_audit(qubit_mubs("Z"), zx, 10, seed=3)
    assert not report["simulable"] and report["passed"]
    assert report["gap"] > 1e-9
    assert "separating_game" in report


def test_audit_report_is_seed_deterministic():
    M = random_measurement_set(2, 2, 2, seed=4)
    Mp = apply_simulation(M, random_kernel(2, 2, 1, 2, seed=5))
    a = monotone_audit(M, Mp, 20, seed=9, check_roi=False)
    b = monotone_audit(M, Mp, 20, seed=9, check_roi=False)
    assert a == b
