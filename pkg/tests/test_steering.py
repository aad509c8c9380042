import numpy as np
import pytest

from incompat.incompatibility import roi
from incompat.linalg import DimensionError, random_density
from incompat.measurements import (
    InvariantError,
    fourier_mubs,
    qubit_mubs,
    random_compatible_set,
    random_measurement_set,
)
from incompat.steering import (
    Assemblage,
    assemblage_from,
    consistent_steering_robustness,
    is_full_schmidt_rank,
    lhs_feasibility,
    maximally_entangled,
    random_entangled_pure,
    schmidt_coefficients,
)


def test_max_entangled_with_z():
    A = assemblage_from(maximally_entangled(2), qubit_mubs("Z"))
    assert np.allclose(A.sigma[0, 0], np.diag([0.5, 0]), atol=1e-12)
    assert np.allclose(A.sigma[0, 1], np.diag([0, 0.5]), atol=1e-12)


def test_product_state_factorizes():
    rng = np.random.default_rng(0)
    ra, rb = random_density(2, rng), random_density(3, rng)
    M = random_measurement_set(2, 2, 2, seed=1)
    A = assemblage_from(np.kron(ra, rb), M)
    expected = np.real(np.einsum("xaij,ji->xa", M.elements, ra))[..., None, None] * rb
    assert np.abs(A.sigma - expected).max() < 1e-12
    assert lhs_feasibility(A)
    assert consistent_steering_robustness(A) <= 1e-7


def test_reduced_state_consistency():
    rho = random_entangled_pure(3, seed=2)
    A = assemblage_from(rho, fourier_mubs(3))
    marg = A.sigma.sum(axis=1)
    assert np.abs(marg - marg[0]).max() < 1e-12
    # Bob's reduced state is the partial trace over the first factor
    rb = np.einsum("ijik->jk", rho.reshape(3, 3, 3, 3))
    assert np.allclose(A.reduced_state(), rb, atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        assemblage_from(np.eye(5) / 5, qubit_mubs("Z"))


def test_assemblage_validation():
    sigma = np.zeros((2, 2, 2, 2), dtype=complex)
    sigma[0, 0] = np.eye(2) / 2
    sigma[1, 0] = np.diag([0.5, 0.0])
    sigma[1, 1] = np.diag([0.0, 0.4])
    with pytest.raises(InvariantError):
        Assemblage(sigma).validate()


def test_max_entangled_zx_steers(zx):
    A = assemblage_from(maximally_entangled(2), zx)
    assert not lhs_feasibility(A)
    assert consistent_steering_robustness(A) == pytest.approx(roi(zx).value, abs=1e-5)


def test_compatible_measurements_never_steer():
    M = random_compatible_set(2, 2, 2, seed=3)
    A = assemblage_from(random_entangled_pure(2, seed=4), M)
    assert lhs_feasibility(A)
    assert consistent_steering_robustness(A) <= 1e-7


@pytest.mark.parametrize("seed", range(4))
def test_bounded_by_roi_for_mixed_states(seed):
    rng = np.random.default_rng(seed)
    M = random_measurement_set(2, 2, 2, seed=rng.integers(2**32))
    A = assemblage_from(random_density(4, rng), M)
    assert consistent_steering_robustness(A) <= roi(M).value + 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_tight_for_full_schmidt_rank(seed):
    rng = np.random.default_rng(50 + seed)
    M = random_measurement_set(2, 2, 2, seed=rng.integers(2**32))
    rho = random_entangled_pure(2, seed=rng.integers(2**32))
    assert is_full_schmidt_rank(rho, 2, 2)
    A = assemblage_from(rho, M)
    assert consistent_steering_robustness(A) == pytest.approx(roi(M).value, abs=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_zero_robustness_iff_lhs(seed):
    rng = np.random.default_rng(80 + seed)
    M = random_measurement_set(2, 2, 2, seed=rng.integers(2**32))
    eta = rng.uniform(0.3, 1.0)
    rho = eta * random_entangled_pure(2, seed=rng.integers(2**32)) + (1 - eta) * np.eye(4) / 4
    A = assemblage_from(rho, M)
    s = consistent_steering_robustness(A)
    assert lhs_feasibility(A) == (s <= 1e-7)


def test_schmidt_weights_respect_floor():
    rho = random_entangled_pure(3, seed=6, min_weight=0.1)
    w, v = np.linalg.eigh(rho)
    c = schmidt_coefficients(v[:, -1], 3, 3)
    assert (c**2).min() >= 0.1 - 1e-12
    assert (c**2).sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        random_entangled_pure(3, min_weight=0.5)


def test_full_schmidt_rank_detection():
    assert is_full_schmidt_rank(maximally_entangled(2), 2, 2)
    assert not is_full_schmidt_rank(np.diag([1.0, 0, 0, 0]), 2, 2)
    assert not is_full_schmidt_rank(np.eye(4) / 4, 2, 2)
