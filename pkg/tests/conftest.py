import numpy as np
import pytest

from incompat.measurements import qubit_mubs

# Anchors recorded from the oracle run in test_oracle.py (exhaustive strategy
# tables and a POVM search, no SDP involved), then frozen.
ROI_ZX = 0.171572875
ROI_ZXY = 0.267949192
PG_COMPATIBLE_MUB = 0.853553391


@pytest.fixture
def zx():
    return qubit_mubs("ZX")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def basis_game(M):
    """One uniform ensemble per setting, made of that setting's eigenstates."""
    from incompat.discrimination import DiscriminationGame

    m, o, _ = M.shape
    return DiscriminationGame(M.elements.copy(), np.full((m, o), 1.0 / o), np.full(m, 1.0 / m))


@pytest.fixture
def mub_game(zx):
    return basis_game(zx)
