import json

import numpy as np
import pytest

from incompat import serialize
from incompat.discrimination import random_game
from incompat.incompatibility import roi
from incompat.linalg import DimensionError
from incompat.measurements import InvariantError, qubit_mubs, random_kernel, random_measurement_set
from incompat.steering import assemblage_from, maximally_entangled


def roundtrip(obj):
    return json.loads(serialize.dumps(obj))


def test_num_rounds_to_twelve_digits():
    assert serialize.num(1 / 3) == 0.333333333333
    assert serialize.num(-0.0) == 0.0 and str(serialize.num(-0.0)) == "0.0"
    assert serialize.nums([[1e-20, 2.0]]) == [[1e-20, 2.0]]


def test_matrix_roundtrip():
    a = np.array([[1, 1j], [-1j, 2]]) / 3
    back = serialize.matrix_from_json(roundtrip(serialize.matrix_to_json(a)))
    assert np.abs(back - a).max() < 1e-12
    assert "im" not in serialize.matrix_to_json(np.eye(2))


def test_matrix_shape_errors():
    with pytest.raises(serialize.FormatError, match="expected 2x2"):
        serialize.matrix_from_json({"dim": 2, "re": [[1, 0, 0]]})
    with pytest.raises(serialize.FormatError, match="expected"):
        serialize.matrix_from_json([1, 2])


def test_mset_roundtrip():
    M = random_measurement_set(3, 2, 3, seed=0)
    back = serialize.mset_from_json(roundtrip(serialize.mset_to_json(M)))
    assert np.abs(back.elements - M.elements).max() < 1e-11


def test_mset_errors():
    data = serialize.mset_to_json(qubit_mubs("ZX"))
    data["povms"][1][0]["re"][0][0] = 0.9
    with pytest.raises(InvariantError):
        serialize.mset_from_json(data)
    assert serialize.mset_from_json(data, validate=False).settings == 2
    with pytest.raises(serialize.FormatError, match="povms"):
        serialize.mset_from_json({"dim": 2})
    bad = serialize.mset_to_json(qubit_mubs("ZX"))
    bad["povms"][1][0] = serialize.matrix_to_json(np.eye(3))
    with pytest.raises(DimensionError, match=r"povms\[1\]\[0\]"):
        serialize.mset_from_json(bad)


def test_game_roundtrip_and_errors():
    game = random_game(2, 2, 3, seed=1)
    back = serialize.game_from_json(roundtrip(serialize.game_to_json(game)))
    assert np.abs(back.states - game.states).max() < 1e-11
    assert np.abs(back.prior - game.prior).max() < 1e-11
    data = serialize.game_to_json(game)
    data["ensembles"][1]["states"][0] = serialize.matrix_to_json(np.eye(3) / 3)
    with pytest.raises(DimensionError, match="ensemble 1: state 0 has dimension 3, expected 2"):
        serialize.game_from_json(data)
    with pytest.raises(serialize.FormatError, match="ensembles"):
        serialize.game_from_json({"prior": [1]})


def test_assemblage_roundtrip():
    A = assemblage_from(maximally_entangled(2), qubit_mubs("ZX"))
    back = serialize.assemblage_from_json(roundtrip(serialize.assemblage_to_json(A)))
    assert np.abs(back.sigma - A.sigma).max() < 1e-12


def test_roi_result_roundtrip(zx):
    r = roi(zx)
    data = roundtrip(serialize.roi_to_json(r))
    assert data["value"] == serialize.num(r.value)
    w = serialize.witness_from_json(data["dual"]).validate()
    assert w.value(zx) == pytest.approx(r.dual_value, abs=1e-9)
    G = serialize.parent_from_json(data["primal"])
    assert np.abs(G.elements - r.primal.elements).max() < 1e-11


def test_kernel_roundtrip():
    K = random_kernel(2, 3, 2, 2, seed=3)
    back = serialize.kernel_from_json(roundtrip(serialize.kernel_to_json(K)))
    assert np.abs(back.table - K.table).max() < 1e-11


def test_dumps_is_deterministic(zx):
    a = serialize.dumps(serialize.roi_to_json(roi(zx)))
    b = serialize.dumps(serialize.roi_to_json(roi(zx)))
    assert a == b


def test_load_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"povms": [\n,]}')
    with pytest.raises(serialize.FormatError, match="line 2, column 1"):
        serialize.load(path)
