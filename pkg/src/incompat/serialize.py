"""JSON encodings for matrices, measurement sets, games, assemblages and results.

Floats are rounded to 12 significant digits so that reruns with the same
inputs produce byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

from .linalg import DimensionError
from .measurements import InvariantError, MeasurementSet, ParentPovm, SimulationKernel


class FormatError(ValueError):
    """Input JSON does not have the expected layout."""


def num(v: float) -> float:
    v = float(v)
    if not np.isfinite(v):
        return v
    return float(f"{v:.12g}") + 0.0  # + 0.0 turns -0.0 into 0.0


def nums(a) -> list:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return num(a)
    return [nums(v) for v in a]


def matrix_to_json(a: np.ndarray) -> dict:
    a = np.asarray(a)
    out = {"dim": int(a.shape[0]), "re": nums(np.real(a))}
    im = np.imag(a) if np.iscomplexobj(a) else np.zeros(a.shape)
    if np.any(np.asarray(nums(im)) != 0):
        out["im"] = nums(im)
    return out


def matrix_from_json(data, where: str = "matrix") -> np.ndarray:
    try:
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
        d = int(data.get("dim", re.shape[0]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{where}: expected {{'dim', 're'[, 'im']}} ({exc})") from None
    if re.shape != (d, d) or im.shape != (d, d):
        raise FormatError(f"{where}: expected {d}x{d} entries, got re {re.shape} and im {im.shape}")
    return re + 1j * im


def _table_to_json(elements: np.ndarray, key: str) -> dict:
    m, o, d, _ = elements.shape
    return {"dim": d, "settings": m, "outcomes": o,
            key: [[matrix_to_json(e) for e in row] for row in elements]}


def _table_from_json(data, key: str, what: str) -> np.ndarray:
    try:
        rows = data[key]
    except (KeyError, TypeError):
        raise FormatError(f"{what}: missing field {key!r}") from None
    if not isinstance(rows, list) or not rows:
        raise FormatError(f"{what}: {key!r} must be a non-empty list of lists")
    d = data.get("dim")
    table = []
    for x, row in enumerate(rows):
        if not isinstance(row, list) or not row:
            raise FormatError(f"{what}: {key}[{x}] must be a non-empty list")
        mats = [matrix_from_json(e, f"{what} {key}[{x}][{a}]") for a, e in enumerate(row)]
        for a, mat in enumerate(mats):
            if d is not None and mat.shape[0] != d:
                raise DimensionError(f"{what} {key}[{x}][{a}]: dimension {mat.shape[0]}, expected {d}")
        table.append(mats)
    o = max(len(r) for r in table)
    if "outcomes" in data and data["outcomes"] != o:
        raise FormatError(f"{what}: 'outcomes' is {data['outcomes']} but rows have up to {o} entries")
    if "settings" in data and data["settings"] != len(table):
        raise FormatError(f"{what}: 'settings' is {data['settings']} but {len(table)} rows given")
    return table


def mset_to_json(M: MeasurementSet) -> dict:
    return _table_to_json(M.elements, "povms")


def mset_from_json(data, validate: bool = True) -> MeasurementSet:
    table = _table_from_json(data, "povms", "measurement set")
    return MeasurementSet.from_povms(table, validate=validate)


def game_to_json(game) -> dict:
    return {
        "prior": nums(game.prior),
        "ensembles": [
            {"probs": nums(game.probs[y]), "states": [matrix_to_json(s) for s in game.states[y]]}
            for y in range(game.n)
        ],
    }


def game_from_json(data, dim: int | None = None):
    """Parse a game; with ``dim`` given, every state must act on that dimension."""
    from .discrimination import DiscriminationGame

    try:
        ensembles = data["ensembles"]
        prior = data.get("prior")
    except (KeyError, TypeError):
        raise FormatError("game: missing field 'ensembles'") from None
    if not isinstance(ensembles, list) or not ensembles:
        raise FormatError("game: 'ensembles' must be a non-empty list")
    parsed = []
    for y, ens in enumerate(ensembles):
        try:
            probs, states = ens["probs"], ens["states"]
        except (KeyError, TypeError):
            raise FormatError(f"game ensemble {y}: expected fields 'probs' and 'states'") from None
        mats = [matrix_from_json(s, f"game ensemble {y} state {b}") for b, s in enumerate(states)]
        if len(mats) != len(probs):
            raise FormatError(f"ensemble {y}: {len(mats)} states but {len(probs)} probabilities")
        for b, mat in enumerate(mats):
            expect = dim if dim is not None else mats[0].shape[0] if y == 0 else parsed[0][0].shape[-1]
            if mat.shape[0] != expect:
                raise DimensionError(
                    f"ensemble {y}: state {b} has dimension {mat.shape[0]}, expected {expect}"
                )
        parsed.append((np.stack(mats), np.asarray(probs, dtype=float)))
    if prior is not None and len(prior) != len(parsed):
        raise FormatError(f"game: {len(prior)} prior weights for {len(parsed)} ensembles")
    return DiscriminationGame.from_ensembles(parsed, None if prior is None else np.asarray(prior, float))


def assemblage_to_json(A) -> dict:
    return _table_to_json(A.sigma, "assemblage")


def assemblage_from_json(data):
    from .steering import Assemblage

    table = _table_from_json(data, "assemblage", "assemblage")
    if len({len(r) for r in table}) != 1:
        raise FormatError("assemblage: every setting needs the same number of outcomes")
    return Assemblage(np.array(table)).validate()


def parent_to_json(G: ParentPovm) -> dict:
    return {"scale": num(G.scale), "strings": G.strings.tolist(),
            "elements": [matrix_to_json(e) for e in G.elements]}


def parent_from_json(data) -> ParentPovm:
    try:
        return ParentPovm(np.asarray(data["strings"], dtype=int),
                          np.stack([matrix_from_json(e, "parent element") for e in data["elements"]]),
                          float(data["scale"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"parent POVM: missing field {exc}") from None


def witness_to_json(w) -> dict:
    return {"omega": [[matrix_to_json(e) for e in row] for row in w.omega],
            "X": matrix_to_json(w.X)}


def witness_from_json(data):
    from .incompatibility import DualWitness

    try:
        omega = np.array([[matrix_from_json(e, f"omega[{x}][{a}]") for a, e in enumerate(row)]
                          for x, row in enumerate(data["omega"])])
        return DualWitness(omega, matrix_from_json(data["X"], "X"))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"dual witness: missing field {exc}") from None


def roi_to_json(r) -> dict:
    return {"value": num(r.value), "gap": num(r.gap), "primal_value": num(r.primal_value),
            "dual_value": num(r.dual_value), "primal": parent_to_json(r.primal),
            "dual": witness_to_json(r.dual)}


def kernel_to_json(K: SimulationKernel) -> dict:
    """table[y][x][b][a] = p(x, b | a, y)."""
    return {"table": nums(K.table)}


def kernel_from_json(data) -> SimulationKernel:
    try:
        return SimulationKernel(np.asarray(data["table"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"kernel: expected a 'table' of shape (n, m, p, o) ({exc})") from None


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def load(path):
    """Read JSON, reporting the line and column of syntax errors."""
    with open(path) as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


__all__ = [
    "FormatError", "InvariantError", "num", "nums", "matrix_to_json", "matrix_from_json",
    "mset_to_json", "mset_from_json", "game_to_json", "game_from_json", "assemblage_to_json",
    "assemblage_from_json", "parent_to_json", "parent_from_json", "witness_to_json",
    "witness_from_json", "roi_to_json", "kernel_to_json", "kernel_from_json", "dumps", "load",
]
