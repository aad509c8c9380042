"""POVM sets, deterministic response functions and classical simulation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .linalg import EPS_FEAS, EPS_PSD, PAULI_X, PAULI_Y, PAULI_Z, hermitian, inv_sqrt

STRING_CAP = 4096


class InvariantError(ValueError):
    """An object violates one of its defining constraints."""


@dataclass(frozen=True)
class MeasurementSet:
    """``m`` POVMs with ``o`` outcomes on C^d, stored as ``elements[x, a]``.

    Settings with fewer outcomes are padded with zero elements by
    :meth:`from_povms`; zero elements never change a trace pairing.
    """

    elements: np.ndarray

    def __post_init__(self):
        el = hermitian(self.elements)
        if el.ndim != 4:
            raise InvariantError(f"expected shape (m, o, d, d), got {el.shape}")
        object.__setattr__(self, "elements", el)

    @classmethod
    def from_povms(cls, povms, validate: bool = True) -> "MeasurementSet":
        povms = [[np.asarray(e, dtype=complex) for e in povm] for povm in povms]
        if not povms or not all(povms):
            raise InvariantError("need at least one setting with at least one outcome")
        d = povms[0][0].shape[0]
        o = max(len(p) for p in povms)
        el = np.zeros((len(povms), o, d, d), dtype=complex)
        for x, povm in enumerate(povms):
            for a, e in enumerate(povm):
                if e.shape != (d, d):
                    raise InvariantError(f"setting {x} outcome {a}: shape {e.shape}, expected {(d, d)}")
                el[x, a] = e
        ms = cls(el)
        if validate:
            ms.validate()
        return ms

    @property
    def settings(self) -> int:
        return self.elements.shape[0]

    @property
    def outcomes(self) -> int:
        return self.elements.shape[1]

    @property
    def dim(self) -> int:
        return self.elements.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.settings, self.outcomes, self.dim

    def residuals(self) -> dict:
        """Worst violations of positivity and completeness."""
        mins = np.linalg.eigvalsh(self.elements)[..., 0]
        total = self.elements.sum(axis=1) - np.eye(self.dim)
        return {
            "min_eigenvalue": float(mins.min()),
            "completeness": float(np.abs(total).max()),
        }

    def validate(self, tol_psd: float = EPS_PSD, tol_feas: float = EPS_FEAS) -> "MeasurementSet":
        r = self.residuals()
        if r["min_eigenvalue"] < -tol_psd:
            x, a = np.unravel_index(np.argmin(np.linalg.eigvalsh(self.elements)[..., 0]),
                                    self.elements.shape[:2])
            raise InvariantError(
                f"element (x={x}, a={a}) has eigenvalue {r['min_eigenvalue']:.3g}"
            )
        if r["completeness"] > tol_feas:
            raise InvariantError(f"elements do not sum to identity (error {r['completeness']:.3g})")
        return self

    def __getitem__(self, x: int) -> np.ndarray:
        return self.elements[x]

    def subset(self, settings) -> "MeasurementSet":
        return MeasurementSet(self.elements[list(settings)])

    def relabel(self, perms) -> "MeasurementSet":
        """Permute outcomes: setting x gets ``elements[x, perms[x]]``."""
        return MeasurementSet(np.stack([self.elements[x, list(p)] for x, p in enumerate(perms)]))


def deterministic_table(m: int, o: int, cap: int = STRING_CAP):
    """All outcome strings of length m over [o] in lexicographic order.

    Returns ``(strings, D)`` where ``strings`` has shape (o**m, m) and
    ``D[s, x, a] = 1`` iff ``strings[s, x] == a``.
    """
    if o ** m > cap:
        raise ValueError(f"{o}**{m} = {o ** m} outcome strings exceed the cap of {cap}")
    strings = np.array(list(itertools.product(range(o), repeat=m)), dtype=int).reshape(-1, m)
    D = np.zeros((len(strings), m, o))
    D[np.arange(len(strings))[:, None], np.arange(m)[None, :], strings] = 1.0
    return strings, D


@dataclass(frozen=True)
class SimulationKernel:
    """Classical simulation, one table per target setting y.

    ``table[y, x, b, a]`` is the weight of reading outcome ``a`` of source
    setting ``x`` as outcome ``b`` of target ``y``; it equals
    ``sum_mu p(mu) p(x|y,mu) p(b|a,y,mu)``. Any such table with
    ``sum_b table[y, x, b, a] = t_y(x)`` independent of a is realisable by
    shared randomness: let mu = (x_1, ..., x_n) with probability
    ``prod_y t_y(x_y)``, measure x = mu_y and output b with probability
    ``table[y, mu_y, b, a] / t_y(mu_y)``. Storing the per-y table loses
    nothing that feasibility or guessing probabilities depend on.
    """

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 4:
            raise InvariantError(f"expected shape (n, m, p, o), got {t.shape}")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def setting_weights(self) -> np.ndarray:
        """t_y(x), shape (n, m)."""
        return self.table.sum(axis=2).mean(axis=2)

    def validate(self, tol: float = 1e-9) -> "SimulationKernel":
        t = self.table
        if t.min() < -tol:
            raise InvariantError(f"negative kernel entry {t.min():.3g}")
        marg = t.sum(axis=2)  # (n, m, o)
        if np.abs(marg - marg[..., :1]).max() > tol:
            raise InvariantError("sum_b R_y(x,b|a) depends on a")
        if np.abs(marg[..., 0].sum(axis=1) - 1.0).max() > tol:
            raise InvariantError("setting weights t_y(x) do not sum to 1")
        return self

    @classmethod
    def identity(cls, m: int, o: int) -> "SimulationKernel":
        t = np.zeros((m, m, o, o))
        for x in range(m):
            t[x, x] = np.eye(o)
        return cls(t)

    @classmethod
    def from_strategy(cls, setting_probs, response) -> "SimulationKernel":
        """Build from ``setting_probs[y, x]`` and ``response[y, x, b, a] = p(b|a,x,y)``."""
        sp = np.asarray(setting_probs, dtype=float)
        return cls(sp[:, :, None, None] * np.asarray(response, dtype=float))

    def compose(self, after: "SimulationKernel") -> "SimulationKernel":
        """Kernel of applying ``self`` first and then ``after``."""
        return SimulationKernel(np.einsum("zycb,yxba->zxca", after.table, self.table))


def apply_simulation(M: MeasurementSet, K: SimulationKernel) -> MeasurementSet:
    """M'_{b|y} = sum_{x,a} K[y,x,b,a] M_{a|x}."""
    if K.table.shape[1] != M.settings or K.table.shape[3] != M.outcomes:
        raise InvariantError(
            f"kernel shape {K.table.shape} does not match set with m={M.settings}, o={M.outcomes}"
        )
    K.validate()
    out = MeasurementSet(np.einsum("yxba,xaij->ybij", K.table, M.elements))
    return out.validate()


def mix(M1: MeasurementSet, M2: MeasurementSet, p: float) -> MeasurementSet:
    if M1.shape != M2.shape:
        raise InvariantError(f"shape mismatch {M1.shape} vs {M2.shape}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mixing weight {p} outside [0, 1]")
    return MeasurementSet(p * M1.elements + (1.0 - p) * M2.elements)


def trivial_set(d: int, m: int, o: int) -> MeasurementSet:
    """Every element equal to I/o."""
    return MeasurementSet(np.broadcast_to(np.eye(d) / o, (m, o, d, d)).copy())


def random_povm(d: int, o: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Normalized Wishart POVM: A_a -> S^{-1/2} A_a S^{-1/2}, S = sum_a A_a."""
    if o == 1:
        return np.eye(d, dtype=complex)[None]
    rank = max(1, -(-d // o)) if rank is None else rank
    if rank * o < d:
        raise ValueError(f"{o} elements of rank {rank} cannot sum to the identity in dimension {d}")
    g = rng.standard_normal((o, d, rank)) + 1j * rng.standard_normal((o, d, rank))
    A = g @ np.conj(np.swapaxes(g, -1, -2))
    s = inv_sqrt(hermitian(A.sum(axis=0)))
    return hermitian(s @ A @ s)


def random_measurement_set(d: int, m: int, o: int, seed=None, rank: int | None = None) -> MeasurementSet:
    """Deterministic in ``seed``. ``rank`` is the Wishart rank of each A_a;
    the default ``ceil(d/o)`` gives the sharpest generic POVMs."""
    if min(d, m, o) < 1:
        raise ValueError("d, m and o must all be at least 1")
    rng = np.random.default_rng(seed)
    return MeasurementSet(np.stack([random_povm(d, o, rng, rank) for _ in range(m)])).validate()


def random_kernel(m: int, o: int, n: int, p: int, seed=None) -> SimulationKernel:
    """Random simulation from (m settings, o outcomes) to (n settings, p outcomes)."""
    rng = np.random.default_rng(seed)
    sp = rng.dirichlet(np.ones(m), size=n)
    resp = rng.dirichlet(np.ones(p), size=(n, m, o))  # (n, m, o, p): p(b|a)
    return SimulationKernel.from_strategy(sp, np.swapaxes(resp, -1, -2))


def basis_measurement(vectors) -> np.ndarray:
    """Projective POVM from the columns of a unitary."""
    u = np.asarray(vectors, dtype=complex)
    return np.einsum("ia,ja->aij", u, u.conj())


def pauli_measurement(pauli: np.ndarray, eta: float = 1.0) -> np.ndarray:
    """Two-outcome qubit POVM (I + eta*P)/2, (I - eta*P)/2."""
    return np.stack([(np.eye(2) + eta * pauli) / 2, (np.eye(2) - eta * pauli) / 2])


def qubit_mubs(which: str = "ZX", eta: float = 1.0) -> MeasurementSet:
    paulis = {"X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}
    return MeasurementSet.from_povms([pauli_measurement(paulis[c], eta) for c in which])


def fourier_mubs(d: int, eta: float = 1.0) -> MeasurementSet:
    """Computational and Fourier bases in dimension d, smeared towards I/d by eta."""
    w = np.exp(2j * np.pi / d)
    F = np.array([[w ** (j * k) for k in range(d)] for j in range(d)]) / np.sqrt(d)
    povms = [basis_measurement(np.eye(d)), basis_measurement(F)]
    return MeasurementSet.from_povms([eta * p + (1 - eta) * np.eye(d) / d for p in povms])


def smear(M: MeasurementSet, eta: float) -> MeasurementSet:
    """eta * M + (1 - eta) * trivial."""
    return mix(M, trivial_set(M.dim, M.settings, M.outcomes), eta)


def random_compatible_set(d: int, m: int, o: int, seed=None, parent_outcomes: int | None = None,
                          deterministic: bool = False) -> MeasurementSet:
    """Post-processing of one random parent POVM, hence jointly measurable."""
    rng = np.random.default_rng(seed)
    k = parent_outcomes or max(2, o ** m // 2)
    G = random_povm(d, k, rng, rank=1 if k >= d else None)
    if deterministic:
        resp = np.zeros((m, k, o))
        choice = rng.integers(0, o, size=(m, k))
        resp[np.arange(m)[:, None], np.arange(k)[None, :], choice] = 1.0
    else:
        resp = rng.dirichlet(np.ones(o) * 0.3, size=(m, k))  # p(a|x,lambda)
    return MeasurementSet(np.einsum("xla,lij->xaij", resp, G)).validate()


@dataclass(frozen=True)
class ParentPovm:
    """Parent measurement indexed by outcome strings, possibly super-normalized.

    ``elements[i]`` belongs to ``strings[i]`` and ``sum_i elements[i] = scale * I``.
    """

    strings: np.ndarray
    elements: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "elements", hermitian(self.elements))
        s = np.asarray(self.strings, dtype=int)
        s.setflags(write=False)
        object.__setattr__(self, "strings", s)

    @property
    def dim(self) -> int:
        return self.elements.shape[-1]

    def marginals(self, outcomes: int) -> np.ndarray:
        """sum_a D_a(a|x) G_a, shape (m, o, d, d)."""
        m = self.strings.shape[1]
        out = np.zeros((m, outcomes, self.dim, self.dim), dtype=complex)
        for x in range(m):
            np.add.at(out[x], self.strings[:, x], self.elements)
        return out

    def normalized(self) -> "ParentPovm":
        return ParentPovm(self.strings, self.elements / self.scale, 1.0)

    def residuals(self) -> dict:
        return {
            "min_eigenvalue": float(np.linalg.eigvalsh(self.elements)[:, 0].min()),
            "completeness": float(np.abs(self.elements.sum(axis=0) - self.scale * np.eye(self.dim)).max()),
        }

    def validate(self, tol_psd: float = EPS_PSD, tol_feas: float = EPS_FEAS) -> "ParentPovm":
        r = self.residuals()
        if r["min_eigenvalue"] < -tol_psd:
            raise InvariantError(f"parent element has eigenvalue {r['min_eigenvalue']:.3g}")
        if r["completeness"] > tol_feas * max(1.0, self.scale):
            raise InvariantError(f"parent elements do not sum to {self.scale:.6g} I")
        return self
