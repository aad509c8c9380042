"""Dense Hermitian linear algebra shared by every other module.

Operators are plain complex ``numpy`` arrays. :func:`hermitian` is the one
entry point that turns arbitrary square input into a read-only Hermitian
array; everything downstream assumes that contract.
"""

from __future__ import annotations

import functools

import numpy as np

EPS_PSD = 1e-8
EPS_TR = 1e-8
EPS_FEAS = 1e-8


class DimensionError(ValueError):
    """Operand shapes do not fit together."""


def hermitian(a) -> np.ndarray:
    """Return ``(a + a^dagger) / 2`` as a read-only complex array.

    Works on a single matrix or on any stack of matrices (last two axes).
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"expected square matrices, got shape {a.shape}")
    if a.shape[-1] < 1:
        raise DimensionError("dimension must be at least 1")
    h = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    h.setflags(write=False)
    return h


def hs_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Hilbert-Schmidt pairing ``Re tr(A B)`` of two Hermitian operators."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    # tr(AB) = sum_ij A_ij B_ji
    return float(np.real(np.sum(a * b.T)))


def min_eigenvalue(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(np.asarray(a))[0])


def min_eigenpair(a: np.ndarray) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue and a unit eigenvector for it."""
    w, v = np.linalg.eigh(np.asarray(a))
    return float(w[0]), v[:, 0]


def max_eigenvalue(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(np.asarray(a))[-1])


def is_psd(a: np.ndarray, tol: float = EPS_PSD) -> bool:
    a = np.asarray(a)
    if a.ndim == 2:
        return min_eigenvalue(a) >= -tol
    return bool(np.all(np.linalg.eigvalsh(a)[..., 0] >= -tol))


def partial_trace_first(a: np.ndarray, d_a: int, d_b: int) -> np.ndarray:
    """Trace out the first tensor factor of an operator on C^dA (x) C^dB."""
    a = np.asarray(a, dtype=complex)
    if a.shape != (d_a * d_b, d_a * d_b):
        raise DimensionError(
            f"operator of shape {a.shape} does not factor as {d_a}x{d_b}"
        )
    return hermitian(np.einsum("ijik->jk", a.reshape(d_a, d_b, d_a, d_b)))


def check_density(rho: np.ndarray, tol_psd: float = EPS_PSD, tol_tr: float = EPS_TR) -> np.ndarray:
    """Validate a density operator and return it as a Hermitian array."""
    rho = hermitian(rho)
    if min_eigenvalue(rho) < -tol_psd:
        raise ValueError("state is not positive semidefinite")
    if abs(np.trace(rho).real - 1.0) > tol_tr:
        raise ValueError(f"state has trace {np.trace(rho).real:.3g}, expected 1")
    return rho


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def inv_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    return (v / np.sqrt(w)) @ v.conj().T


@functools.lru_cache(maxsize=None)
def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal basis of the real space of d x d Hermitian matrices.

    Order: diagonal units, then (E_ij + E_ji)/sqrt2 and i(E_ij - E_ji)/sqrt2
    for i < j. Shape ``(d*d, d, d)``.
    """
    basis = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    r = 1.0 / np.sqrt(2.0)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = e[j, i] = r
            basis.append(e)
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1j * r
            e[j, i] = -1j * r
            basis.append(e)
    out = np.array(basis)
    out.setflags(write=False)
    return out


def herm_to_vec(h: np.ndarray) -> np.ndarray:
    """Real coordinates of Hermitian matrices (last two axes) in :func:`hermitian_basis`."""
    h = np.asarray(h)
    basis = hermitian_basis(h.shape[-1])
    return np.real(np.einsum("kij,...ji->...k", basis, h))


def vec_to_herm(v: np.ndarray, d: int) -> np.ndarray:
    return np.einsum("...k,kij->...ij", np.asarray(v, dtype=float), hermitian_basis(d))


def ket(*amps) -> np.ndarray:
    v = np.asarray(amps, dtype=complex)
    return v / np.linalg.norm(v)


def proj(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
for _m in (PAULI_I, PAULI_X, PAULI_Y, PAULI_Z):
    _m.setflags(write=False)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return hermitian(rho / np.trace(rho).real)
