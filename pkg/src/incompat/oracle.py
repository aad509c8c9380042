"""Brute-force references for the optimized code paths, tiny instances only.

``brute_pguess`` enumerates every deterministic strategy table. The other
two are random-restart local searches over POVMs parametrized as
``G_i = S^{-1/2} C_i C_i^dag S^{-1/2}`` with ``S = sum_i C_i C_i^dag``, so
every point they visit is an exact POVM. A search that succeeds certifies a
lower bound (or joint measurability); one that fails proves nothing.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import minimize

from .measurements import MeasurementSet, deterministic_table

ENUMERATION_CAP = 10**7


def brute_pguess(game, M: MeasurementSet, cap: int = ENUMERATION_CAP) -> float:
    """Maximum over all tables x = f(y), guess = h(a, y) of the success probability."""
    n, p, d = game.n, game.p, game.dim
    m, o, dm = M.shape
    if d != dm:
        raise ValueError(f"game dimension {d} differs from measurement dimension {dm}")
    count = m**n * p ** (o * n)
    if count > cap:
        raise ValueError(f"{count} strategies exceed the enumeration cap {cap}")
    # score[y, x, a, b] = q(y) q(b|y) tr[rho_{b|y} M_{a|x}], computed entry by entry
    score = np.zeros((n, m, o, p))
    for y, x, a, b in itertools.product(range(n), range(m), range(o), range(p)):
        w = game.prior[y] * game.probs[y, b]
        score[y, x, a, b] = w * np.real(np.trace(game.states[y, b] @ M.elements[x, a]))
    guesses = np.array(list(itertools.product(range(p), repeat=o * n))).reshape(-1, n, o)
    ys = np.arange(n)[:, None]
    as_ = np.arange(o)[None, :]
    best = -np.inf
    for f in itertools.product(range(m), repeat=n):
        fx = np.asarray(f)[:, None]
        vals = score[ys, fx, as_, guesses].sum(axis=(1, 2))
        best = max(best, float(vals.max()))
    return best


def _normalize(C: np.ndarray):
    """POVM from factors C (k, d, r) plus what the gradient pull-back needs."""
    A = C @ np.conj(np.swapaxes(C, -1, -2))
    s, U = np.linalg.eigh(A.sum(axis=0))
    s = np.maximum(s, 1e-300)
    T = (U * s**-0.5) @ U.conj().T
    return T @ A @ T, A, T, s, U


def _pullback(Gamma: np.ndarray, C, A, T, s, U) -> np.ndarray:
    """Gradient in C of f, given the Hermitian gradients Gamma_i = df/dG_i."""
    # df = sum_i tr[Gamma_i (dT A_i T + T dA_i T + T A_i dT)]
    H = np.einsum("kij,jl,klm->im", A, T, Gamma) + np.einsum("kij,jl,klm->im", Gamma, T, A)
    # Frechet derivative of S^{-1/2} in the eigenbasis of S: divided differences
    r = s**-0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        D = (r[:, None] - r[None, :]) / (s[:, None] - s[None, :])
    close = np.isclose(s[:, None], s[None, :], rtol=1e-12, atol=0)
    D = np.where(close, -0.5 * s[:, None] ** -1.5, D)
    L = U @ ((U.conj().T @ H @ U) * D) @ U.conj().T
    L = 0.5 * (L + L.conj().T)
    G_direct = T @ Gamma @ T
    total = G_direct + L[None]
    return 2.0 * total @ C


def _pack(C):
    return np.concatenate([C.real.ravel(), C.imag.ravel()])


def _unpack(v, shape):
    half = v.size // 2
    return (v[:half] + 1j * v[half:]).reshape(shape)


def _random_factors(rng, k, d, r):
    return rng.standard_normal((k, d, r)) + 1j * rng.standard_normal((k, d, r))


def compatible_targets(game) -> tuple[np.ndarray, np.ndarray]:
    """B_s = sum_y q(y) q(s_y|y) rho_{s_y|y} for every guess string s in [p]^n."""
    strings = np.array(list(itertools.product(range(game.p), repeat=game.n)), dtype=int)
    B = np.zeros((len(strings), game.dim, game.dim), dtype=complex)
    for i, s in enumerate(strings):
        for y in range(game.n):
            B[i] += game.prior[y] * game.probs[y, s[y]] * game.states[y, s[y]]
    return strings, B


def brute_compatible(game, restarts: int = 50, seed=None) -> float:
    """Best success probability found for a single POVM whose outcome string
    is read off at the announced y. Always a lower bound on the optimum."""
    if game.dim > 3:
        raise ValueError("brute_compatible supports qubits and qutrits only")
    rng = np.random.default_rng(seed)
    _, B = compatible_targets(game)
    k, d = len(B), game.dim
    shape = (k, d, d)

    def f(v):
        C = _unpack(v, shape)
        G, *rest = _normalize(C)
        val = np.real(np.einsum("kij,kji->", B, G))
        g = _pullback(B, C, *rest)
        return -val, -_pack(g)

    best = -np.inf
    for _ in range(restarts):
        res = minimize(f, _pack(_random_factors(rng, k, d, d)), jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15})
        G = _normalize(_unpack(res.x, shape))[0]
        best = max(best, float(np.real(np.einsum("kij,kji->", B, G))))
    return best


def brute_jm(M: MeasurementSet, restarts: int = 100, seed=None, tol: float = 1e-6):
    """Search for a parent POVM reproducing M. Returns ``(found, parent or None)``."""
    m, o, d = M.shape
    if o**m > 16:
        raise ValueError(f"{o}^{m} outcome strings exceed the search limit of 16")
    strings, D = deterministic_table(m, o)
    k = len(strings)
    shape = (k, d, d)
    rng = np.random.default_rng(seed)

    def residual(G):
        return np.einsum("sxa,sij->xaij", D, G) - M.elements

    def f(v):
        C = _unpack(v, shape)
        G, *rest = _normalize(C)
        E = residual(G)
        Gamma = 2.0 * np.einsum("sxa,xaij->sij", D, E)
        return float(np.sum(np.abs(E) ** 2)), _pack(_pullback(Gamma, C, *rest))

    for _ in range(restarts):
        res = minimize(f, _pack(_random_factors(rng, k, d, d)), jac=True, method="L-BFGS-B",
                       options={"maxiter": 3000, "gtol": 1e-14, "ftol": 1e-20})
        G = _normalize(_unpack(res.x, shape))[0]
        if np.abs(residual(G)).max() <= tol:
            return True, G
    return False, None


__all__ = ["brute_pguess", "brute_compatible", "brute_jm", "compatible_targets", "ENUMERATION_CAP"]
