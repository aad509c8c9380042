"""Assemblages, local-hidden-state models and consistent steering robustness.

Alice measures her half of ``rho_AB`` with the set M; Bob is left with the
unnormalized conditional states ``sigma_{a|x} = tr_A[(M_{a|x} (x) 1) rho]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .incompatibility import decomposition_program, robustness_program
from .linalg import (
    EPS_FEAS,
    EPS_PSD,
    EPS_TR,
    DimensionError,
    check_density,
    hermitian,
    random_unitary,
)
from .measurements import STRING_CAP, InvariantError, MeasurementSet
from .sdp import OPTIMAL, PRIMAL_INFEASIBLE, SolverError, SolverSettings, solve

SCHMIDT_FLOOR = 1e-3


@dataclass(frozen=True)
class Assemblage:
    """``sigma[x, a]`` on Bob's space, shape (m, o, d, d)."""

    sigma: np.ndarray

    def __post_init__(self):
        s = hermitian(self.sigma)
        if s.ndim != 4:
            raise DimensionError(f"expected shape (m, o, d, d), got {s.shape}")
        object.__setattr__(self, "sigma", s)

    @property
    def shape(self) -> tuple[int, int, int]:
        m, o, d, _ = self.sigma.shape
        return m, o, d

    @property
    def dim(self) -> int:
        return self.sigma.shape[-1]

    def reduced_state(self) -> np.ndarray:
        """Bob's state, averaged over settings to damp round-off."""
        return hermitian(self.sigma.sum(axis=1).mean(axis=0))

    def residuals(self) -> dict:
        marg = self.sigma.sum(axis=1)
        return {
            "min_eigenvalue": float(np.linalg.eigvalsh(self.sigma)[..., 0].min()),
            "signalling": float(np.abs(marg - marg[0]).max()),
            "trace_error": float(abs(np.trace(marg[0]).real - 1.0)),
        }

    def validate(self, tol_psd: float = EPS_PSD, tol_feas: float = EPS_FEAS,
                 tol_tr: float = EPS_TR) -> "Assemblage":
        r = self.residuals()
        if r["min_eigenvalue"] < -tol_psd:
            raise InvariantError(f"assemblage element has eigenvalue {r['min_eigenvalue']:.3g}")
        if r["signalling"] > tol_feas:
            raise InvariantError(f"reduced state depends on the setting (by {r['signalling']:.3g})")
        if r["trace_error"] > tol_tr:
            raise InvariantError(f"reduced state has trace error {r['trace_error']:.3g}")
        return self


def assemblage_from(rho: np.ndarray, M: MeasurementSet) -> Assemblage:
    """Conditional states left on the second system when M acts on the first."""
    rho = np.asarray(rho, dtype=complex)
    d_a = M.dim
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] % d_a:
        raise DimensionError(f"state of shape {rho.shape} does not factor with dA = {d_a}")
    rho = check_density(rho)
    d_b = rho.shape[0] // d_a
    r = rho.reshape(d_a, d_b, d_a, d_b)
    # sigma_{jl} = sum_{k,i} M_{ki} rho_{(i j),(k l)}
    sigma = np.einsum("xaki,ijkl->xajl", M.elements, r)
    return Assemblage(sigma).validate()


def lhs_feasibility(A: Assemblage, settings: SolverSettings | None = None,
                    cap: int = STRING_CAP) -> bool:
    """Whether sigma_{a|x} = sum_s D_s(a|x) sigma_s for some sigma_s >= 0."""
    prog, _ = decomposition_program(A.sigma, A.reduced_state(), cap)
    sol = solve(prog, settings)
    if sol.status == PRIMAL_INFEASIBLE:
        return False
    if sol.status != OPTIMAL:
        raise SolverError(f"LHS program ended with status {sol.status}", sol)
    return True


def consistent_steering_robustness(A: Assemblage, settings: SolverSettings | None = None,
                                   cap: int = STRING_CAP) -> float:
    """Least s such that mixing in noise with Bob's reduced state gives an LHS model.

    With the noise eliminated this reads
    min s  s.t.  sum_s D_s(a|x) S_s >= sigma_{a|x},  sum_s S_s = (1 + s) rho_B.
    """
    rho_b = A.reduced_state()
    prog, _ = robustness_program(A.sigma, rho_b, rho_b, cap)
    sol = solve(prog, settings)
    if sol.status != OPTIMAL:
        raise SolverError(f"steering robustness program ended with status {sol.status}", sol)
    return max(0.0, float(sol.primal["s"][0]))


def schmidt_coefficients(psi: np.ndarray, d_a: int, d_b: int) -> np.ndarray:
    return np.linalg.svd(np.asarray(psi).reshape(d_a, d_b), compute_uv=False)


def maximally_entangled(d: int) -> np.ndarray:
    psi = np.eye(d).reshape(-1) / np.sqrt(d)
    return np.outer(psi, psi).astype(complex)


def random_entangled_pure(d: int, seed=None, min_weight: float = 0.1) -> np.ndarray:
    """Random pure state of two d-level systems with every Schmidt weight >= min_weight."""
    if min_weight * d > 1:
        raise ValueError(f"min_weight {min_weight} is infeasible for d = {d}")
    rng = np.random.default_rng(seed)
    w = min_weight + (1.0 - d * min_weight) * rng.dirichlet(np.ones(d))
    u, v = random_unitary(d, rng), random_unitary(d, rng)
    psi = np.einsum("i,ai,bi->ab", np.sqrt(w), u, v).reshape(-1)
    return np.outer(psi, psi.conj())


def is_full_schmidt_rank(rho: np.ndarray, d_a: int, d_b: int, floor: float = SCHMIDT_FLOOR) -> bool:
    """True for a pure state whose smallest Schmidt coefficient is at least ``floor``."""
    w, v = np.linalg.eigh(rho)
    if w[-1] < 1 - 1e-9 or min(d_a, d_b) < 1:
        return False
    return bool(schmidt_coefficients(v[:, -1], d_a, d_b).min() >= floor)


__all__ = [
    "Assemblage", "assemblage_from", "lhs_feasibility", "consistent_steering_robustness",
    "maximally_entangled", "random_entangled_pure", "schmidt_coefficients", "is_full_schmidt_rank",
]
