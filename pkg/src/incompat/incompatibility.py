"""Joint measurability and the robustness of incompatibility.

Both the primal and the dual are written over deterministic response
functions: a parent POVM is indexed by outcome strings ``s`` with
``s[x]`` the answer given to setting ``x``. The primal is

    min s  s.t.  sum_s D_s(a|x) G_s >= M_{a|x},  sum_s G_s = s I,  G_s >= 0

where the noise measurement has been eliminated, and the dual is

    max sum_{a,x} tr[w_{ax} M_{a|x}]  s.t.  X >= sum_x w_{s[x] x} for all s,
                                           w >= 0,  tr X = 1.

Both optima equal ``1 + I_R``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discrimination import DiscriminationGame
from .linalg import EPS_PSD, EPS_TR, hermitian
from .measurements import (
    STRING_CAP,
    InvariantError,
    MeasurementSet,
    ParentPovm,
    deterministic_table,
)
from .sdp import OPTIMAL, PRIMAL_INFEASIBLE, ConeProgram, SolverError, SolverSettings, solve

EPS_CERT = 1e-7


@dataclass(frozen=True)
class DualWitness:
    """Dual variables ``omega[x, a]`` and the normalized bound ``X``."""

    omega: np.ndarray  # (m, o, d, d)
    X: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", hermitian(self.omega))
        object.__setattr__(self, "X", hermitian(self.X))

    @property
    def shape(self) -> tuple[int, int, int]:
        m, o, d, _ = self.omega.shape
        return m, o, d

    def value(self, M: MeasurementSet) -> float:
        return float(np.real(np.einsum("xaij,xaji->", self.omega, M.elements)))

    def residuals(self, cap: int = STRING_CAP) -> dict:
        """Worst violations, each computed by a direct eigenvalue check."""
        m, o, _ = self.shape
        strings, _ = deterministic_table(m, o, cap)
        sums = self.omega[np.arange(m)[None, :], strings].sum(axis=1)
        slack = np.linalg.eigvalsh(self.X[None] - sums)[:, 0]
        return {
            "omega_min_eigenvalue": float(np.linalg.eigvalsh(self.omega)[..., 0].min()),
            "string_min_eigenvalue": float(slack.min()),
            "worst_string": strings[int(np.argmin(slack))].tolist(),
            "trace_error": float(abs(np.trace(self.X).real - 1.0)),
        }

    def validate(self, tol_psd: float = EPS_PSD, tol_tr: float = EPS_TR,
                 cap: int = STRING_CAP) -> "DualWitness":
        r = self.residuals(cap)
        if r["omega_min_eigenvalue"] < -tol_psd:
            raise InvariantError(f"omega has eigenvalue {r['omega_min_eigenvalue']:.3g}")
        if r["string_min_eigenvalue"] < -tol_psd:
            raise InvariantError(
                f"X - sum omega fails to be PSD for string {r['worst_string']} "
                f"(eigenvalue {r['string_min_eigenvalue']:.3g})"
            )
        if r["trace_error"] > tol_tr:
            raise InvariantError(f"tr X differs from 1 by {r['trace_error']:.3g}")
        return self


@dataclass(frozen=True)
class RoiResult:
    value: float
    primal_value: float
    dual_value: float
    primal: ParentPovm
    dual: DualWitness
    gap: float

    def noise(self, M: MeasurementSet) -> MeasurementSet:
        """Noise set N with (M + r N)/(1 + r) jointly measurable, r = value.

        With r = 0 no noise is needed and M itself is returned.
        """
        r = self.value
        if r <= 0:
            return M
        marg = self.primal.marginals(M.outcomes)
        # rescale the parent so that sum_s G_s = (1 + r) I exactly
        marg = marg * (1.0 + r) / self.primal.scale
        return MeasurementSet((marg - M.elements) / r)


def _check_cap(M: MeasurementSet, cap: int) -> None:
    if M.outcomes ** M.settings > cap:
        raise ValueError(
            f"{M.outcomes}^{M.settings} outcome strings exceed the cap of {cap}"
        )


def _string_blocks(prog: ConeProgram, m: int, o: int, d: int, cap: int):
    strings, _ = deterministic_table(m, o, cap)
    names = [prog.add_psd(f"G/{i}", d) for i in range(len(strings))]
    return strings, names


def _members(strings: np.ndarray, x: int, a: int) -> np.ndarray:
    return np.flatnonzero(strings[:, x] == a)


def decomposition_program(targets: np.ndarray, total: np.ndarray,
                          cap: int = STRING_CAP) -> tuple[ConeProgram, np.ndarray]:
    """Feasibility program for G_s >= 0 with sum_s G_s = total and
    sum_s D_s(a|x) G_s = targets[x, a]."""
    m, o, d, _ = targets.shape
    prog = ConeProgram()
    strings, names = _string_blocks(prog, m, o, d, cap)
    prog.add_matrix_equality([(n, 1.0) for n in names], total, "completeness")
    # the last outcome of each setting follows from completeness
    for x in range(m):
        for a in range(o - 1):
            prog.add_matrix_equality([(names[i], 1.0) for i in _members(strings, x, a)],
                                     targets[x, a], f"marginal/{x}/{a}")
    return prog, strings


def robustness_program(targets: np.ndarray, reference: np.ndarray, rhs: np.ndarray,
                       cap: int = STRING_CAP) -> tuple[ConeProgram, np.ndarray]:
    """min s  s.t.  sum_s D_s(a|x) G_s >= targets[x, a],  sum_s G_s - s * reference = rhs."""
    m, o, d, _ = targets.shape
    prog = ConeProgram(sense="min")
    strings, names = _string_blocks(prog, m, o, d, cap)
    prog.add_free("s", 1)
    prog.set_objective("s", [1.0])
    for x in range(m):
        for a in range(o):
            prog.add_matrix_inequality([(names[i], 1.0) for i in _members(strings, x, a)],
                                       targets[x, a], f"cover/{x}/{a}")
    prog.add_matrix_equality([(n, 1.0) for n in names]
                             + [("s", -np.asarray(reference, dtype=complex)[None])],
                             rhs, "scale")
    return prog, strings


def jm_program(M: MeasurementSet, cap: int = STRING_CAP) -> tuple[ConeProgram, np.ndarray]:
    """Feasibility program for a canonical parent reproducing M exactly."""
    _check_cap(M, cap)
    return decomposition_program(M.elements, np.eye(M.dim), cap)


def jm_feasibility(M: MeasurementSet, settings: SolverSettings | None = None,
                   cap: int = STRING_CAP) -> tuple[bool, ParentPovm | None]:
    """Whether M is jointly measurable; returns the parent POVM when it is."""
    prog, strings = jm_program(M, cap)
    sol = solve(prog, settings)
    if sol.status == PRIMAL_INFEASIBLE:
        return False, None
    if sol.status != OPTIMAL:
        raise SolverError(f"joint measurability program ended with status {sol.status}", sol)
    G = np.stack([sol.primal[f"G/{i}"] for i in range(len(strings))])
    return True, ParentPovm(strings, G, 1.0)


def roi_primal_program(M: MeasurementSet, cap: int = STRING_CAP):
    _check_cap(M, cap)
    d = M.dim
    return robustness_program(M.elements, np.eye(d), np.zeros((d, d)), cap)


def roi_primal(M: MeasurementSet, settings: SolverSettings | None = None,
               cap: int = STRING_CAP) -> tuple[float, ParentPovm]:
    """Optimal ``s = 1 + I_R`` and the super-normalized parent achieving it."""
    prog, strings = roi_primal_program(M, cap)
    sol = solve(prog, settings)
    if sol.status != OPTIMAL:
        raise SolverError(f"RoI primal ended with status {sol.status}", sol)
    s = float(sol.primal["s"][0])
    G = np.stack([sol.primal[f"G/{i}"] for i in range(len(strings))])
    return s, ParentPovm(strings, G, s)


def roi_dual_program(M: MeasurementSet, cap: int = STRING_CAP):
    _check_cap(M, cap)
    m, o, d = M.shape
    strings, _ = deterministic_table(m, o, cap)
    prog = ConeProgram(sense="max")
    for x in range(m):
        for a in range(o):
            prog.add_psd(f"omega/{x}/{a}", d)
            prog.set_objective(f"omega/{x}/{a}", M.elements[x, a])
    # X >= sum of omegas >= 0 on the feasible set, so declaring it PSD loses
    # nothing and keeps free variables out of the interior-point system
    prog.add_psd("X", d)
    for i, s in enumerate(strings):
        terms = [("X", 1.0)] + [(f"omega/{x}/{s[x]}", -1.0) for x in range(m)]
        prog.add_matrix_inequality(terms, np.zeros((d, d)), f"string/{i}")
    prog.add_rows({"X": np.eye(d)[None]}, [1.0], "trace")
    return prog, strings


def roi_dual(M: MeasurementSet, settings: SolverSettings | None = None,
             cap: int = STRING_CAP) -> tuple[float, DualWitness]:
    """Optimal dual value ``1 + I_R`` and the witness ``(omega, X)``."""
    prog, _ = roi_dual_program(M, cap)
    sol = solve(prog, settings)
    if sol.status != OPTIMAL:
        raise SolverError(f"RoI dual ended with status {sol.status}", sol)
    m, o, _ = M.shape
    omega = np.stack([np.stack([sol.primal[f"omega/{x}/{a}"] for a in range(o)])
                      for x in range(m)])
    return sol.objective_primal, DualWitness(omega, sol.primal["X"])


def roi(M: MeasurementSet, settings: SolverSettings | None = None, cap: int = STRING_CAP,
        eps_cert: float = EPS_CERT) -> RoiResult:
    """Certified robustness of incompatibility from matching primal and dual solves."""
    s, parent = roi_primal(M, settings, cap)
    v, witness = roi_dual(M, settings, cap)
    gap = abs(s - v)
    if gap > eps_cert:
        raise SolverError(f"RoI primal {s:.10g} and dual {v:.10g} differ by {gap:.3g}")
    return RoiResult(max(0.0, 0.5 * (s + v) - 1.0), s, v, parent, witness, gap)


def optimal_game_from_dual(w: DualWitness, eps_tr: float = EPS_TR) -> DiscriminationGame:
    """Game whose advantage for the measured set equals the dual value.

    Ensemble y = x holds the states omega_{ax}/tr omega_{ax} with joint
    probability tr omega_{ax} / N, N = sum tr omega. Blocks with negligible
    trace keep their slot with zero weight and the maximally mixed state.
    """
    m, o, d = w.shape
    traces = np.clip(np.real(np.trace(w.omega, axis1=-2, axis2=-1)), 0.0, None)
    total = traces.sum()
    if total <= eps_tr:
        raise InvariantError("dual witness is degenerate: every omega is traceless")
    live = traces > eps_tr
    q = np.where(live, traces, 0.0)
    q = q / q.sum()
    safe = np.where(live, traces, 1.0)[..., None, None]
    states = np.where(live[..., None, None], w.omega / safe, np.eye(d) / d)
    prior = q.sum(axis=1)
    probs = np.where(prior[:, None] > 0, q / np.where(prior > 0, prior, 1.0)[:, None], 1.0 / o)
    return DiscriminationGame(states, probs, prior)


__all__ = [
    "DualWitness", "RoiResult", "decomposition_program", "robustness_program", "jm_feasibility", "jm_program", "roi_primal", "roi_dual",
    "roi_primal_program", "roi_dual_program", "roi", "optimal_game_from_dual", "EPS_CERT",
]
