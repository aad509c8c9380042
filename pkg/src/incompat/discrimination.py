"""State-discrimination games with side information about the ensemble.

A game is a list of ensembles ``{q(b|y), rho_{b|y}}_b`` chosen with prior
``q(y)``. The player learns ``y``, receives ``rho_{b|y}`` and guesses ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import EPS_PSD, EPS_TR, DimensionError, hermitian, min_eigenpair, random_density
from .measurements import (
    InvariantError,
    MeasurementSet,
    ParentPovm,
    SimulationKernel,
    deterministic_table,
    random_kernel,
    apply_simulation,
)
from .sdp import (
    OPTIMAL,
    PRIMAL_INFEASIBLE,
    ConeProgram,
    SolverError,
    SolverSettings,
    solve,
)

GAP_TOL = 1e-9


@dataclass(frozen=True)
class Ensemble:
    states: np.ndarray  # (p, d, d)
    probs: np.ndarray  # (p,)


@dataclass(frozen=True)
class DiscriminationGame:
    """``states[y, b]`` with conditional ``probs[y, b] = q(b|y)`` and ``prior[y] = q(y)``."""

    states: np.ndarray
    probs: np.ndarray
    prior: np.ndarray

    def __post_init__(self):
        states = hermitian(self.states)
        if states.ndim != 4:
            raise InvariantError(f"expected states of shape (n, p, d, d), got {states.shape}")
        probs = np.array(self.probs, dtype=float)
        prior = np.array(self.prior, dtype=float)
        if probs.shape != states.shape[:2] or prior.shape != states.shape[:1]:
            raise InvariantError("probabilities do not match the state table")
        for a in (probs, prior):
            a.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "prior", prior)

    @classmethod
    def from_ensembles(cls, ensembles, prior=None) -> "DiscriminationGame":
        """Build from (states, probs) pairs; shorter ensembles are padded with
        zero-probability maximally mixed states."""
        ensembles = [(np.asarray(s, dtype=complex), np.asarray(q, dtype=float)) for s, q in ensembles]
        if not ensembles:
            raise InvariantError("a game needs at least one ensemble")
        d = ensembles[0][0].shape[-1]
        p = max(len(q) for _, q in ensembles)
        n = len(ensembles)
        states = np.broadcast_to(np.eye(d) / d, (n, p, d, d)).astype(complex)
        probs = np.zeros((n, p))
        for y, (s, q) in enumerate(ensembles):
            if s.shape[1:] != (d, d) or len(s) != len(q):
                raise DimensionError(
                    f"ensemble {y}: states of shape {s.shape} do not match dimension {d} "
                    f"and {len(q)} probabilities"
                )
            states[y, : len(q)] = s
            probs[y, : len(q)] = q
        prior = np.full(n, 1.0 / n) if prior is None else prior
        return cls(states, probs, prior).validate()

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def p(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[-1]

    @property
    def ensembles(self) -> list[Ensemble]:
        return [Ensemble(self.states[y], self.probs[y]) for y in range(self.n)]

    @property
    def joint(self) -> np.ndarray:
        """q(b, y) = q(y) q(b|y), shape (n, p)."""
        return self.prior[:, None] * self.probs

    def weighted_states(self) -> np.ndarray:
        """q(y) q(b|y) rho_{b|y}, shape (n, p, d, d)."""
        return self.joint[:, :, None, None] * self.states

    def validate(self, tol: float = EPS_TR) -> "DiscriminationGame":
        if self.prior.min() < -tol or abs(self.prior.sum() - 1.0) > tol:
            raise InvariantError("prior q(y) is not a probability distribution")
        if self.probs.min() < -tol or np.abs(self.probs.sum(axis=1) - 1.0).max() > tol:
            y = int(np.argmax(np.abs(self.probs.sum(axis=1) - 1.0)))
            raise InvariantError(f"ensemble {y}: q(b|y) is not a probability distribution")
        mins = np.linalg.eigvalsh(self.states)[..., 0]
        if mins.min() < -EPS_PSD:
            y, b = np.unravel_index(np.argmin(mins), mins.shape)
            raise InvariantError(f"ensemble {y}: state {b} is not positive semidefinite")
        traces = np.real(np.trace(self.states, axis1=-2, axis2=-1))
        if np.abs(traces - 1.0).max() > tol:
            y, b = np.unravel_index(np.argmax(np.abs(traces - 1.0)), traces.shape)
            raise InvariantError(f"ensemble {y}: state {b} has trace {traces[y, b]:.6g}")
        return self


def _check_dims(game: DiscriminationGame, M: MeasurementSet) -> None:
    if game.dim != M.dim:
        raise DimensionError(f"game states have dimension {game.dim}, measurements act on {M.dim}")


def score_table(game: DiscriminationGame, M: MeasurementSet) -> np.ndarray:
    """T[y, x, a, b] = q(b,y) tr[rho_{b|y} M_{a|x}]."""
    _check_dims(game, M)
    return np.real(np.einsum("ybij,xaji->yxab", game.weighted_states(), M.elements))


def optimal_strategy(game: DiscriminationGame, M: MeasurementSet):
    """Best deterministic strategy: setting ``x[y]`` and guess ``g[y, a]``.

    Returns ``(value, x, g)``. The objective is linear in each of p(mu),
    p(x|y,mu) and p(g|a,y,mu), so a vertex (deterministic choice) is optimal;
    ties go to the lowest index.
    """
    T = score_table(game, M)
    best_b = T.max(axis=3)  # (y, x, a)
    per_x = best_b.sum(axis=2)  # (y, x)
    x = per_x.argmax(axis=1)
    g = T[np.arange(game.n), x].argmax(axis=2)
    return float(per_x.max(axis=1).sum()), x, g


def p_guess(game: DiscriminationGame, M: MeasurementSet) -> float:
    """Optimal guessing probability with the measurement set M."""
    return optimal_strategy(game, M)[0]


def guess_program(game: DiscriminationGame, cap: int | None = None) -> tuple[ConeProgram, np.ndarray]:
    """max sum_s tr[B_s G_s] over POVMs G indexed by guess strings s in [p]^n,
    where B_s = sum_y q(s_y, y) rho_{s_y|y}."""
    kw = {} if cap is None else {"cap": cap}
    strings, _ = deterministic_table(game.n, game.p, **kw)
    W = game.weighted_states()
    B = W[np.arange(game.n)[None, :], strings].sum(axis=1)
    prog = ConeProgram(sense="max")
    for i in range(len(strings)):
        name = prog.add_psd(f"G/{i}", game.dim)
        prog.set_objective(name, B[i])
    prog.add_matrix_equality([(f"G/{i}", 1.0) for i in range(len(strings))],
                             np.eye(game.dim), "completeness")
    return prog, strings


def p_guess_compatible(game: DiscriminationGame, settings: SolverSettings | None = None,
                       cap: int | None = None) -> tuple[float, ParentPovm]:
    """Best guessing probability using a single measurement plus post-processing
    of its outcome with y. Returns the value and the optimal string-indexed POVM."""
    prog, strings = guess_program(game, cap)
    sol = solve(prog, settings)
    if sol.status != OPTIMAL:
        raise SolverError(f"compatible guessing SDP ended with status {sol.status}", sol)
    G = np.stack([sol.primal[f"G/{i}"] for i in range(len(strings))])
    return sol.objective_primal, ParentPovm(strings, G, 1.0)


def advantage(game: DiscriminationGame, M: MeasurementSet,
              settings: SolverSettings | None = None) -> float:
    """P_g(game, M) / P_g^C(game)."""
    return p_guess(game, M) / p_guess_compatible(game, settings)[0]


# -- simulation -------------------------------------------------------------------


def _simulation_program(M: MeasurementSet, Mp: MeasurementSet, y: int) -> ConeProgram:
    """Feasibility LP for producing target setting y of Mp from M.

    Variables R[x, b, a] >= 0 and t[x] >= 0 with
    sum_{x,a} R[x,b,a] M_{a|x} = M'_{b|y},  sum_b R[x,b,a] = t[x],  sum_x t[x] = 1.
    """
    m, o, d = M.shape
    p = Mp.outcomes
    prog = ConeProgram()
    prog.add_nonneg("R", m * p * o)
    prog.add_nonneg("t", m)
    idx = np.arange(m * p * o).reshape(m, p, o)
    for b in range(p):
        mats = np.zeros((m * p * o, d, d), dtype=complex)
        mats[idx[:, b, :].ravel()] = M.elements.reshape(m * o, d, d)
        prog.add_matrix_equality([("R", mats)], Mp.elements[y, b], f"target/{b}")
    rows_R = np.zeros((m * o, m * p * o))
    rows_t = np.zeros((m * o, m))
    for x in range(m):
        for a in range(o):
            r = x * o + a
            rows_R[r, idx[x, :, a]] = 1.0
            rows_t[r, x] = -1.0
    prog.add_rows({"R": rows_R, "t": rows_t}, np.zeros(m * o), "marginal")
    prog.add_rows({"t": np.ones((1, m))}, [1.0], "normalization")
    return prog


def _check_simulation_dims(M: MeasurementSet, Mp: MeasurementSet) -> None:
    if M.dim != Mp.dim:
        raise DimensionError(f"sets act on dimensions {M.dim} and {Mp.dim}")


def is_simulable(M: MeasurementSet, Mp: MeasurementSet, settings: SolverSettings | None = None):
    """Whether Mp is a classical simulation of M; returns ``(flag, kernel or None)``."""
    _check_simulation_dims(M, Mp)
    m, o, _ = M.shape
    p = Mp.outcomes
    tables = []
    for y in range(Mp.settings):
        sol = solve(_simulation_program(M, Mp, y), settings)
        if sol.status == PRIMAL_INFEASIBLE:
            return False, None
        if sol.status != OPTIMAL:
            raise SolverError(f"simulation LP for target {y} ended with status {sol.status}", sol)
        R = np.clip(sol.primal["R"].reshape(m, p, o), 0.0, None)
        tables.append(R)
    table = np.stack(tables)
    # LP residuals are O(eps); renormalize so the kernel marginals hold exactly
    marg = table.sum(axis=2, keepdims=True)
    t = marg.mean(axis=3, keepdims=True)
    t = t / t.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        table = np.where(marg > 0, table / marg * t, 1.0 / p * t)
    return True, SimulationKernel(table)


def separating_game(M: MeasurementSet, Mp: MeasurementSet,
                    settings: SolverSettings | None = None) -> DiscriminationGame:
    """Single-ensemble game on which Mp strictly beats M.

    From a Farkas ray of the simulation LP for some target y we get Hermitian
    W_b with sum_a max_b tr[W_b M_{a|x}] < sum_b tr[W_b M'_{b|y}] for every x.
    Shifting all W_b by the same c*I adds c*d to both sides, so
    W_b + c*I >= 0, normalized, is a valid ensemble with the same strict gap.
    """
    _check_simulation_dims(M, Mp)
    d = M.dim
    for y in range(Mp.settings):
        sol = solve(_simulation_program(M, Mp, y), settings)
        if sol.status == OPTIMAL:
            continue
        if sol.status != PRIMAL_INFEASIBLE:
            raise SolverError(f"simulation LP for target {y} ended with status {sol.status}", sol)
        W = np.stack([
            _ray_matrix(sol, f"target/{b}", d) for b in range(Mp.outcomes)
        ])
        c = max(0.0, -min(min_eigenpair(w)[0] for w in W))
        sigma = hermitian(W + c * np.eye(d))
        traces = np.real(np.trace(sigma, axis1=-2, axis2=-1))
        total = traces.sum()
        if total <= 0:
            raise SolverError("degenerate infeasibility certificate", sol)
        states = np.where(traces[:, None, None] > EPS_TR * total,
                          sigma / np.where(traces > 0, traces, 1.0)[:, None, None],
                          np.eye(d) / d)
        probs = np.where(traces > EPS_TR * total, traces, 0.0)
        game = DiscriminationGame(states[None], (probs / probs.sum())[None], [1.0])
        gap = p_guess(game, Mp) - p_guess(game, M)
        if gap <= GAP_TOL:
            raise SolverError(f"certificate for target {y} gives no strict gap ({gap:.3g})", sol)
        return game
    raise InvariantError("the target set is simulable; no separating game exists")


def _ray_matrix(sol, label: str, d: int) -> np.ndarray:
    try:
        return sol.ray_matrix(label)
    except KeyError:  # every row of the equation vanished identically
        return np.zeros((d, d), dtype=complex)


# -- random instances and audits ----------------------------------------------------


def random_game(d: int, n: int, p: int, seed=None, pure_fraction: float = 0.5) -> DiscriminationGame:
    rng = np.random.default_rng(seed)
    prior = rng.dirichlet(np.ones(n))
    probs = rng.dirichlet(np.ones(p), size=n)
    states = np.empty((n, p, d, d), dtype=complex)
    for y in range(n):
        for b in range(p):
            rank = 1 if rng.random() < pure_fraction else int(rng.integers(1, d + 1))
            states[y, b] = random_density(d, rng, rank)
    return DiscriminationGame(states, probs, prior)


def monotone_audit(M: MeasurementSet, Mp: MeasurementSet, n_games: int = 100, seed=None,
                   settings: SolverSettings | None = None, check_roi: bool = True,
                   slack_games: float = 1e-9, slack_roi: float = 1e-6) -> dict:
    """Check the simulation order against guessing probabilities.

    Simulable pairs: M must do at least as well as Mp on ``n_games`` random
    games, and RoI(M) >= RoI(Mp). Non-simulable pairs: a separating game is
    produced and its gap verified.
    """
    from .incompatibility import roi
    from .serialize import game_to_json

    simulable, kernel = is_simulable(M, Mp, settings)
    report = {"simulable": simulable, "failures": []}
    if simulable:
        rng = np.random.default_rng(seed)
        worst = np.inf
        for _ in range(n_games):
            game = random_game(M.dim, int(rng.integers(1, 4)), int(rng.integers(2, 4)),
                               seed=rng.integers(2**63))
            slack = p_guess(game, M) - p_guess(game, Mp)
            worst = min(worst, slack)
            if slack < -slack_games:
                report["failures"].append({"kind": "p_guess", "slack": slack,
                                           "game": game_to_json(game)})
        report["games_checked"] = n_games
        report["min_slack"] = float(worst) if n_games else None
        if check_roi:
            r_from, r_to = roi(M, settings).value, roi(Mp, settings).value
            report.update(roi_from=r_from, roi_to=r_to, roi_slack=r_from - r_to)
            if r_from - r_to < -slack_roi:
                report["failures"].append({"kind": "roi", "slack": r_from - r_to})
    else:
        game = separating_game(M, Mp, settings)
        gap = p_guess(game, Mp) - p_guess(game, M)
        report["separating_game"] = game_to_json(game)
        report["gap"] = gap
        if gap <= GAP_TOL:
            report["failures"].append({"kind": "gap", "gap": gap})
    report["passed"] = not report["failures"]
    return report


__all__ = [
    "Ensemble", "DiscriminationGame", "p_guess", "optimal_strategy", "score_table",
    "p_guess_compatible", "advantage", "is_simulable", "separating_game",
    "monotone_audit", "random_game", "guess_program", "random_kernel", "apply_simulation",
]
