"""Command-line front end.

Every subcommand reads JSON inputs, writes one JSON (CSV for ``sweep``)
result to ``--out`` or stdout, and exits with 0 on success, 2 on malformed
or invalid input and 3 when a solve or a tolerance check fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import discrimination as disc
from . import incompatibility as inc
from . import oracle, serialize, steering
from .linalg import DimensionError, check_density
from .measurements import (
    InvariantError,
    MeasurementSet,
    fourier_mubs,
    qubit_mubs,
    random_compatible_set,
    random_kernel,
    random_measurement_set,
    apply_simulation,
    smear,
)
from .sdp import SolverError, SolverSettings

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3

ENV_HELP = """\
tolerance defaults can be overridden through the environment:
  INCOMPAT_EPS_GAP, INCOMPAT_EPS_FEAS, INCOMPAT_EPS_PSD, INCOMPAT_EPS_INFEAS,
  INCOMPAT_RAY_THRESHOLD, INCOMPAT_MAX_ITERS, INCOMPAT_STEP_FRACTION
command-line flags take precedence over the environment.
"""

FAMILIES = {
    "zx": lambda: qubit_mubs("ZX"),
    "zxy": lambda: qubit_mubs("ZXY"),
    "fourier3": lambda: fourier_mubs(3),
}


class ToleranceError(RuntimeError):
    """A result was produced but fails an independent check."""


@dataclass
class RunConfig:
    command: str
    inputs: dict = field(default_factory=dict)
    out: str | None = None
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    oracle: bool = False
    restarts: int = 50
    sweep: dict = field(default_factory=dict)
    jobs: int = 1
    audit: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.tolerances.items():
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.sweep and self.sweep["steps"] < 1:
            raise ValueError("steps must be at least 1")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")

    def settings(self) -> SolverSettings:
        return SolverSettings.from_env(**self.tolerances)


# -- input helpers -----------------------------------------------------------------


def _load_mset(path: str) -> MeasurementSet:
    return serialize.mset_from_json(serialize.load(path))


def _load_state(path: str) -> np.ndarray:
    data = serialize.load(path)
    return check_density(serialize.matrix_from_json(data.get("state", data), "state"))


def _detect(data) -> str:
    if not isinstance(data, dict):
        raise serialize.FormatError("top-level JSON value must be an object")
    for key, kind in (("povms", "mset"), ("ensembles", "game"), ("assemblage", "assemblage"),
                      ("re", "state"), ("state", "state")):
        if key in data:
            return kind
    raise serialize.FormatError(
        "cannot tell the input kind: expected one of the fields 'povms', 'ensembles', "
        "'assemblage' or 're'"
    )


# -- subcommands -------------------------------------------------------------------


def cmd_validate(cfg: RunConfig) -> dict:
    data = serialize.load(cfg.inputs["in"])
    kind = _detect(data)
    if kind == "mset":
        M = serialize.mset_from_json(data, validate=False)
        residuals = M.residuals()
        M.validate()
    elif kind == "game":
        game = serialize.game_from_json(data)
        residuals = {"prior_sum": float(game.prior.sum()),
                     "min_state_eigenvalue": float(np.linalg.eigvalsh(game.states)[..., 0].min())}
    elif kind == "assemblage":
        A = serialize.assemblage_from_json(data)
        residuals = A.residuals()
    else:
        rho = serialize.matrix_from_json(data.get("state", data), "state")
        residuals = {"min_eigenvalue": float(np.linalg.eigvalsh(rho)[0]),
                     "trace_error": float(abs(np.trace(rho).real - 1.0))}
        check_density(rho)
    return {"kind": kind, "valid": True, "residuals": {k: _jsonable(v) for k, v in residuals.items()}}


def cmd_roi(cfg: RunConfig) -> dict:
    M = _load_mset(cfg.inputs["in"])
    res = inc.roi(M, cfg.settings())
    out = serialize.roi_to_json(res)
    res.dual.validate()
    res.primal.validate()
    if cfg.oracle:
        m, o, _ = M.shape
        if o ** m > 16:
            raise ValueError(f"--oracle needs o^m <= 16, got {o}^{m}")
        found, _ = oracle.brute_jm(M, cfg.restarts, cfg.seed)
        out["oracle"] = {"parent_found": found, "restarts": cfg.restarts}
        if found and res.value > 1e-6:
            raise ToleranceError(f"local search found a parent but RoI = {res.value:.6g}")
    return out


def cmd_build_game(cfg: RunConfig) -> dict:
    data = serialize.load(cfg.inputs["in"])
    if not isinstance(data, dict) or "dual" not in data:
        raise serialize.FormatError("RoI result: missing field 'dual'")
    w = serialize.witness_from_json(data["dual"]).validate()
    return serialize.game_to_json(inc.optimal_game_from_dual(w))


def cmd_play(cfg: RunConfig) -> dict:
    M = _load_mset(cfg.inputs["mset"])
    game = serialize.game_from_json(serialize.load(cfg.inputs["game"]), dim=M.dim)
    pg = disc.p_guess(game, M)
    pgc, _ = disc.p_guess_compatible(game, cfg.settings())
    out = {"p_guess": pg, "p_guess_compatible": pgc, "advantage": pg / pgc}
    if cfg.oracle:
        brute = oracle.brute_pguess(game, M)
        lower = oracle.brute_compatible(game, cfg.restarts, cfg.seed)
        out["oracle"] = {"p_guess": brute, "p_guess_compatible_lower": lower}
        if abs(brute - pg) > 1e-12:
            raise ToleranceError(f"p_guess {pg!r} disagrees with enumeration {brute!r}")
        if pgc < lower - 1e-4:
            raise ToleranceError(f"compatible SDP {pgc:.10g} below local search {lower:.10g}")
    return out


def cmd_simulable(cfg: RunConfig) -> dict:
    M = _load_mset(cfg.inputs["from"])
    Mp = _load_mset(cfg.inputs["to"])
    st = cfg.settings()
    ok, kernel = disc.is_simulable(M, Mp, st)
    if ok:
        return {"simulable": True, "kernel": serialize.kernel_to_json(kernel)}
    game = disc.separating_game(M, Mp, st)
    return {"simulable": False, "separating_game": serialize.game_to_json(game),
            "gap": disc.p_guess(game, Mp) - disc.p_guess(game, M)}


def cmd_steer(cfg: RunConfig) -> dict:
    M = _load_mset(cfg.inputs["mset"])
    rho = _load_state(cfg.inputs["state"])
    st = cfg.settings()
    A = steering.assemblage_from(rho, M)
    src = steering.consistent_steering_robustness(A, st)
    value = inc.roi(M, st).value
    return {"lhs": steering.lhs_feasibility(A, st), "src_value": src, "roi_value": value,
            "gap": value - src}


def _sweep_row(args) -> list:
    elements, eta, settings = args
    M = smear(MeasurementSet(elements), eta)
    try:
        r = inc.roi(M, settings)
        return [eta, r.value, r.gap, "optimal"]
    except SolverError as exc:
        status = exc.solution.status if exc.solution is not None else "gap_exceeded"
        return [eta, float("nan"), float("nan"), status]


def cmd_sweep(cfg: RunConfig) -> str:
    sw = cfg.sweep
    if cfg.inputs.get("in"):
        M = _load_mset(cfg.inputs["in"])
    else:
        M = FAMILIES[sw["family"]]()
    etas = np.linspace(sw["start"], sw["stop"], sw["steps"]) if sw["steps"] > 1 else [sw["start"]]
    for eta in etas:
        if not 0.0 <= eta <= 1.0:
            raise ValueError(f"noise parameter {eta} outside [0, 1]")
    work = [(M.elements, float(eta), cfg.settings()) for eta in etas]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            rows = list(pool.map(_sweep_row, work))  # map keeps step order
    else:
        rows = [_sweep_row(w) for w in work]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["param", "value", "gap", "status"])
    for eta, value, gap, status in rows:
        writer.writerow([_fmt(eta), _fmt(value), _fmt(gap), status])
    failed = [r for r in rows if r[3] != "optimal"]
    if failed:
        raise PartialFailure(buf.getvalue(), f"{len(failed)} of {len(rows)} sweep steps failed")
    return buf.getvalue()


def cmd_audit(cfg: RunConfig) -> dict:
    """Seeded end-to-end run over random instances; every randomness source
    derives from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    st = cfg.settings()
    n_sets, n_games = cfg.audit["sets"], cfg.audit["games"]

    def child():
        return int(rng.integers(2**63))

    sets = []
    for _ in range(n_sets):
        d, m = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        M = random_measurement_set(d, m, 2, seed=child())
        r = inc.roi(M, st)
        game = inc.optimal_game_from_dual(r.dual)
        adv = disc.advantage(game, M, st)
        random_adv = max(disc.advantage(disc.random_game(d, m, 2, seed=child()), M, st)
                         for _ in range(n_games))
        sets.append({"dim": d, "settings": m, "roi": r.value, "gap": r.gap,
                     "optimal_advantage": adv, "best_random_advantage": random_adv,
                     "passed": abs(adv - (1 + r.value)) <= 1e-5 and random_adv <= 1 + r.value + 1e-6})
    compatible = []
    for _ in range(n_sets):
        d, m, o = (int(v) for v in rng.integers(2, 4, size=3))
        r = inc.roi(random_compatible_set(d, m, o, seed=child()), st)
        compatible.append({"dim": d, "settings": m, "outcomes": o, "roi": r.value,
                           "passed": r.value <= 1e-6})
    pairs = []
    for _ in range(n_sets):
        M = random_measurement_set(2, 2, 2, seed=child())
        Mp = apply_simulation(M, random_kernel(2, 2, 2, 2, seed=child()))
        rep = disc.monotone_audit(M, Mp, n_games, seed=child(), settings=st)
        pairs.append({"simulable": rep["simulable"], "min_slack": rep["min_slack"],
                      "roi_slack": rep["roi_slack"], "passed": rep["passed"]})
    steer = []
    for _ in range(n_sets):
        d = int(rng.integers(2, 4))
        M = random_measurement_set(d, 2, 2, seed=child())
        rho = steering.random_entangled_pure(d, seed=child())
        src = steering.consistent_steering_robustness(steering.assemblage_from(rho, M), st)
        value = inc.roi(M, st).value
        steer.append({"dim": d, "src": src, "roi": value, "passed": abs(src - value) <= 1e-5})
    sections = {"incompatible": sets, "compatible": compatible, "simulation": pairs, "steering": steer}
    passed = all(entry["passed"] for rows in sections.values() for entry in rows)
    return {"seed": cfg.seed, **sections, "passed": passed}


COMMANDS = {
    "validate": cmd_validate, "roi": cmd_roi, "build-game": cmd_build_game, "play": cmd_play,
    "simulable": cmd_simulable, "steer": cmd_steer, "sweep": cmd_sweep, "audit": cmd_audit,
}


# -- plumbing ----------------------------------------------------------------------


class PartialFailure(RuntimeError):
    """Output was produced but some steps failed."""

    def __init__(self, output: str, message: str):
        super().__init__(message)
        self.output = output


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else repr(serialize.num(v))


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return serialize.num(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(cfg: RunConfig) -> int:
    try:
        result = COMMANDS[cfg.command](cfg)
    except (serialize.FormatError, InvariantError, DimensionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PartialFailure as exc:
        _emit(exc.output, cfg.out)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SolverError, ToleranceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        sol = getattr(exc, "solution", None)
        if sol is not None:
            print(f"  status {sol.status}, iterations {sol.iterations}, "
                  f"primal residual {sol.primal_residual:.3g}, dual residual {sol.dual_residual:.3g}, "
                  f"gap {sol.gap:.3g}", file=sys.stderr)
        return EXIT_SOLVER
    text = result if isinstance(result, str) else serialize.dumps(_jsonable(result))
    _emit(text, cfg.out)
    if isinstance(result, dict) and result.get("passed") is False:
        print("audit: some checks failed", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="incompat", description="Robustness of incompatibility, discrimination games and steering.",
        epilog=ENV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, oracle=False):
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--eps-gap", type=float, help="relative duality gap tolerance")
        p.add_argument("--eps-feas", type=float, help="equality residual tolerance")
        p.add_argument("--eps-psd", type=float, help="negative eigenvalue tolerance")
        p.add_argument("--max-iters", type=int, help="interior-point iteration limit")
        if seed or oracle:
            p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
        if oracle:
            p.add_argument("--oracle", action="store_true", help="cross-check with brute-force references")
            p.add_argument("--restarts", type=int, default=50, help="local-search restarts for --oracle")
        return p

    common(sub.add_parser("validate", help="check a measurement set, game, assemblage or state"))\
        .add_argument("--in", dest="in_", required=True)
    p = common(sub.add_parser("roi", help="robustness of incompatibility with primal and dual"), oracle=True)
    p.add_argument("--in", dest="in_", required=True, help="measurement set JSON")
    p = common(sub.add_parser("build-game", help="optimal game from an roi result"))
    p.add_argument("--in", dest="in_", required=True, help="output of the roi command")
    p = common(sub.add_parser("play", help="guessing probabilities and advantage"), oracle=True)
    p.add_argument("--game", required=True)
    p.add_argument("--mset", required=True)
    p = common(sub.add_parser("simulable", help="decide whether --to is a simulation of --from"))
    p.add_argument("--from", dest="from_", required=True)
    p.add_argument("--to", required=True)
    p = common(sub.add_parser("steer", help="steering robustness of a state with a measurement set"))
    p.add_argument("--state", required=True, help="bipartite density matrix; Alice's dimension is the set's")
    p.add_argument("--mset", required=True)
    p = common(sub.add_parser("sweep", help="RoI of eta*M + (1-eta)*trivial over a grid, as CSV"))
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="in_", help="measurement set JSON")
    src.add_argument("--family", choices=sorted(FAMILIES), help="built-in measurement set")
    p.add_argument("--param", default="eta", choices=["eta"])
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--stop", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=21)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p = common(sub.add_parser("audit", help="seeded end-to-end checks on random instances"), seed=True)
    p.add_argument("--sets", type=int, default=4, help="instances per section")
    p.add_argument("--games", type=int, default=20, help="random games per instance")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    inputs = {k.rstrip("_"): v for k, v in vars(ns).items()
              if k in ("in_", "game", "mset", "from_", "to", "state") and v is not None}
    tolerances = {"eps_gap": ns.eps_gap, "eps_feas": ns.eps_feas, "eps_psd": ns.eps_psd,
                  "max_iters": ns.max_iters}
    sweep = {}
    if ns.command == "sweep":
        sweep = {"family": ns.family, "param": ns.param, "start": ns.start, "stop": ns.stop,
                 "steps": ns.steps}
    audit = {"sets": ns.sets, "games": ns.games} if ns.command == "audit" else {}
    return RunConfig(ns.command, inputs, ns.out, tolerances, getattr(ns, "seed", 0),
                     getattr(ns, "oracle", False), getattr(ns, "restarts", 50), sweep,
                     getattr(ns, "jobs", 1), audit)


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
