"""Primal-dual interior-point method for :class:`ConeProgram`.

Homogeneous self-dual embedding of the standard form
``min c.x  s.t.  A x = b,  x_K in K,  x_F free`` with Nesterov-Todd scaling
and a Mehrotra predictor-corrector step. The cone K is a product of a
nonnegative orthant and real PSD blocks; complex blocks reach the solver
through :func:`realify`. Matrix blocks are held in scaled ``svec`` form so
Euclidean dot products equal trace inner products, and equal-size blocks are
processed as one stacked array.

Each Newton step reduces to a saddle system
``[[A_K W'W A_K', A_F], [A_F', 0]]`` of size (rows + free vars), factored
once per iteration.
"""

from __future__ import annotations

import functools
import logging
import os
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.linalg as sla

from ..linalg import vec_to_herm
from .program import FREE, NONNEG, PSD, ConeProgram, realify, unembed

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"
NUMERICAL_FAILURE = "numerical_failure"


class SolverError(RuntimeError):
    """Raised by callers that need an optimal solution and did not get one."""

    def __init__(self, message: str, solution: "ConeSolution | None" = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class SolverSettings:
    eps_gap: float = 1e-8
    eps_feas: float = 1e-8
    eps_psd: float = 1e-8
    eps_infeas: float = 1e-9
    ray_threshold: float = 1e6
    max_iters: int = 200
    dim_cap: int = 20000
    step_fraction: float = 0.99

    def __post_init__(self):
        for name in ("eps_gap", "eps_feas", "eps_psd", "eps_infeas"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    @classmethod
    def from_env(cls, **overrides) -> "SolverSettings":
        """Defaults, then ``INCOMPAT_<FIELD>`` environment variables, then ``overrides``."""
        values = {}
        for f in fields(cls):
            raw = os.environ.get(f"INCOMPAT_{f.name.upper()}")
            if raw is not None:
                values[f.name] = int(raw) if f.type in ("int", int) else float(raw)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class ConeSolution:
    status: str
    primal: dict = field(default_factory=dict)
    dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_slack: dict = field(default_factory=dict)
    objective_primal: float = float("nan")
    objective_dual: float = float("nan")
    gap: float = float("nan")
    iterations: int = 0
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    # primal_infeasible: row multipliers y with b.y = 1 and -A*y in K*
    # dual_infeasible: block values of an improving primal ray
    certificate: object = None
    program: ConeProgram | None = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def group_dual(self, label: str) -> np.ndarray:
        return self.dual[self.program.group_slice(label)]

    def group_dual_matrix(self, label: str) -> np.ndarray:
        return self.program.group_matrix(label, self.group_dual(label))

    def ray_for(self, label: str) -> np.ndarray:
        """Rows of the primal-infeasibility ray belonging to one group."""
        return np.asarray(self.certificate)[self.program.group_slice(label)]

    def ray_matrix(self, label: str) -> np.ndarray:
        return self.program.group_matrix(label, self.ray_for(label))


# -- svec machinery -------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _svec_index(n: int):
    iu, ju = np.triu_indices(n)
    scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
    # S with svec(X) = S vec(X) and vec(X) = S' svec(X) for symmetric X
    t = len(iu)
    s = np.zeros((t, n * n))
    for k, (i, j) in enumerate(zip(iu, ju)):
        if i == j:
            s[k, i * n + j] = 1.0
        else:
            s[k, i * n + j] = s[k, j * n + i] = 1.0 / np.sqrt(2.0)
    return iu, ju, scale, s


def svec(x: np.ndarray) -> np.ndarray:
    iu, ju, scale, _ = _svec_index(x.shape[-1])
    return np.real(x[..., iu, ju]) * scale


def smat(v: np.ndarray, n: int) -> np.ndarray:
    iu, ju, scale, _ = _svec_index(n)
    out = np.zeros(v.shape[:-1] + (n, n))
    vals = v / scale
    out[..., iu, ju] = vals
    out[..., ju, iu] = vals
    return out


def _sym(x):
    return 0.5 * (x + np.swapaxes(x, -1, -2))


# -- lowering ---------------------------------------------------------------


@dataclass
class _Layout:
    n: int
    free: np.ndarray
    nonneg: np.ndarray
    psd: list  # (size, count, offset)
    blocks: dict  # name -> (kind, offset, size)

    @property
    def degree(self) -> int:
        return len(self.nonneg) + sum(n * k for n, k, _ in self.psd)

    @property
    def cone_slice(self) -> slice:
        return slice(len(self.free), self.n)


def _lower(p: ConeProgram):
    """Real data (c, A, b) and variable layout: [free | nonneg | psd by size]."""
    free = [b for b in p.blocks.values() if b.kind == FREE]
    nonneg = [b for b in p.blocks.values() if b.kind == NONNEG]
    psd = [b for b in p.blocks.values() if b.kind == PSD]
    offsets = {}
    pos = 0
    for b in free + nonneg:
        offsets[b.name] = (b.kind, pos, b.size)
        pos += b.size
    nf = sum(b.size for b in free)
    psd_groups = []
    for size in sorted({b.size for b in psd}):
        members = [b for b in psd if b.size == size]
        t = size * (size + 1) // 2
        psd_groups.append((size, len(members), pos))
        for b in members:
            offsets[b.name] = (PSD, pos, size)
            pos += t
    n = pos
    layout = _Layout(n, np.arange(nf), np.arange(nf, nf + sum(b.size for b in nonneg)),
                     psd_groups, offsets)

    def vec_coeff(name, coeff):
        kind, _, size = offsets[name]
        if kind == PSD:
            return svec(_sym(np.real(coeff)))
        return np.asarray(coeff, dtype=float)

    c = np.zeros(n)
    for name, coeff in p.objective.items():
        _, off, size = offsets[name]
        v = vec_coeff(name, coeff)
        c[off:off + v.shape[-1]] += v
    A = np.zeros((p.nrows, n))
    b = np.zeros(p.nrows)
    r0 = 0
    for g in p.groups:
        for name, coeff in g.coeffs.items():
            _, off, size = offsets[name]
            v = vec_coeff(name, coeff)
            A[r0:r0 + g.nrows, off:off + v.shape[-1]] += v
        b[r0:r0 + g.nrows] = g.rhs
        r0 += g.nrows
    if p.sense == "max":
        c = -c
    return c, A, b, layout


def _read_blocks(p: ConeProgram, layout: _Layout, x: np.ndarray, dual: bool = False) -> dict:
    out = {}
    for name, block in p.blocks.items():
        kind, off, size = layout.blocks[name]
        if kind == PSD:
            t = size * (size + 1) // 2
            m = smat(x[off:off + t], size)
            if name in p.realified:
                m = unembed(m) * (2.0 if dual else 1.0)
            out[name] = m
        elif name in p.hermitian_free:
            out[name] = vec_to_herm(x[off:off + size], p.hermitian_free[name])
        else:
            out[name] = x[off:off + size].copy()
    return out


# -- cone operations ----------------------------------------------------------


def _factor(X: np.ndarray) -> np.ndarray:
    """L with X = L L' for a stack of symmetric matrices.

    Cholesky when it succeeds; otherwise a symmetric square root with
    eigenvalues floored relative to the largest, which absorbs round-off
    that pushes nearly singular iterates just outside the cone.
    """
    try:
        return np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(X)
        floor = 1e-15 * np.maximum(w[:, -1:], 1e-300)
        w = np.maximum(w, floor)
        return v * np.sqrt(w)[:, None, :]


class _Scaling:
    """Nesterov-Todd scaling of (x, z) on the cone part, stacked per block size."""

    def __init__(self, layout: _Layout, x: np.ndarray, z: np.ndarray):
        self.layout = layout
        nl = layout.nonneg
        self.xl, self.zl = x[nl], z[nl]
        self.lam_l = np.sqrt(self.xl * self.zl)
        self.w2_l = self.xl / self.zl
        self.groups = []
        for size, count, off in layout.psd:
            t = size * (size + 1) // 2
            X = smat(x[off:off + count * t].reshape(count, t), size)
            Z = smat(z[off:off + count * t].reshape(count, t), size)
            Lx = _factor(X)
            Lz = _factor(Z)
            _, lam, vt = np.linalg.svd(np.swapaxes(Lz, -1, -2) @ Lx)
            R = (Lx @ np.swapaxes(vt, -1, -2)) / np.sqrt(lam)[:, None, :]
            Rinv = np.linalg.inv(R)
            P = R @ np.swapaxes(R, -1, -2)
            self.groups.append((size, count, off, t, lam, R, Rinv, P))

    def _each(self, v: np.ndarray):
        for size, count, off, t, lam, R, Rinv, P in self.groups:
            yield (size, count, off, t, lam, R, Rinv, P,
                   smat(v[off:off + count * t].reshape(count, t), size))

    def _put(self, out, off, count, t, mats):
        out[off:off + count * t] = svec(_sym(mats)).reshape(-1)

    def lam_vec(self) -> np.ndarray:
        """lambda as a cone vector (diagonal matrices for psd blocks)."""
        out = np.zeros(self.layout.n)
        out[self.layout.nonneg] = self.lam_l
        for size, count, off, t, lam, *_ in self.groups:
            mats = np.zeros((count, size, size))
            idx = np.arange(size)
            mats[:, idx, idx] = lam
            self._put(out, off, count, t, mats)
        return out

    def wtw(self, v: np.ndarray) -> np.ndarray:
        """W'W v: the map X -> P X P (nonneg: x/z * v)."""
        out = np.zeros_like(v)
        out[self.layout.nonneg] = self.w2_l * v[self.layout.nonneg]
        for size, count, off, t, lam, R, Rinv, P, V in self._each(v):
            self._put(out, off, count, t, P @ V @ P)
        return out

    def w_inv_t(self, v):
        """W^{-T} v = R^{-1} V R^{-T} (scales primal directions)."""
        out = np.zeros_like(v)
        nl = self.layout.nonneg
        out[nl] = v[nl] / np.sqrt(self.w2_l)
        for size, count, off, t, lam, R, Rinv, P, V in self._each(v):
            self._put(out, off, count, t, Rinv @ V @ np.swapaxes(Rinv, -1, -2))
        return out

    def w(self, v):
        """W v = R' V R (scales dual directions)."""
        out = np.zeros_like(v)
        nl = self.layout.nonneg
        out[nl] = v[nl] * np.sqrt(self.w2_l)
        for size, count, off, t, lam, R, Rinv, P, V in self._each(v):
            self._put(out, off, count, t, np.swapaxes(R, -1, -2) @ V @ R)
        return out

    def w_inv(self, v):
        """W^{-1} v = R^{-T} V R^{-1}."""
        out = np.zeros_like(v)
        nl = self.layout.nonneg
        out[nl] = v[nl] / np.sqrt(self.w2_l)
        for size, count, off, t, lam, R, Rinv, P, V in self._each(v):
            self._put(out, off, count, t, np.swapaxes(Rinv, -1, -2) @ V @ Rinv)
        return out

    def lam_div(self, v):
        """Solve lambda o u = v for u (Jordan product, lambda diagonal)."""
        out = np.zeros_like(v)
        nl = self.layout.nonneg
        out[nl] = v[nl] / self.lam_l
        for size, count, off, t, lam, R, Rinv, P, V in self._each(v):
            denom = 0.5 * (lam[:, :, None] + lam[:, None, :])
            self._put(out, off, count, t, V / denom)
        return out

    def normal_matrix(self, A: np.ndarray) -> np.ndarray:
        """A_K W'W A_K'."""
        nl = self.layout.nonneg
        Al = A[:, nl]
        M = (Al * self.w2_l) @ Al.T
        for size, count, off, t, lam, R, Rinv, P in self.groups:
            _, _, _, S = _svec_index(size)
            kron = np.einsum("kij,kab->kiajb", P, P).reshape(count, size * size, size * size)
            Q = S @ kron @ S.T
            Ag = A[:, off:off + count * t].reshape(-1, count, t)
            B = np.einsum("rkt,kts->rks", Ag, Q).reshape(A.shape[0], count * t)
            M += B @ Ag.reshape(A.shape[0], count * t).T
        return M


def _jordan(layout: _Layout, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    nl = layout.nonneg
    out[nl] = u[nl] * v[nl]
    for size, count, off, in layout.psd:
        t = size * (size + 1) // 2
        U = smat(u[off:off + count * t].reshape(count, t), size)
        V = smat(v[off:off + count * t].reshape(count, t), size)
        out[off:off + count * t] = svec(_sym(U @ V)).reshape(-1)
    return out


def _identity(layout: _Layout) -> np.ndarray:
    e = np.zeros(layout.n)
    e[layout.nonneg] = 1.0
    for size, count, off in layout.psd:
        t = size * (size + 1) // 2
        e[off:off + count * t] = np.tile(svec(np.eye(size)), count)
    return e


def _max_step(sc: _Scaling, d_scaled: np.ndarray) -> float:
    """Largest alpha with lambda + alpha * d in the cone (d in scaled coordinates)."""
    layout = sc.layout
    worst = 0.0
    nl = layout.nonneg
    if len(nl):
        worst = max(worst, float(np.max(-d_scaled[nl] / sc.lam_l)))
    for size, count, off, t, lam, R, Rinv, P, D in sc._each(d_scaled):
        s = 1.0 / np.sqrt(lam)
        Dn = D * s[:, :, None] * s[:, None, :]
        worst = max(worst, float(-np.min(np.linalg.eigvalsh(Dn)[:, 0])))
    return np.inf if worst <= 0 else 1.0 / worst


# -- main loop ------------------------------------------------------------------


def solve(program: ConeProgram, settings: SolverSettings | None = None) -> ConeSolution:
    """Solve a conic program; the returned status is one of optimal,
    primal_infeasible, dual_infeasible or numerical_failure."""
    settings = settings or SolverSettings()
    if program.real_dimension() > settings.dim_cap:
        raise ValueError(
            f"program has real dimension {program.real_dimension()} > cap {settings.dim_cap}"
        )
    p = realify(program)
    c, A0, b0, layout = _lower(p)
    sol = _solve_lowered(c, A0, b0, layout, settings)
    sign = -1.0 if program.sense == "max" else 1.0
    sol_x, sol_y, sol_z = sol.pop("x"), sol.pop("y"), sol.pop("z")
    out = ConeSolution(status=sol["status"], iterations=sol["iterations"], program=program,
                       primal_residual=sol.get("pres", np.nan),
                       dual_residual=sol.get("dres", np.nan))
    if sol["status"] in (OPTIMAL, NUMERICAL_FAILURE) and sol_x is not None:
        out.primal = _read_blocks(p, layout, sol_x)
        out.dual_slack = _read_blocks(p, layout, sol_z, dual=True)
        out.dual = sign * sol_y
        out.objective_primal = sign * float(c @ sol_x)
        out.objective_dual = sign * float(b0 @ sol_y)
        out.gap = abs(out.objective_primal - out.objective_dual)
    elif sol["status"] == PRIMAL_INFEASIBLE:
        out.certificate = sol["ray"]
    elif sol["status"] == DUAL_INFEASIBLE:
        out.certificate = _read_blocks(p, layout, sol["ray"])
    log.debug("solve: %s in %d iterations, gap %.2e", out.status, out.iterations, out.gap)
    return out


def _reduce_rows(A: np.ndarray, b: np.ndarray):
    """Orthonormalize the row space of A; detect inconsistent rows."""
    if A.shape[0] == 0:
        return A, b, np.zeros((0, 0)), None
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    tol = max(A.shape) * np.finfo(float).eps * 1e3 * (s[0] if len(s) else 0.0)
    r = int(np.sum(s > tol))
    U, s, Vt = U[:, :r], s[:r], Vt[:r]
    b_perp = b - U @ (U.T @ b)
    if np.linalg.norm(b_perp) > 1e-9 * (1.0 + np.linalg.norm(b)):
        ray = b_perp / (b_perp @ b)
        return None, None, None, ray
    # y_original = U diag(1/s) y_reduced
    back = U / s
    return Vt, (U.T @ b) / s, back, None


def _solve_lowered(c, A0, b0, layout: _Layout, st: SolverSettings) -> dict:
    A, b, back, ray = _reduce_rows(A0, b0)
    if ray is not None:
        return {"status": PRIMAL_INFEASIBLE, "iterations": 0, "ray": ray,
                "x": None, "y": None, "z": None}
    n, m = layout.n, A.shape[0]
    F = layout.free
    K = layout.cone_slice
    A_F = A[:, F]
    c_F = c[F]
    nf = len(F)
    deg = layout.degree

    e = _identity(layout)
    x = e.copy()
    z = e.copy()
    y = np.zeros(m)
    tau = kappa = 1.0
    # residuals are measured entrywise (max norm), relative to the data
    nb, nc = max(1.0, np.max(np.abs(b0), initial=0.0)), max(1.0, np.max(np.abs(c), initial=0.0))

    def embedded(v_top, v_free):
        return np.concatenate([v_top, v_free])

    result = {"status": NUMERICAL_FAILURE, "x": None, "y": None, "z": None, "iterations": 0}
    best = None
    for it in range(st.max_iters + 1):
        rp = A @ x - b * tau
        rd = A.T @ y + z - c * tau
        rg = b @ y - c @ x - kappa
        mu = (x[K] @ z[K] + tau * kappa) / (deg + 1)

        xs, ys, zs = x / tau, y / tau, z / tau
        pobj, dobj = c @ xs, b @ ys
        y_orig = back @ ys
        pres = np.max(np.abs(A0 @ xs - b0), initial=0.0) / nb
        dres = np.max(np.abs(A0.T @ y_orig + zs - c), initial=0.0) / nc
        gap = abs(pobj - dobj)
        cur = {"x": xs, "y": y_orig, "z": zs, "iterations": it, "pres": pres, "dres": dres}
        score = max(pres, dres, gap / (1.0 + abs(pobj)))
        if best is None or score < best[0]:
            best = (score, cur)
        if pres <= st.eps_feas and dres <= st.eps_feas and gap <= st.eps_gap * (1.0 + abs(pobj)):
            return {"status": OPTIMAL, **cur}
        if max(pres, dres) <= POLISH_WINDOW * st.eps_feas:
            polished = _polish(xs, ys, c, A, b, A0, b0, back, layout, nb, nc, st)
            if polished is not None:
                return {"status": OPTIMAL, "iterations": it, **polished}
        by = b @ y
        if by > 0:
            cert_res = np.linalg.norm(A.T @ y + z) / by
            if cert_res <= st.eps_infeas and by / tau >= st.ray_threshold:
                ray = back @ y
                ray = ray / (b0 @ ray)
                return {"status": PRIMAL_INFEASIBLE, "iterations": it, "ray": ray,
                        "x": None, "y": None, "z": None}
        cx = c @ x
        if cx < 0:
            cert_res = np.linalg.norm(A @ x) / -cx
            if cert_res <= st.eps_infeas and -cx / tau >= st.ray_threshold:
                return {"status": DUAL_INFEASIBLE, "iterations": it, "ray": x / -cx,
                        "x": None, "y": None, "z": None}
        if it == st.max_iters:
            break

        try:
            sc = _Scaling(layout, x, z)
        except np.linalg.LinAlgError:
            log.debug("scaling failed at iteration %d", it)
            break
        lam = sc.lam_vec()
        Mn = sc.normal_matrix(A)
        KKT = np.zeros((m + nf, m + nf))
        KKT[:m, :m] = Mn
        KKT[:m, m:] = A_F
        KKT[m:, :m] = A_F.T
        # static regularization keeps the factorization stable at degenerate
        # optima; refinement against the exact matrix removes its bias
        KKT_reg = KKT.copy()
        diag = np.arange(m)
        KKT_reg[diag, diag] += REGULARIZATION * np.maximum(np.abs(np.diag(Mn)), 1e-300)
        KKT_reg[m:, m:] -= REGULARIZATION * np.eye(nf)
        try:
            lu = sla.lu_factor(KKT_reg, check_finite=False)
            if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) == 0:
                raise np.linalg.LinAlgError

            def base_solve(r):
                return sla.lu_solve(lu, r, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            pinv = np.linalg.pinv(KKT)
            base_solve = lambda r: pinv @ r  # noqa: E731

        def kkt_solve(r):
            u = base_solve(r)
            for _ in range(REFINE_STEPS):
                u = u + base_solve(r - KKT @ u)
            return u

        cK_full = np.zeros(n)
        cK_full[K] = c[K]
        wc = sc.wtw(cK_full)
        sol2 = kkt_solve(embedded(b + A @ wc, c_F))
        dy2 = sol2[:m]
        u2 = _cone_only(A.T @ dy2, layout) - cK_full
        dx2 = sc.wtw(u2)
        dx2[F] = sol2[m:]
        # b.dy2 - c.dx2 = |W u2|^2 on the exact solution; the scaled form
        # avoids cancelling terms of size |W|^2 near the optimum
        wu2 = sc.w(u2)
        den = wu2 @ wu2 + kappa / tau

        def newton(r1, r2, r3, q, r_tau):
            """Solve the linearized embedding for right-hand sides
            A dx - b dtau = r1, A'dy + dz - c dtau = r2, b.dy - c.dx - dkappa = r3,
            W^-T dx + W dz = q, kappa dtau + tau dkappa = r_tau."""
            inner = sc.w_inv(q) - _cone_only(r2, layout)
            sol1 = kkt_solve(embedded(r1 - A @ sc.wtw(inner), r2[F]))
            dy1 = sol1[:m]
            a1 = _cone_only(A.T @ dy1, layout)
            dx1 = sc.wtw(a1 + inner)
            dx1[F] = sol1[m:]
            # r3 + r_tau/tau - b.dy1 + c.dx1, rewritten through the KKT equations
            num = (r3 + r_tau / tau + dy2 @ r1 - r2[F] @ dx2[F]
                   - wu2 @ (2.0 * sc.w(a1) + sc.w(inner)))
            dtau = num / den
            dx = dx1 + dtau * dx2
            dy = dy1 + dtau * dy2
            # dz from the linearized dual equality keeps the dual residual on track
            dz = _cone_only(r2 - A.T @ dy + c * dtau, layout)
            dkappa = (r_tau - kappa * dtau) / tau
            return dx, dy, dz, dtau, dkappa

        def direction(eta, q, r_tau):
            r1, r2, r3 = -eta * rp, -eta * rd, -eta * rg
            dx, dy, dz, dtau, dkappa = newton(r1, r2, r3, q, r_tau)
            # iterative refinement on the full system
            for _ in range(REFINE_STEPS):
                e1 = r1 - (A @ dx - b * dtau)
                e2 = np.zeros(n)
                e2[F] = r2[F] - (A_F.T @ dy - c_F * dtau)
                e3 = r3 - (b @ dy - c @ dx - dkappa)
                e4 = q - sc.w_inv_t(_cone_only(dx, layout)) - sc.w(dz)
                cx, cy, cz, ct, ck = newton(e1, e2, e3, e4, 0.0)
                dx, dy, dz, dtau, dkappa = dx + cx, dy + cy, dz + cz, dtau + ct, dkappa + ck
            dxs = sc.w_inv_t(_cone_only(dx, layout))
            dzs = sc.w(dz)
            return dx, dy, dz, dtau, dkappa, dxs, dzs

        def step_length(dxs, dzs, dtau, dkappa):
            a = min(_max_step(sc, dxs), _max_step(sc, dzs))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        q_aff = -lam
        dx, dy, dz, dtau, dkappa, dxs, dzs = direction(1.0, q_aff, -tau * kappa)
        a_aff = min(1.0, step_length(dxs, dzs, dtau, dkappa))
        mu_aff = (((x + a_aff * dx)[K] @ (z + a_aff * dz)[K])
                  + (tau + a_aff * dtau) * (kappa + a_aff * dkappa)) / (deg + 1)
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector
        rc = sigma * mu * e - _jordan(layout, lam, lam) - _jordan(layout, dxs, dzs)
        q = sc.lam_div(rc)
        r_tau = sigma * mu - tau * kappa - dtau * dkappa
        dx, dy, dz, dtau, dkappa, dxs, dzs = direction(1.0 - sigma, q, r_tau)
        alpha = min(1.0, st.step_fraction * step_length(dxs, dzs, dtau, dkappa))
        if alpha < 0.1:
            # lost centrality: drop the second-order term and recentre harder
            sigma = max(sigma, 0.5)
            q = sc.lam_div(sigma * mu * e - _jordan(layout, lam, lam))
            dx, dy, dz, dtau, dkappa, dxs, dzs = direction(1.0 - sigma, q, sigma * mu - tau * kappa)
            alpha = min(1.0, st.step_fraction * step_length(dxs, dzs, dtau, dkappa))

        # backtrack into a wide neighbourhood of the central path
        for _ in range(30):
            if _centred(layout, x + alpha * dx, z + alpha * dz, tau + alpha * dtau,
                        kappa + alpha * dkappa, NEIGHBOURHOOD):
                break
            alpha *= 0.8
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        z[F] = 0.0
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z)) and tau > 0):
            break
        result["iterations"] = it + 1

    out = dict(best[1]) if best else result
    out["status"] = NUMERICAL_FAILURE
    return out


NEIGHBOURHOOD = 1e-3
POLISH_WINDOW = 1e3


def _cone_blocks(layout: _Layout, v: np.ndarray):
    """Smallest eigenvalue and trace of every cone block (nonnegatives as 1x1)."""
    lows, traces = [v[layout.nonneg]], [v[layout.nonneg]]
    for size, count, off in layout.psd:
        t = size * (size + 1) // 2
        V = smat(v[off:off + count * t].reshape(count, t), size)
        lows.append(np.linalg.eigvalsh(V)[:, 0])
        traces.append(np.trace(V, axis1=-2, axis2=-1))
    return np.concatenate(lows), np.concatenate(traces)


def _polish(xs, ys, c, A, b, A0, b0, back, layout, nb, nc, st):
    """Project a nearly optimal point onto the equality constraints.

    Rows of the reduced A are orthonormal, so x - A'(Ax - b) is the exact
    projection of x onto {Ax = b}; the dual slack is recomputed as c - A'y.
    Cone violations left by the projection are charged to the gap, weighted
    by the trace of the partner block, so that the accepted point is as close
    to the optimum as an unpolished one would have to be.
    """
    x = xs - A.T @ (A @ xs - b)
    z = _cone_only(c - A.T @ ys, layout)
    x_low, x_tr = _cone_blocks(layout, x)
    z_low, z_tr = _cone_blocks(layout, z)
    if min(x_low.min(initial=0.0), z_low.min(initial=0.0)) < -st.eps_psd:
        return None
    leak = np.maximum(-x_low, 0.0) @ np.abs(z_tr) + np.maximum(-z_low, 0.0) @ np.abs(x_tr)
    y_orig = back @ ys
    pres = np.max(np.abs(A0 @ x - b0), initial=0.0) / nb
    dres = np.max(np.abs(A0.T @ y_orig + z - c), initial=0.0) / nc
    pobj, dobj = c @ x, b @ ys
    if pres <= st.eps_feas and dres <= st.eps_feas and \
            abs(pobj - dobj) + leak <= st.eps_gap * (1.0 + abs(pobj)):
        return {"x": x, "y": y_orig, "z": z, "pres": pres, "dres": dres}
    return None


REGULARIZATION = 1e-13
REFINE_STEPS = 3


def _centred(layout: _Layout, x, z, tau, kappa, beta) -> bool:
    """Whether every complementarity eigenvalue is at least beta * mu."""
    if tau <= 0 or kappa <= 0:
        return False
    K = layout.cone_slice
    mu = (x[K] @ z[K] + tau * kappa) / (layout.degree + 1)
    if mu <= 0:
        return False
    lows = [tau * kappa]
    nl = layout.nonneg
    if len(nl):
        if np.min(x[nl]) <= 0 or np.min(z[nl]) <= 0:
            return False
        lows.append(float(np.min(x[nl] * z[nl])))
    for size, count, off in layout.psd:
        t = size * (size + 1) // 2
        X = smat(x[off:off + count * t].reshape(count, t), size)
        Z = smat(z[off:off + count * t].reshape(count, t), size)
        try:
            L = np.linalg.cholesky(X)
        except np.linalg.LinAlgError:
            return False
        w = np.linalg.eigvalsh(np.swapaxes(L, -1, -2) @ Z @ L)
        lows.append(float(w.min()))
    return min(lows) >= beta * mu


def _cone_only(v, layout):
    v = v.copy()
    v[layout.free] = 0.0
    return v
