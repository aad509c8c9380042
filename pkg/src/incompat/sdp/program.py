"""Standard-form conic programs over Hermitian PSD, nonnegative and free blocks.

A program is::

    minimize (or maximize)   sum_j <C_j, X_j>
    subject to               sum_j <A_ij, X_j> = b_i     for every row i
                             X_j in cone_j

with ``<A, X> = Re tr(A X)`` for matrix blocks and the dot product for
scalar blocks. Its dual is ``max b.y  s.t.  C_j - sum_i y_i A_ij in cone_j*``
(the free cone's dual is {0}).

Rows are stored in groups so that one Hermitian matrix equation can be kept
as a single object; :meth:`ConeProgram.rows` flattens them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..linalg import hermitian_basis, herm_to_vec, vec_to_herm

PSD = "psd"
NONNEG = "nonneg"
FREE = "free"


@dataclass(frozen=True)
class Block:
    name: str
    kind: str
    size: int
    real: bool = False  # psd only: real symmetric instead of complex Hermitian

    @property
    def is_matrix(self) -> bool:
        return self.kind == PSD

    def zero(self) -> np.ndarray:
        if self.kind == PSD:
            return np.zeros((self.size, self.size), dtype=float if self.real else complex)
        return np.zeros(self.size)


@dataclass
class RowGroup:
    """``nrows`` equality rows; ``coeffs[name]`` has shape (nrows, n, n) or (nrows, n)."""

    label: str
    coeffs: dict[str, np.ndarray]
    rhs: np.ndarray
    # for Hermitian matrix equations: (d, indices of hermitian_basis rows kept)
    basis: tuple | None = None

    @property
    def nrows(self) -> int:
        return len(self.rhs)


@dataclass
class ConeProgram:
    sense: str = "min"
    blocks: dict[str, Block] = field(default_factory=dict)
    objective: dict[str, np.ndarray] = field(default_factory=dict)
    groups: list[RowGroup] = field(default_factory=list)
    # free blocks that stand for a d x d Hermitian matrix in hermitian_basis coordinates
    hermitian_free: dict[str, int] = field(default_factory=dict)
    # complex psd blocks replaced by real 2d x 2d blocks (name -> d); set by realify
    realified: dict[str, int] = field(default_factory=dict)

    # -- declaration -----------------------------------------------------

    def _add_block(self, block: Block) -> str:
        if block.name in self.blocks:
            raise ValueError(f"duplicate block {block.name!r}")
        if block.size < 1:
            raise ValueError(f"block {block.name!r} has size {block.size}")
        self.blocks[block.name] = block
        return block.name

    def add_psd(self, name: str, dim: int, real: bool = False) -> str:
        return self._add_block(Block(name, PSD, dim, real))

    def add_nonneg(self, name: str, n: int) -> str:
        return self._add_block(Block(name, NONNEG, n))

    def add_free(self, name: str, n: int) -> str:
        return self._add_block(Block(name, FREE, n))

    def add_hermitian_free(self, name: str, dim: int) -> str:
        self._add_block(Block(name, FREE, dim * dim))
        self.hermitian_free[name] = dim
        return name

    def set_objective(self, name: str, coeff) -> None:
        block = self.blocks[name]
        coeff = np.asarray(coeff, dtype=complex if block.is_matrix else float)
        if coeff.shape != block.zero().shape:
            raise ValueError(f"objective coefficient for {name!r} has shape {coeff.shape}")
        self.objective[name] = coeff

    def add_rows(self, coeffs: dict, rhs, label: str = "", basis: tuple | None = None) -> None:
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        clean = {}
        for name, c in coeffs.items():
            if name not in self.blocks:
                raise KeyError(f"row group {label!r} references undeclared block {name!r}")
            block = self.blocks[name]
            c = np.asarray(c, dtype=complex if block.is_matrix else float)
            expect = (len(rhs),) + block.zero().shape
            if c.shape != expect:
                c = c.reshape(expect)
            if block.is_matrix and np.max(np.abs(c - np.conj(np.swapaxes(c, -1, -2))), initial=0) > 1e-12:
                raise ValueError(f"coefficient for psd block {name!r} is not Hermitian")
            clean[name] = c
        label = label or f"g{len(self.groups)}"
        if any(g.label == label for g in self.groups):
            raise ValueError(f"duplicate row group label {label!r}")
        self.groups.append(RowGroup(label, clean, rhs, basis))

    def add_matrix_equality(self, terms, rhs, label: str = "") -> None:
        """Add the Hermitian matrix equation ``sum(terms) = rhs``.

        ``terms`` is a list of ``(block, coeff)``. For a psd or Hermitian-free
        block ``coeff`` is a real scalar multiplying the block's matrix; for a
        scalar block it is an array of shape (n, d, d) giving ``sum_i x_i B_i``.
        """
        rhs = np.asarray(rhs, dtype=complex)
        d = rhs.shape[0]
        basis = hermitian_basis(d)
        nk = d * d
        coeffs: dict[str, np.ndarray] = {}
        for name, c in terms:
            block = self.blocks[name]
            if block.kind == PSD:
                if block.size != d:
                    raise ValueError(f"block {name!r} has dim {block.size}, equation has {d}")
                add = float(c) * basis
            elif name in self.hermitian_free:
                if self.hermitian_free[name] != d:
                    raise ValueError(f"block {name!r} has dim {self.hermitian_free[name]}, equation has {d}")
                add = float(c) * np.eye(nk)
            else:
                mats = np.asarray(c, dtype=complex).reshape(block.size, d, d)
                add = herm_to_vec(mats).T
            coeffs[name] = coeffs[name] + add if name in coeffs else add
        b = herm_to_vec(rhs)
        # rows that vanish identically (e.g. imaginary parts of real data) are dropped
        keep = np.abs(b) > 0
        for c in coeffs.values():
            keep |= np.abs(c).reshape(nk, -1).max(axis=1) > 0
        if not keep.all():
            coeffs = {k: v[keep] for k, v in coeffs.items()}
            b = b[keep]
        if len(b):
            self.add_rows(coeffs, b, label, basis=(d, tuple(np.flatnonzero(keep).tolist())))

    def add_matrix_inequality(self, terms, rhs, label: str) -> str:
        """Add ``sum(terms) >= rhs`` in the PSD order via a slack block; returns its name."""
        d = np.asarray(rhs).shape[0]
        slack = self.add_psd(f"{label}/slack", d)
        self.add_matrix_equality(list(terms) + [(slack, -1.0)], rhs, label)
        return slack

    # -- inspection ------------------------------------------------------

    @property
    def nrows(self) -> int:
        return sum(g.nrows for g in self.groups)

    def real_dimension(self) -> int:
        total = 0
        for b in self.blocks.values():
            if b.kind == PSD:
                total += b.size * (b.size + 1) // 2 if b.real else b.size * b.size
            else:
                total += b.size
        return total

    def group(self, label: str) -> RowGroup:
        for g in self.groups:
            if g.label == label:
                return g
        raise KeyError(label)

    def group_matrix(self, label: str, values: np.ndarray) -> np.ndarray:
        """Hermitian matrix sum_k values_k E_k for the rows of a matrix equation."""
        g = self.group(label)
        if g.basis is None:
            raise ValueError(f"group {label!r} is not a matrix equation")
        d, idx = g.basis
        full = np.zeros(d * d)
        full[list(idx)] = values
        return vec_to_herm(full, d)

    def rows(self):
        """Yield ``(coeffs, rhs)`` one scalar row at a time."""
        for g in self.groups:
            for i in range(g.nrows):
                yield {k: v[i] for k, v in g.coeffs.items()}, float(g.rhs[i])

    def group_slice(self, label: str) -> slice:
        start = 0
        for g in self.groups:
            if g.label == label:
                return slice(start, start + g.nrows)
            start += g.nrows
        raise KeyError(label)

    # -- serialization ---------------------------------------------------

    def to_json(self) -> dict:
        def enc(a):
            a = np.asarray(a)
            out = {"shape": list(a.shape), "re": np.real(a).ravel().tolist()}
            if np.iscomplexobj(a) and np.any(np.imag(a)):
                out["im"] = np.imag(a).ravel().tolist()
            return out

        return {
            "sense": self.sense,
            "blocks": [
                {"name": b.name, "kind": b.kind, "size": b.size, "real": b.real}
                for b in self.blocks.values()
            ],
            "hermitian_free": self.hermitian_free,
            "realified": self.realified,
            "objective": {k: enc(v) for k, v in self.objective.items()},
            "constraints": [
                {"label": g.label, "rhs": g.rhs.tolist(),
                 "terms": [[k, enc(v)] for k, v in g.coeffs.items()],
                 **({"basis": [g.basis[0], list(g.basis[1])]} if g.basis else {})}
                for g in self.groups
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ConeProgram":
        def dec(e):
            a = np.asarray(e["re"], dtype=float)
            if "im" in e:
                a = a + 1j * np.asarray(e["im"], dtype=float)
            return a.reshape(e["shape"])

        p = cls(sense=data["sense"])
        for b in data["blocks"]:
            p._add_block(Block(b["name"], b["kind"], b["size"], b.get("real", False)))
        p.hermitian_free = {k: int(v) for k, v in data.get("hermitian_free", {}).items()}
        p.realified = {k: int(v) for k, v in data.get("realified", {}).items()}
        for k, v in data["objective"].items():
            p.set_objective(k, dec(v))
        for g in data["constraints"]:
            basis = (g["basis"][0], tuple(g["basis"][1])) if "basis" in g else None
            p.add_rows({k: dec(v) for k, v in g["terms"]}, g["rhs"], g["label"], basis)
        return p

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


def embed(h: np.ndarray) -> np.ndarray:
    """Real representation ``[[Re H, -Im H], [Im H, Re H]]`` (works on stacks)."""
    re, im = np.real(h), np.imag(h)
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def unembed(x: np.ndarray) -> np.ndarray:
    """Project a real 2d x 2d symmetric matrix back to the d x d Hermitian it represents."""
    d = x.shape[-1] // 2
    x11, x12 = x[..., :d, :d], x[..., :d, d:]
    x21, x22 = x[..., d:, :d], x[..., d:, d:]
    return 0.5 * ((x11 + x22) + 1j * (x21 - x12))


def realify(p: ConeProgram) -> ConeProgram:
    """Equivalent program in which every psd block is real symmetric.

    A complex d x d block becomes a real 2d x 2d block; its coefficients are
    mapped to ``embed(C) / 2`` so that ``<embed(C)/2, embed(H)> = Re tr(C H)``
    and objective values are unchanged. Programs without complex blocks are
    returned as is.
    """
    complex_blocks = {n: b for n, b in p.blocks.items() if b.kind == PSD and not b.real}
    if not complex_blocks:
        return p
    q = ConeProgram(sense=p.sense, hermitian_free=dict(p.hermitian_free),
                    realified=dict(p.realified))
    for name, b in p.blocks.items():
        if name in complex_blocks:
            q._add_block(Block(name, PSD, 2 * b.size, real=True))
            q.realified[name] = b.size
        else:
            q._add_block(b)
    for name, c in p.objective.items():
        q.objective[name] = 0.5 * embed(c) if name in complex_blocks else c
    for g in p.groups:
        coeffs = {
            name: (0.5 * embed(c) if name in complex_blocks else c)
            for name, c in g.coeffs.items()
        }
        q.groups.append(RowGroup(g.label, coeffs, g.rhs, g.basis))
    return q
