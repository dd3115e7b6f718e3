"""Meta-path composition and multi-order adjacency construction.

A first-order meta-path is a chain of relation matrices that starts and ends
at the target node type. Given ``L`` of them, every ``l``-subset of
``{0..L-1}`` (``l = 1..L``) defines one branch. A branch's adjacency is the
product of ``l`` factors, factor ``i`` being the convex mixture
``sum_j alpha[i, j] * A_{subset[j]}``, made undirected and renormalized.
The multi-order adjacency is the convex ``beta``-weighted sum over branches.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .errors import ArgumentError, ShapeError, SpecError
from .sparse import (
    SparseMatrix,
    add_scaled,
    spmm_ss,
    sym_normalize,
    symmetrize,
    transpose,
)

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class MetaPathSpec:
    name: str
    chain: tuple[tuple[int, bool], ...]

    def __post_init__(self):
        object.__setattr__(self, "chain", tuple((int(r), bool(t)) for r, t in self.chain))

    @classmethod
    def from_json(cls, obj) -> "MetaPathSpec":
        try:
            chain = [(int(step["relation"]), bool(step.get("transpose", False))) for step in obj["chain"]]
            return cls(str(obj["name"]), tuple(chain))
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecError(f"malformed meta-path spec {obj!r}: {exc}") from None

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "chain": [{"relation": r, "transpose": t} for r, t in self.chain],
        }

    def validate(self, g) -> None:
        if not self.chain:
            raise SpecError(f"meta-path '{self.name}' has an empty chain")
        current = g.target_type
        for step, (rid, flip) in enumerate(self.chain):
            try:
                rel = g.relation(rid)
            except Exception:
                raise SpecError(f"meta-path '{self.name}' step {step}: unknown relation {rid}") from None
            src, dst = (rel.dst_type, rel.src_type) if flip else (rel.src_type, rel.dst_type)
            if src != current:
                raise SpecError(
                    f"meta-path '{self.name}' step {step}: relation {rid} starts at type {src}, "
                    f"but the path is at type {current}"
                )
            current = dst
        if current != g.target_type:
            raise SpecError(
                f"meta-path '{self.name}' ends at type {current}, not the target type {g.target_type}"
            )


@dataclass(frozen=True)
class FirstOrderSet:
    matrices: list[SparseMatrix]
    names: list[str]

    @property
    def L(self) -> int:
        return len(self.matrices)

    @property
    def n(self) -> int:
        return self.matrices[0].n_rows


def compose_first_order(g, spec: MetaPathSpec) -> SparseMatrix:
    spec.validate(g)
    out = None
    for rid, flip in spec.chain:
        m = g.relation(rid).matrix
        if flip:
            m = transpose(m)
        out = m if out is None else spmm_ss(out, m)
    return sym_normalize(symmetrize(out))


def build_first_order_set(g, specs) -> FirstOrderSet:
    specs = list(specs)
    if not specs:
        raise SpecError("at least one meta-path is required")
    return FirstOrderSet([compose_first_order(g, s) for s in specs], [s.name for s in specs])


@dataclass(frozen=True)
class Branch:
    order: int
    index: int  # position within its order, 0-based
    subset: tuple[int, ...]


@dataclass(frozen=True)
class SubsetEnumeration:
    L: int
    by_order: dict[int, list[tuple[int, ...]]]
    branches: list[Branch] = field(default_factory=list)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def orders(self) -> np.ndarray:
        return np.array([b.order for b in self.branches])

    def branch_names(self, names) -> list[str]:
        return ["·".join(names[j] for j in b.subset) for b in self.branches]


def enumerate_subsets(L: int) -> SubsetEnumeration:
    """All ``l``-subsets of ``range(L)`` for ``l = 1..L`` in lexicographic order."""
    if L < 1:
        raise ArgumentError(f"need at least one first-order meta-path, got L={L}")
    by_order = {l: list(combinations(range(L), l)) for l in range(1, L + 1)}
    assert all(len(v) == comb(L, l) for l, v in by_order.items())
    branches = [Branch(l, t, s) for l in range(1, L + 1) for t, s in enumerate(by_order[l])]
    return SubsetEnumeration(L, by_order, branches)


@dataclass
class HighOrderTrace:
    """Intermediates of one branch, kept for the backward pass."""

    factors: list[SparseMatrix]
    product: SparseMatrix
    normalized: SparseMatrix
    degrees: np.ndarray


def _check_alpha(alpha, l: int) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (l, l):
        raise ArgumentError(f"coefficient matrix has shape {alpha.shape}, expected ({l}, {l})")
    if np.any(np.abs(alpha.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise ArgumentError("coefficient matrix rows must each sum to 1")
    return alpha


def high_order_trace(basis, alpha) -> HighOrderTrace:
    basis = list(basis)
    alpha = _check_alpha(alpha, len(basis))
    shape = basis[0].shape
    if shape[0] != shape[1] or any(b.shape != shape for b in basis):
        raise ShapeError(f"basis matrices must be square and equally shaped, got {[b.shape for b in basis]}")
    factors = [add_scaled(list(zip(row, basis))) for row in alpha]
    prod = factors[0]
    for f in factors[1:]:
        prod = spmm_ss(prod, f)
    und = symmetrize(prod)
    degrees = und.row_sums() + 1.0
    return HighOrderTrace(factors, prod, sym_normalize(und), degrees)


def build_high_order(basis, alpha) -> SparseMatrix:
    return high_order_trace(basis, alpha).normalized


@dataclass
class HighOrderBasis:
    branches: list[Branch]
    traces: list[HighOrderTrace]

    @property
    def matrices(self) -> list[SparseMatrix]:
        return [t.normalized for t in self.traces]


def assemble_basis(first: FirstOrderSet, enumeration: SubsetEnumeration, alphas) -> HighOrderBasis:
    alphas = list(alphas)
    if len(alphas) != enumeration.n_branches:
        raise ArgumentError(f"got {len(alphas)} coefficient matrices for {enumeration.n_branches} branches")
    traces = []
    for br, alpha in zip(enumeration.branches, alphas):
        if np.shape(alpha) != (br.order, br.order):
            raise ArgumentError(
                f"branch {br.subset}: coefficient matrix shape {np.shape(alpha)}, expected ({br.order}, {br.order})"
            )
        traces.append(high_order_trace([first.matrices[j] for j in br.subset], alpha))
    return HighOrderBasis(list(enumeration.branches), traces)


def aggregate_multi_order(basis: HighOrderBasis, beta) -> SparseMatrix:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (len(basis.traces),):
        raise ArgumentError(f"beta has length {beta.size}, expected {len(basis.traces)}")
    if np.any(beta < 0):
        raise ArgumentError("beta weights must be non-negative")
    if abs(beta.sum() - 1.0) > ROW_SUM_TOL:
        raise ArgumentError(f"beta weights sum to {beta.sum()}, expected 1")
    agg = add_scaled(list(zip(beta, basis.matrices)))
    if agg.nnz and agg.values.max() > 1.0:
        # convex weights can overshoot 1 by an ulp
        agg = SparseMatrix(agg.n_rows, agg.n_cols, agg.row_offsets.copy(), agg.col_indices.copy(),
                           np.minimum(agg.values, 1.0))
    return agg


def order_mass(enumeration: SubsetEnumeration, beta) -> dict[int, float]:
    beta = np.asarray(beta, dtype=np.float64)
    orders = enumeration.orders()
    return {l: float(beta[orders == l].sum()) for l in range(1, enumeration.L + 1)}
