"""Sparsity patterns and irreducible block triangular forms.

Blocks are ordered so that the permuted pattern is block upper triangular.
Incomparable blocks are placed from the back: among the blocks that nothing
unplaced depends on, the one with the largest smallest-row index goes last.
Within a block, rows and columns keep their original relative order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import networkx as nx
import numpy as np
from scipy.optimize import linear_sum_assignment

from .structure import SignatureMatrix, StructurallyIllPosed, _best_value


@dataclass(frozen=True)
class SparsityPattern:
    n: int
    positions: frozenset[tuple[int, int]]
    kind: str = "S"

    def __contains__(self, ij) -> bool:
        return tuple(ij) in self.positions

    def __le__(self, other: "SparsityPattern") -> bool:
        return self.positions <= other.positions

    def matrix(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.positions:
            A[i, j] = True
        return A


def sigma_pattern(sig: SignatureMatrix) -> SparsityPattern:
    """S: positions with a finite σ_ij."""
    rows, cols = np.nonzero(np.isfinite(sig.sigma))
    return SparsityPattern(sig.n, frozenset(zip(rows.tolist(), cols.tolist())), "S")


def jacobian_pattern(sig: SignatureMatrix, c=None, d=None) -> SparsityPattern:
    """S0: positions with d_j - c_i = σ_ij."""
    c = sig.c if c is None else np.asarray(c)
    d = sig.d if d is None else np.asarray(d)
    tight = np.isfinite(sig.sigma) & (d[None, :] - c[:, None] == sig.sigma)
    rows, cols = np.nonzero(tight)
    return SparsityPattern(sig.n, frozenset(zip(rows.tolist(), cols.tolist())), "S0")


ESSENTIAL_MAX_N = 12


def essential_pattern(sig: SignatureMatrix, max_n: int = ESSENTIAL_MAX_N) -> SparsityPattern:
    """Sess: union of all highest-value transversals.

    (i, j) lies on some HVT exactly when σ_ij plus the best value of the
    minor without row i and column j equals val Σ.
    """
    n = sig.n
    if n > max_n:
        raise ValueError("essential pattern unsupported at this size")
    best = sig.val
    pos = set()
    for i in range(n):
        for j in range(n):
            s = sig.sigma[i, j]
            if not np.isfinite(s):
                continue
            keep_r = [r for r in range(n) if r != i]
            keep_c = [k for k in range(n) if k != j]
            rest = _best_value(sig.sigma[np.ix_(keep_r, keep_c)])
            if rest is not None and s + rest == best:
                pos.add((i, j))
    return SparsityPattern(n, frozenset(pos), "Sess")


@dataclass(frozen=True)
class BlockStructure:
    """A BTF: ``row_perm[k]`` is the original row placed at position ``k``."""

    row_perm: tuple[int, ...]
    col_perm: tuple[int, ...]
    sizes: tuple[int, ...]
    irreducible: bool = True

    @property
    def n(self) -> int:
        return len(self.row_perm)

    @property
    def p(self) -> int:
        return len(self.sizes)

    @property
    def starts(self) -> list[int]:
        return [0, *np.cumsum(self.sizes).tolist()]

    def block_range(self, q: int) -> range:
        """Permuted positions of block ``q`` (0-based)."""
        s = self.starts
        return range(s[q], s[q + 1])

    def rows(self, q: int) -> list[int]:
        return [self.row_perm[k] for k in self.block_range(q)]

    def cols(self, q: int) -> list[int]:
        return [self.col_perm[k] for k in self.block_range(q)]

    def blk(self, k: int) -> int:
        """Block of permuted position ``k``."""
        return int(np.searchsorted(self.starts, k, side="right") - 1)

    @property
    def row_block(self) -> dict[int, int]:
        return {r: q for q in range(self.p) for r in self.rows(q)}

    @property
    def col_block(self) -> dict[int, int]:
        return {c: q for q in range(self.p) for c in self.cols(q)}

    def row_pos(self, i: int) -> int:
        return self.row_perm.index(i)

    def col_pos(self, j: int) -> int:
        return self.col_perm.index(j)

    def permute(self, A: np.ndarray) -> np.ndarray:
        return np.asarray(A)[np.ix_(self.row_perm, self.col_perm)]

    @classmethod
    def trivial(cls, n: int) -> "BlockStructure":
        return cls(tuple(range(n)), tuple(range(n)), (n,), irreducible=False)

    def is_upper(self, pattern: SparsityPattern) -> bool:
        rb, cb = self.row_block, self.col_block
        return all(cb[j] >= rb[i] for i, j in pattern.positions)


def perfect_matching(pattern: SparsityPattern) -> dict[int, int]:
    """Row -> column perfect matching of ``pattern``."""
    n = pattern.n
    cost = np.where(pattern.matrix(), 0.0, np.inf)
    try:
        r, c = linear_sum_assignment(cost)
    except ValueError:
        raise StructurallyIllPosed("structurally ill posed: pattern has no transversal") from None
    return dict(zip(r.tolist(), c.tolist()))


def block_triangularize(pattern: SparsityPattern) -> BlockStructure:
    """Irreducible BTF of a structurally nonsingular pattern."""
    n = pattern.n
    if n == 0:
        return BlockStructure((), (), ())
    match = perfect_matching(pattern)
    row_of_col = {j: i for i, j in match.items()}
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    # i -> k: row i uses the column matched to row k, so block(i) precedes block(k)
    g.add_edges_from((i, row_of_col[j]) for i, j in pattern.positions if row_of_col[j] != i)
    cond = nx.condensation(g)
    members = {v: sorted(cond.nodes[v]["members"]) for v in cond.nodes}
    key = {v: members[v][0] for v in cond.nodes}

    # place from the back: largest key among blocks with no unplaced successor
    rev = cond.reverse(copy=True)
    order = list(nx.lexicographical_topological_sort(rev, key=lambda v: -key[v]))
    order.reverse()

    row_perm, col_perm, sizes = [], [], []
    for v in order:
        rows = members[v]
        row_perm += rows
        col_perm += sorted(match[i] for i in rows)
        sizes.append(len(rows))
    return BlockStructure(tuple(row_perm), tuple(col_perm), tuple(sizes), irreducible=True)


def fine_btf(S0: SparsityPattern) -> BlockStructure:
    return block_triangularize(S0)


def coarse_btf(S: SparsityPattern) -> BlockStructure:
    return block_triangularize(S)


def local_offsets(sig: SignatureMatrix, blocks: BlockStructure) -> list[tuple[np.ndarray, np.ndarray]]:
    """Restrict the global offsets to each diagonal block, checking validity."""
    from .structure import is_valid_offset_pair

    out = []
    for q in range(blocks.p):
        rows, cols = blocks.rows(q), blocks.cols(q)
        sub = SignatureMatrix(
            sig.sigma[np.ix_(rows, cols)],
            [sig.rows[i] for i in rows],
            [sig.cols[j] for j in cols],
        )
        cq, dq = sig.c[rows], sig.d[cols]
        if not is_valid_offset_pair(sub, cq, dq):
            raise AssertionError(f"global offsets restricted to block {q + 1} are not valid")
        out.append((cq, dq))
    return out


def block_sigma(sig: SignatureMatrix, blocks: BlockStructure, q: int) -> SignatureMatrix:
    rows, cols = blocks.rows(q), blocks.cols(q)
    return SignatureMatrix(
        sig.sigma[np.ix_(rows, cols)], [sig.rows[i] for i in rows], [sig.cols[j] for j in cols]
    )


def check_block_invariants(sig: SignatureMatrix, blocks: BlockStructure) -> None:
    """Assert the structural facts a fine BTF of S0 must satisfy."""
    S0 = jacobian_pattern(sig)
    if not blocks.is_upper(S0):
        raise AssertionError("S0 has entries below the block diagonal")
    rb, cb = blocks.row_block, blocks.col_block
    if any(rb[i] != cb[j] for i, j in sig.hvt):
        raise AssertionError("HVT leaves the diagonal blocks")
    total = sum(block_sigma(sig, blocks, q).val for q in range(blocks.p))
    if total != sig.val:
        raise AssertionError("block values do not add up to val Σ")
    diff = sig.d[None, :] - sig.c[:, None]
    for i in range(sig.n):
        for j in range(sig.n):
            s = sig.sigma[i, j]
            if cb[j] < rb[i] and not diff[i, j] > s:
                raise AssertionError(f"d_j - c_i > σ_ij fails below the diagonal at ({i}, {j})")


def pattern_from(positions: Iterable[tuple[int, int]], n: int, kind: str = "S") -> SparsityPattern:
    return SparsityPattern(n, frozenset(map(tuple, positions)), kind)
