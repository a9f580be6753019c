"""Rank and null vectors of symbolic matrices over rational expressions."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import sympy as sp
import scipy.linalg

from .btf import BlockStructure
from .structure import MatrixProbe
from .symbolic import PROBES, is_constant, is_identically_zero

RANK_TOL = 1e-9
CONST_TOL = 1e-8


class NotSingular(ArithmeticError):
    """Symbolic elimination found full rank although probing suggested otherwise."""


@dataclass(frozen=True)
class NullVector:
    side: str  # "kernel" or "cokernel"
    entries: tuple[sp.Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(sp.sympify(e) for e in self.entries))
        if not self.support:
            raise ValueError("null vector is identically zero")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(k for k, e in enumerate(self.entries) if not (e == 0 or is_identically_zero(e)))

    @property
    def constant(self) -> bool:
        return all(is_constant(e) for e in self.entries)

    def residual(self, M: sp.Matrix) -> sp.Matrix:
        v = sp.Matrix(self.entries)
        return M * v if self.side == "kernel" else (v.T * M).T

    def __str__(self):
        return "[" + ", ".join(str(e) for e in self.entries) + "]"


def _numeric_rank(A: np.ndarray) -> int:
    if A.size == 0:
        return 0
    scale = np.abs(A).max()
    if scale == 0:
        return 0
    _, _, U = scipy.linalg.lu(A)
    return int((np.abs(np.diag(U)) > RANK_TOL * scale).sum())


def rank_probe(M: sp.Matrix, count: int = PROBES, rng=None) -> int:
    """Largest numeric rank of ``M`` seen over ``count`` random probe points."""
    if M.shape[0] == 0 or M.shape[1] == 0:
        return 0
    if not M.free_symbols:
        return _numeric_rank(np.array(M.evalf(), dtype=float))
    return max(_numeric_rank(A) for _, A in MatrixProbe(M).samples(count, rng))


def _rationalize(x: float) -> sp.Rational:
    return sp.Rational(Fraction(x).limit_denominator(1000))


def _constant_null_vector(M: sp.Matrix, rng=None, probes: int = 5):
    """Try to find a constant vector spanning a one-dimensional null space."""
    vecs = []
    for _, A in MatrixProbe(M).samples(probes, rng) if M.free_symbols else [(None, np.array(M.evalf(), dtype=float))]:
        _, s, vh = np.linalg.svd(A)
        tol = RANK_TOL * (s[0] if s.size and s[0] > 0 else 1.0)
        null = vh[(s > tol).sum() :]
        if null.shape[0] != 1:
            return None
        v = null[0]
        lead = np.flatnonzero(np.abs(v) > CONST_TOL * np.abs(v).max())[0]
        vecs.append(v / v[lead])
    if any(np.abs(v - vecs[0]).max() > CONST_TOL for v in vecs[1:]):
        return None
    cand = [_rationalize(x) if abs(x) > CONST_TOL else sp.Integer(0) for x in vecs[0]]
    res = M * sp.Matrix(cand)
    if all(is_identically_zero(e, rng=rng) for e in res):
        return cand
    return None


def _simp(e: sp.Expr) -> sp.Expr:
    e = sp.together(e)
    try:
        return sp.cancel(e)
    except sp.PolynomialError:
        return e


def _echelon(M: sp.Matrix, rng=None):
    """Fraction-free row echelon form; pivot = first entry not identically zero."""
    A = M.copy()
    rows, cols = A.shape
    pivots = []
    r = 0
    prev = sp.Integer(1)
    for c in range(cols):
        if r == rows:
            break
        piv = next((k for k in range(r, rows) if not is_identically_zero(A[k, c], rng=rng)), None)
        if piv is None:
            for k in range(r, rows):
                A[k, c] = sp.Integer(0)
            continue
        if piv != r:
            A.row_swap(piv, r)
        p = A[r, c]
        for k in range(r + 1, rows):
            for j in range(c + 1, cols):
                A[k, j] = _simp((p * A[k, j] - A[k, c] * A[r, j]) / prev)
            A[k, c] = sp.Integer(0)
        prev = p
        pivots.append(c)
        r += 1
    return A, pivots


def _clear_denominators(v: list[sp.Expr]) -> list[sp.Expr]:
    nums, dens = zip(*(sp.fraction(sp.together(_simp(e))) for e in v))
    common = sp.Integer(1)
    for den in dens:
        common = sp.lcm(common, den)
    out = [_simp(n * common / d) for n, d in zip(nums, dens)]
    nonzero = [e for e in out if e != 0]
    g = nonzero[0]
    for e in nonzero[1:]:
        g = sp.gcd(g, e)
    if g != 0 and g != 1:
        out = [_simp(e / g) for e in out]
    return out


def _symbolic_kernel(M: sp.Matrix, rng=None) -> list[sp.Expr]:
    E, pivots = _echelon(M, rng=rng)
    cols = M.shape[1]
    free = [c for c in range(cols) if c not in pivots]
    if not free:
        raise NotSingular("block not identically singular")
    v = [sp.Integer(0)] * cols
    v[free[-1]] = sp.Integer(1)
    for r in reversed(range(len(pivots))):
        c = pivots[r]
        acc = sum((E[r, j] * v[j] for j in range(c + 1, cols)), sp.Integer(0))
        v[c] = _simp(-acc / E[r, c])
    return _clear_denominators(v)


def kernel_vector(M: sp.Matrix, rng=None) -> NullVector:
    """One vector v with M v ≡ 0, preferring a constant one."""
    cand = _constant_null_vector(M, rng=rng)
    if cand is None:
        cand = _symbolic_kernel(M, rng=rng)
    return NullVector("kernel", cand)


def cokernel_vector(M: sp.Matrix, rng=None) -> NullVector:
    """One vector u with uᵀ M ≡ 0, preferring a constant one."""
    return NullVector("cokernel", kernel_vector(M.T, rng=rng).entries)


def embed_in_full(vhat: NullVector, blocks: BlockStructure, q: int) -> NullVector:
    """Zero-pad a block null vector to length n, in permuted coordinates."""
    if len(vhat) != blocks.sizes[q]:
        raise ValueError(f"block {q + 1} has size {blocks.sizes[q]}, vector has {len(vhat)}")
    full = [sp.Integer(0)] * blocks.n
    for k, pos in enumerate(blocks.block_range(q)):
        full[pos] = vhat[k]
    return NullVector(vhat.side, full)


def verify_null_vector(M: sp.Matrix, v: NullVector, rng=None) -> bool:
    return all(is_identically_zero(e, rng=rng) for e in v.residual(M))
