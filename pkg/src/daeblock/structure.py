"""Signature matrix, highest-value transversal, offsets and System Jacobian."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import sympy as sp
from scipy.optimize import linear_sum_assignment

from .symbolic import NEG_INF, PROBES, Evaluator, Var, partial, sigma_of, variables_in

DET_TOL = 1e-9


class StructurallyIllPosed(ValueError):
    """The signature matrix has no finite transversal."""


@dataclass(frozen=True)
class Equation:
    name: str
    expr: sp.Expr

    def __str__(self):
        return f"{self.name}: {self.expr} = 0"


@dataclass(frozen=True)
class DaeSystem:
    """``n`` implicit equations ``0 = f_i`` in ``n`` unknowns."""

    equations: tuple[Equation, ...]
    variables: tuple[str, ...]
    parameters: Mapping[str, sp.Rational] = field(default_factory=dict)
    drivers: tuple[str, ...] = ()
    introduced: frozenset[str] = frozenset()
    provenance: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "equations", tuple(self.equations))
        object.__setattr__(self, "variables", tuple(self.variables))
        if len(self.equations) != len(self.variables):
            raise ValueError(
                f"system is not square: {len(self.equations)} equations, "
                f"{len(self.variables)} variables"
            )
        known = set(self.variables)
        for eq in self.equations:
            extra = variables_in(eq.expr) - known
            if extra:
                raise ValueError(f"equation {eq.name} uses undeclared variables {sorted(extra)}")

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> list[str]:
        return [eq.name for eq in self.equations]

    @property
    def exprs(self) -> list[sp.Expr]:
        return [eq.expr for eq in self.equations]

    def var_index(self, name: str) -> int:
        return self.variables.index(name)

    def eq_index(self, name: str) -> int:
        return self.names.index(name)

    def evolve(self, **changes) -> "DaeSystem":
        return replace(self, **changes)


def _fmt(v) -> str:
    return "-" if v == NEG_INF else str(int(v))


@dataclass(eq=False)
class SignatureMatrix:
    """Σ with lazily computed HVT, value and canonical offsets.

    Entries are floats so that absent entries can be ``-inf``.
    """

    sigma: np.ndarray
    rows: tuple[str, ...] = ()
    cols: tuple[str, ...] = ()

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        n = self.sigma.shape[0]
        if self.sigma.shape != (n, n):
            raise ValueError("signature matrix must be square")
        self.rows = tuple(self.rows) or tuple(f"f{i + 1}" for i in range(n))
        self.cols = tuple(self.cols) or tuple(f"x{j + 1}" for j in range(n))

    @property
    def n(self) -> int:
        return self.sigma.shape[0]

    @cached_property
    def _transversal(self):
        return hvt(self)

    @property
    def hvt(self) -> tuple[tuple[int, int], ...]:
        return self._transversal[0]

    @property
    def val(self) -> int:
        return self._transversal[1]

    @cached_property
    def _offsets(self):
        return offsets(self)

    @property
    def c(self) -> np.ndarray:
        return self._offsets[0]

    @property
    def d(self) -> np.ndarray:
        return self._offsets[1]

    def __repr__(self):
        body = "; ".join(" ".join(_fmt(v) for v in row) for row in self.sigma)
        return f"SignatureMatrix([{body}])"


def signature_matrix(sys: DaeSystem, rng=None) -> SignatureMatrix:
    n = sys.n
    sigma = np.full((n, n), NEG_INF)
    for i, eq in enumerate(sys.equations):
        present = variables_in(eq.expr)
        for j, name in enumerate(sys.variables):
            if name in present:
                sigma[i, j] = sigma_of(eq.expr, name, rng=rng)
    return SignatureMatrix(sigma, sys.names, sys.variables)


def _best_value(sigma: np.ndarray):
    """Maximum transversal sum of ``sigma`` or ``None`` if there is none."""
    if sigma.shape[0] == 0:
        return 0
    cost = np.where(np.isfinite(sigma), -sigma, np.inf)
    try:
        r, c = linear_sum_assignment(cost)
    except ValueError:
        return None
    total = sigma[r, c].sum()
    return None if not np.isfinite(total) else int(total)


def hvt(sig: SignatureMatrix | np.ndarray):
    """Highest-value transversal and its value.

    Among all HVTs the one whose column assignment, read row by row, is
    lexicographically smallest is returned.
    """
    sigma = sig.sigma if isinstance(sig, SignatureMatrix) else np.asarray(sig, float)
    n = sigma.shape[0]
    best = _best_value(sigma)
    if best is None:
        raise StructurallyIllPosed("structurally ill posed: no finite transversal")
    rows_left = list(range(n))
    cols_left = list(range(n))
    acc = 0
    T = []
    for i in range(n):
        rows_left.remove(i)
        for j in sorted(cols_left):
            if not np.isfinite(sigma[i, j]):
                continue
            rest_cols = [k for k in cols_left if k != j]
            rest = _best_value(sigma[np.ix_(rows_left, rest_cols)])
            if rest is not None and acc + sigma[i, j] + rest == best:
                T.append((i, j))
                acc += int(sigma[i, j])
                cols_left = rest_cols
                break
        else:  # pragma: no cover - guaranteed by the optimality of ``best``
            raise AssertionError("transversal reconstruction failed")
    return tuple(T), best


def offsets(sig: SignatureMatrix, start: Sequence[int] | None = None, max_iter: int = 10_000):
    """Smallest valid offsets (c; d) reached from ``start`` (default zeros).

    Fixed-point iteration d_j = max_i(σ_ij + c_i), c_i = d_j - σ_ij on the HVT.
    """
    sigma = sig.sigma
    n = sig.n
    T = sig.hvt
    match = dict(T)
    c = np.zeros(n, dtype=int) if start is None else np.array(start, dtype=int)
    finite = np.isfinite(sigma)
    for _ in range(max_iter):
        shifted = np.where(finite, sigma + c[:, None], NEG_INF)
        d = shifted.max(axis=0).astype(int)
        c_new = np.array([d[match[i]] - int(sigma[i, match[i]]) for i in range(n)], dtype=int)
        if np.array_equal(c_new, c):
            return c, d
        c = c_new
    raise AssertionError("offset iteration did not converge")  # impossible for SWP Σ


def is_valid_offset_pair(sig: SignatureMatrix, c, d) -> bool:
    c = np.asarray(c)
    d = np.asarray(d)
    if (c < 0).any() or (d < 0).any():
        return False
    diff = d[None, :] - c[:, None]
    if (diff < sig.sigma).any():
        return False
    return all(diff[i, j] == sig.sigma[i, j] for i, j in sig.hvt)


def structural_index(sig: SignatureMatrix) -> int:
    return int(sig.c.max()) + (1 if int(sig.d.min()) == 0 else 0)


@dataclass
class SystemJacobian:
    entries: sp.Matrix
    c: np.ndarray
    d: np.ndarray
    rows: tuple[str, ...] = ()
    cols: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def block(self, rows: Sequence[int], cols: Sequence[int]) -> sp.Matrix:
        return self.entries.extract(list(rows), list(cols))


def system_jacobian(sys: DaeSystem, sig: SignatureMatrix) -> SystemJacobian:
    n = sys.n
    c, d = sig.c, sig.d
    J = sp.zeros(n, n)
    for i, eq in enumerate(sys.equations):
        for j, name in enumerate(sys.variables):
            s = sig.sigma[i, j]
            if np.isfinite(s) and d[j] - c[i] == s:
                J[i, j] = partial(eq.expr, name, int(s))
    return SystemJacobian(J, c, d, sys.names, sys.variables)


class Verdict(enum.Enum):
    GENERIC = "generically-nonsingular"
    SINGULAR = "identically-singular"


class MatrixProbe:
    """Evaluate a symbolic matrix to numpy arrays at random points."""

    def __init__(self, M: sp.Matrix, fixed: Mapping | None = None):
        self.shape = M.shape
        self.ev = Evaluator(list(M), fixed=fixed)

    def samples(self, count: int = PROBES, rng=None):
        for point, vals in self.ev.samples(count, rng):
            yield point, np.array(vals, dtype=float).reshape(self.shape)


def det_probe(M: sp.Matrix, count: int = PROBES, rng=None):
    """Yield (point, det, scale) at random probe points."""
    for point, A in MatrixProbe(M).samples(count, rng):
        scale = float(np.prod(np.abs(A).max(axis=1))) if A.size else 1.0
        det = float(np.linalg.det(A)) if A.size else 1.0
        yield point, det, scale


def is_jacobian_nonsingular(J: SystemJacobian | sp.Matrix, rng=None) -> Verdict:
    M = J.entries if isinstance(J, SystemJacobian) else J
    if M.shape[0] == 0:
        return Verdict.GENERIC
    for _, det, scale in det_probe(M, rng=rng):
        if scale > 0 and abs(det) >= DET_TOL * scale:
            return Verdict.GENERIC
    return Verdict.SINGULAR


@dataclass
class Analysis:
    """Σ-method results for one system."""

    system: DaeSystem
    sigma: SignatureMatrix
    jacobian: SystemJacobian

    @property
    def val(self) -> int:
        return self.sigma.val

    @property
    def c(self):
        return self.sigma.c

    @property
    def d(self):
        return self.sigma.d

    @property
    def index(self) -> int:
        return structural_index(self.sigma)

    @cached_property
    def verdict(self) -> Verdict:
        return is_jacobian_nonsingular(self.jacobian)

    @property
    def success(self) -> bool:
        return self.verdict is Verdict.GENERIC


def analyze(sys: DaeSystem, rng=None) -> Analysis:
    sig = signature_matrix(sys, rng=rng)
    sig.hvt  # raises StructurallyIllPosed early
    return Analysis(sys, sig, system_jacobian(sys, sig))


__all__ = [
    "Analysis",
    "DaeSystem",
    "Equation",
    "SignatureMatrix",
    "StructurallyIllPosed",
    "SystemJacobian",
    "Var",
    "Verdict",
    "analyze",
    "det_probe",
    "hvt",
    "is_jacobian_nonsingular",
    "is_valid_offset_pair",
    "offsets",
    "signature_matrix",
    "structural_index",
    "system_jacobian",
]
