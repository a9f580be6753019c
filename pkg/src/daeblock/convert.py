"""Block linear-combination (LC) and expression-substitution (ES) conversions.

Both act on one identically singular diagonal block of the fine BTF and
produce an equivalent DAE whose signature-matrix value is strictly smaller.
Plans refer to *permuted* positions of the block structure they were built
from; ``row_perm``/``col_perm`` map them back to the system's own order.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy as sp

from .btf import BlockStructure, fine_btf, jacobian_pattern
from .modelfile import format_expr
from .structure import Analysis, DaeSystem, Equation, SignatureMatrix, analyze
from .symbolic import NEG_INF, Var, is_constant, is_identically_zero, prune, sigma_of, total_derivative
from .symla import NotSingular, NullVector, cokernel_vector, embed_in_full, kernel_vector, rank_probe

log = logging.getLogger(__name__)


class ConditionFailure(Exception):
    """A conversion's applicability condition does not hold."""

    def __init__(self, method: str, msg: str, column: str | None = None):
        super().__init__(f"{method}: {msg}")
        self.method = method
        self.column = column


class NoApplicableConversion(RuntimeError):
    def __init__(self, failures: Sequence[str]):
        super().__init__("no applicable conversion: " + "; ".join(failures))
        self.failures = list(failures)


class IterationLimit(RuntimeError):
    pass


def _sigma_vec(entries: Sequence[sp.Expr], name: str, rng=None):
    """σ(x_j, u): highest derivative order of x_j in any entry of ``u``."""
    return max((sigma_of(e, name, rng=rng) for e in entries), default=NEG_INF)


def _fmt_sigma(v) -> str:
    return "-inf" if v == NEG_INF else str(int(v))


@dataclass
class ConversionRecord:
    kind: str
    block: int  # 1-based
    description: str
    replaced: tuple[str, ...] = ()
    introduced: tuple[str, ...] = ()
    appended: tuple[str, ...] = ()
    val_before: int | None = None
    val_after: int | None = None
    guaranteed: bool = True

    def __str__(self):
        head = f"{self.kind} conversion on block {self.block}"
        if self.val_before is not None:
            head += f": val {self.val_before} -> {self.val_after}"
        lines = [head, *self.description.splitlines()]
        if not self.guaranteed:
            lines.append("equivalence not guaranteed (nonconstant pivot coefficient)")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "block": self.block,
            "description": self.description,
            "replaced": list(self.replaced),
            "introduced": list(self.introduced),
            "appended": list(self.appended),
            "val_before": self.val_before,
            "val_after": self.val_after,
            "equivalence_guaranteed": self.guaranteed,
        }


@dataclass
class LcPlan:
    q: int
    u: NullVector
    I: tuple[int, ...]
    c_low: int
    L: tuple[int, ...]
    L_const: tuple[int, ...]
    l: int
    blocks: BlockStructure

    @property
    def guaranteed(self) -> bool:
        return self.l in self.L_const

    def row(self, k: int) -> int:
        return self.blocks.row_perm[k]


@dataclass
class EsPlan:
    q: int
    v: NullVector
    J: tuple[int, ...]
    I: tuple[int, ...]
    c_high: int
    J_const: tuple[int, ...]
    l: int
    blocks: BlockStructure

    @property
    def s(self) -> int:
        return len(self.J)

    @property
    def guaranteed(self) -> bool:
        return self.l in self.J_const

    def col(self, m: int) -> int:
        return self.blocks.col_perm[m]


@dataclass
class ConversionResult:
    system: DaeSystem
    kind: str
    plan: LcPlan | EsPlan
    record: ConversionRecord
    before: Analysis
    after: Analysis
    substitutions: dict = field(default_factory=dict)

    @property
    def old_val(self) -> int:
        return self.before.val

    @property
    def new_val(self) -> int:
        return self.after.val


def _pick(candidates: Sequence[int], fallback: Sequence[int], choose: int | None, what: str) -> int:
    if choose is not None:
        if choose not in fallback:
            raise ValueError(f"chosen {what} {choose} is not admissible")
        return choose
    return min(candidates) if candidates else min(fallback)


# -- LC ---------------------------------------------------------------------

def plan_lc(
    sys: DaeSystem,
    sig: SignatureMatrix,
    blocks: BlockStructure,
    q: int,
    u: NullVector,
    choose: int | None = None,
    rng=None,
) -> LcPlan:
    """Sets and condition check for a block LC conversion.

    ``u`` is a cokernel vector of length n in permuted coordinates; ``choose``
    optionally forces the permuted row position l.
    """
    rng_ = rng
    rows = blocks.block_range(q)
    I = tuple(u.support)
    if not set(I) <= set(rows):
        raise ValueError("cokernel vector support leaves the block")
    c = {k: int(sig.c[blocks.row_perm[k]]) for k in I}
    c_low = min(c.values())
    L = tuple(k for k in I if c[k] == c_low)
    L_const = tuple(k for k in L if is_constant(u[k]))
    for m in blocks.block_range(q):
        j = blocks.col_perm[m]
        name = sys.variables[j]
        su = _sigma_vec(u.entries, name, rng=rng_)
        bound = int(sig.d[j]) - c_low
        if not su < bound:
            raise ConditionFailure(
                "LC", f"σ({name}, u) = {_fmt_sigma(su)} is not < d_j - c = {bound}", column=name
            )
    l = _pick(L_const, L, choose, "row")
    if l not in L_const:
        log.warning("LC: no constant coefficient in L; equivalence not guaranteed")
    return LcPlan(q, u, I, c_low, L, L_const, l, blocks)


def _term(coef: sp.Expr, name: str, order: int) -> str:
    lab = name + ("'" * order if order <= 3 else f"^({order})")
    if coef == 1:
        return lab
    if coef == -1:
        return f"-{lab}"
    text = format_expr(coef)
    if isinstance(coef, sp.Add):
        text = f"({text})"
    return f"{text}*{lab}"


def apply_lc(sys: DaeSystem, plan: LcPlan, before: Analysis | None = None, rng=None) -> ConversionResult:
    before = before or analyze(sys, rng=rng)
    sig = before.sigma
    combo = sp.Integer(0)
    terms = []
    for k in plan.I:
        i = plan.row(k)
        order = int(sig.c[i]) - plan.c_low
        combo += plan.u[k] * total_derivative(sys.equations[i].expr, order)
        terms.append(_term(plan.u[k], sys.equations[i].name, order))
    combo = prune(sp.expand(combo) if _expand_is_cheap(combo) else combo, rng=rng)
    target = plan.row(plan.l)
    name = sys.equations[target].name
    eqs = list(sys.equations)
    eqs[target] = Equation(name, combo)
    text = " + ".join(terms).replace("+ -", "- ")
    record = ConversionRecord(
        "LC",
        plan.q + 1,
        f"{name} replaced by {text}",
        replaced=(name,),
        guaranteed=plan.guaranteed,
    )
    new = sys.evolve(equations=tuple(eqs))
    after = analyze(new, rng=rng)
    record.val_before, record.val_after = before.val, after.val
    new = new.evolve(provenance=sys.provenance + (record,))
    after.system = new
    if not after.val < before.val:
        raise AssertionError(f"LC conversion did not decrease val Σ ({before.val} -> {after.val})")
    return ConversionResult(new, "LC", plan, record, before, after)


def _expand_is_cheap(e: sp.Expr) -> bool:
    return sp.count_ops(e) < 400


# -- ES ---------------------------------------------------------------------

def plan_es(
    sys: DaeSystem,
    sig: SignatureMatrix,
    blocks: BlockStructure,
    q: int,
    v: NullVector,
    choose: int | None = None,
    rng=None,
) -> EsPlan:
    """Sets and condition checks for a block ES conversion.

    ``v`` is a kernel vector of length n in permuted coordinates; ``choose``
    optionally forces the permuted column position l.
    """
    block = set(blocks.block_range(q))
    J = tuple(v.support)
    if not set(J) <= block:
        raise ValueError("kernel vector support leaves the block")
    if len(J) < 2:
        raise ConditionFailure("ES", "no-op plan: kernel vector has a single nonzero entry")
    c = sig.c
    d = sig.d
    I = []
    for k in sorted(block):
        i = blocks.row_perm[k]
        for m in J:
            j = blocks.col_perm[m]
            s = sig.sigma[i, j]
            if np.isfinite(s) and d[j] - c[i] == s:
                I.append(k)
                break
    I = tuple(I)
    c_high = max(int(c[blocks.row_perm[k]]) for k in I)
    J_const = tuple(m for m in J if is_constant(v[m]))
    for m in range(blocks.n):
        j = blocks.col_perm[m]
        name = sys.variables[j]
        sv = _sigma_vec(v.entries, name, rng=rng)
        bound = int(d[j]) - c_high
        b = blocks.blk(m)
        if m in J or b < q:
            if not sv < bound:
                raise ConditionFailure(
                    "ES", f"σ({name}, v) = {_fmt_sigma(sv)} is not < d_j - c = {bound}", column=name
                )
        elif not sv <= bound:
            raise ConditionFailure(
                "ES", f"σ({name}, v) = {_fmt_sigma(sv)} is not <= d_j - c = {bound}", column=name
            )
    for m in J:
        j = blocks.col_perm[m]
        if int(d[j]) - c_high < 0:
            name = sys.variables[j]
            raise ConditionFailure("ES", f"d_j - c = {int(d[j]) - c_high} < 0 for {name}", column=name)
    l = _pick(J_const, J, choose, "column")
    if l not in J_const:
        log.warning("ES: no constant kernel entry chosen; equivalence needs v_l != 0")
    return EsPlan(q, v, J, I, c_high, J_const, l, blocks)


def _fresh(prefix: str, base: str, taken: set[str]) -> str:
    m = re.fullmatch(r"[A-Za-z]+(\d+)", base)
    name = prefix + m.group(1) if m else f"{prefix}_{base}"
    cand, k = name, 2
    while cand in taken:
        cand = f"{name}_{k}"
        k += 1
    return cand


def apply_es(sys: DaeSystem, plan: EsPlan, before: Analysis | None = None, rng=None) -> ConversionResult:
    before = before or analyze(sys, rng=rng)
    sig = before.sigma
    c, d = sig.c, sig.d
    ch = plan.c_high
    l_col = plan.col(plan.l)
    l_name = sys.variables[l_col]
    xl = Var(l_name, int(d[l_col]) - ch)
    vl = plan.v[plan.l]

    taken_vars = set(sys.variables) | set(sys.parameters) | set(sys.drivers)
    taken_eqs = set(sys.names)
    new_vars, new_eqs = [], []
    defs = {}  # j -> (y name, ratio)
    lines = []
    for m in plan.J:
        if m == plan.l:
            continue
        j = plan.col(m)
        name = sys.variables[j]
        y = _fresh("y", name, taken_vars)
        taken_vars.add(y)
        g = _fresh("g", name, taken_eqs)
        taken_eqs.add(g)
        ratio = sp.cancel(sp.together(plan.v[m] / vl)) if not is_constant(vl) else plan.v[m] / vl
        defs[j] = (y, ratio)
        xj = Var(name, int(d[j]) - ch)
        new_vars.append(y)
        new_eqs.append(Equation(g, -Var(y) + xj - ratio * xl))
        lines.append(f"{y} = {format_expr(xj - ratio * xl)}")

    eqs = list(sys.equations)
    replaced = []
    for k in plan.I:
        i = plan.blocks.row_perm[k]
        mapping = {}
        for j, (y, ratio) in defs.items():
            s = sig.sigma[i, j]
            if np.isfinite(s) and d[j] - c[i] == s:
                mapping[Var(sys.variables[j], int(s))] = total_derivative(Var(y) + ratio * xl, ch - int(c[i]))
        if mapping:
            expr = prune(eqs[i].expr.xreplace(mapping), rng=rng)
            eqs[i] = Equation(eqs[i].name, expr)
            replaced.append(eqs[i].name)
            subs = ", ".join(f"{format_expr(k_)} -> {format_expr(v_)}" for k_, v_ in mapping.items())
            lines.append(f"in {eqs[i].name}: {subs}")

    record = ConversionRecord(
        "ES",
        plan.q + 1,
        "\n".join(lines),
        replaced=tuple(replaced),
        introduced=tuple(new_vars),
        appended=tuple(e.name for e in new_eqs),
        guaranteed=plan.guaranteed,
    )
    new = sys.evolve(
        equations=tuple(eqs) + tuple(new_eqs),
        variables=sys.variables + tuple(new_vars),
        introduced=sys.introduced | frozenset(new_vars),
    )
    after = analyze(new, rng=rng)
    record.val_before, record.val_after = before.val, after.val
    new = new.evolve(provenance=sys.provenance + (record,))
    after.system = new
    if not after.val < before.val:
        raise AssertionError(f"ES conversion did not decrease val Σ ({before.val} -> {after.val})")
    if new.n != sys.n + plan.s - 1:
        raise AssertionError("ES conversion grew the system by the wrong amount")
    subs = {y: (sys.variables[j], int(d[j]) - ch, ratio, l_name, int(d[l_col]) - ch) for j, (y, ratio) in defs.items()}
    return ConversionResult(new, "ES", plan, record, before, after, subs)


# -- post-conversion checks --------------------------------------------------

def check_lc_sigma_bounds(old: SignatureMatrix, new: SignatureMatrix, blocks: BlockStructure) -> bool:
    """Old offsets bound the converted Σ: strictly below the block diagonal."""
    rb, cb = blocks.row_block, blocks.col_block
    diff = old.d[None, :] - old.c[:, None]
    for i in range(old.n):
        for j in range(old.n):
            s = new.sigma[i, j]
            if cb[j] < rb[i]:
                if not diff[i, j] > s:
                    return False
            elif not diff[i, j] >= s:
                return False
    return True


def es_offsets(old: SignatureMatrix, result: ConversionResult):
    """The enlarged (c̄; d̄) pair: old offsets, and c̄ for every new row and column."""
    k = result.system.n - old.n
    ch = result.plan.c_high
    c_bar = np.concatenate([old.c, np.full(k, ch, dtype=int)])
    d_bar = np.concatenate([old.d, np.full(k, ch, dtype=int)])
    return c_bar, d_bar


def check_es_offset_bounds(old: SignatureMatrix, result: ConversionResult, blocks: BlockStructure) -> bool:
    """Inequalities of the enlarged offset pair against the converted Σ.

    New rows (g_j) and columns (y_j) join block q; everything else keeps its
    old block.
    """
    new = result.after.sigma
    n_old = old.n
    k = new.n - n_old
    if k == 0:
        return True
    q = result.plan.q
    rb = dict(blocks.row_block)
    cb = dict(blocks.col_block)
    for r in range(n_old, new.n):
        rb[r] = q
        cb[r] = q
    c_bar, d_bar = es_offsets(old, result)
    if int(d_bar.sum() - c_bar.sum()) != old.val:
        return False
    diff = d_bar[None, :] - c_bar[:, None]
    for i in range(new.n):
        for j in range(new.n):
            s = new.sigma[i, j]
            if cb[j] < rb[i]:
                if not diff[i, j] > s:
                    return False
            elif not diff[i, j] >= s:
                return False
    return True


def verify_equivalence(result: ConversionResult, rng=None) -> bool:
    """Probe-level check that the converted equations follow from the old ones."""
    old = result.before.system
    new = result.system
    if result.kind == "LC":
        plan = result.plan
        sig = result.before.sigma
        combo = sum(
            (plan.u[k] * total_derivative(old.equations[plan.row(k)].expr, int(sig.c[plan.row(k)]) - plan.c_low)
             for k in plan.I),
            sp.Integer(0),
        )
        target = plan.row(plan.l)
        return is_identically_zero(new.equations[target].expr - combo, rng=rng)
    back = {}
    top = max((s.order for e in new.exprs for s in e.free_symbols if isinstance(s, Var)), default=0)
    for y, (xj, kj, ratio, xl, kl) in result.substitutions.items():
        definition = Var(xj, kj) - ratio * Var(xl, kl)
        for k in range(top + 1):
            back[Var(y, k)] = total_derivative(definition, k)
    for i, eq in enumerate(old.equations):
        if not is_identically_zero(new.equations[i].expr.xreplace(back) - eq.expr, rng=rng):
            return False
    return all(is_identically_zero(e.expr.xreplace(back), rng=rng) for e in new.equations[old.n :])


# -- driver -----------------------------------------------------------------

@dataclass
class BlockReport:
    q: int
    rows: list[int]
    cols: list[int]
    rank: int
    size: int

    @property
    def singular(self) -> bool:
        return self.rank < self.size


def block_reports(an: Analysis, blocks: BlockStructure, rng=None) -> list[BlockReport]:
    out = []
    for q in range(blocks.p):
        rows, cols = blocks.rows(q), blocks.cols(q)
        M = an.jacobian.block(rows, cols)
        out.append(BlockReport(q, rows, cols, rank_probe(M, rng=rng), len(rows)))
    return out


def convert_block(
    sys: DaeSystem,
    an: Analysis,
    blocks: BlockStructure,
    q: int,
    method: str,
    choose: int | None = None,
    rng=None,
) -> ConversionResult:
    """Compute the null vector for block ``q`` and apply one conversion."""
    rows, cols = blocks.rows(q), blocks.cols(q)
    M = an.jacobian.block(rows, cols)
    if method == "lc":
        u = embed_in_full(cokernel_vector(M, rng=rng), blocks, q)
        plan = plan_lc(sys, an.sigma, blocks, q, u, choose=choose, rng=rng)
        return apply_lc(sys, plan, before=an, rng=rng)
    if method == "es":
        v = embed_in_full(kernel_vector(M, rng=rng), blocks, q)
        plan = plan_es(sys, an.sigma, blocks, q, v, choose=choose, rng=rng)
        return apply_es(sys, plan, before=an, rng=rng)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class FixResult:
    system: DaeSystem
    initial: Analysis
    final: Analysis
    conversions: list[ConversionResult]
    failures: list[str]

    @property
    def success(self) -> bool:
        return self.final.success


METHOD_ORDER = {"auto": ("lc", "es"), "lc": ("lc",), "es": ("es",)}


def fix_dae(sys: DaeSystem, method: str = "auto", max_iter: int = 10, rng=None) -> FixResult:
    """Convert singular fine blocks until the System Jacobian is nonsingular."""
    methods = METHOD_ORDER[method]
    an = analyze(sys, rng=rng)
    initial = an
    conversions: list[ConversionResult] = []
    failures: list[str] = []
    while not an.success:
        if len(conversions) >= max_iter:
            raise IterationLimit(f"iteration limit of {max_iter} conversions reached")
        blocks = fine_btf(jacobian_pattern(an.sigma))
        singular = [b for b in block_reports(an, blocks, rng=rng) if b.singular]
        if not singular:
            raise AssertionError("identically singular Jacobian without a singular fine block")
        done = None
        for b in singular:
            for meth in methods:
                try:
                    done = convert_block(an.system, an, blocks, b.q, meth, rng=rng)
                    break
                except (ConditionFailure, NotSingular) as exc:
                    failures.append(f"block {b.q + 1}: {exc}")
            if done:
                break
        if done is None:
            raise NoApplicableConversion(failures)
        conversions.append(done)
        an = done.after
    return FixResult(an.system, initial, an, conversions, failures)
