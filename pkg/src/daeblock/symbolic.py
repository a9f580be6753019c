"""Small computer-algebra layer on top of sympy.

Derivatives of unknowns are independent symbols: ``Var("x1", 2)`` stands for
x1''.  Driving functions work the same way (``Driver("h1", 1)`` is h1'(t)).
Total time differentiation is the chain rule over these jet symbols, so an
expression never contains an unevaluated ``Derivative``.
"""

from __future__ import annotations

import math
import re
from typing import Iterable, Mapping

import numpy as np
import sympy as sp

NEG_INF = float("-inf")

PROBES = 20
MAX_RESAMPLES = 100
ZERO_TOL = 1e-12
PROBE_LOW, PROBE_HIGH = -2.0, 2.0

_ORDER_RE = re.compile(r"^(?P<base>.*?)(?:(?P<primes>'+)|\^\((?P<k>\d+)\))?$")


class ProbeExhaustion(RuntimeError):
    """Every probe point hit a singularity of the expression."""


def _label(base: str, order: int) -> str:
    if order < 0:
        raise ValueError(f"negative derivative order {order} for {base}")
    if order == 0:
        return base
    if order <= 3:
        return base + "'" * order
    return f"{base}^({order})"


def _split(label: str) -> tuple[str, int]:
    m = _ORDER_RE.match(label)
    if m["primes"]:
        return m["base"], len(m["primes"])
    if m["k"]:
        return m["base"], int(m["k"])
    return m["base"], 0


class Var(sp.Symbol):
    """The ``order``-th derivative of the unknown ``base``."""

    def __new__(cls, base: str, order: int = 0):
        return super().__new__(cls, _label(base, order))

    @property
    def base(self) -> str:
        return _split(self.name)[0]

    @property
    def order(self) -> int:
        return _split(self.name)[1]

    def shifted(self, m: int = 1) -> "Var":
        return Var(self.base, self.order + m)


class Driver(sp.Symbol):
    """A derivative of a known driving function of time, printed ``h'(t)``."""

    def __new__(cls, base: str, order: int = 0):
        if base.endswith("(t)"):
            base, order = _split(base[:-3])[0], _split(base[:-3])[1] + order
        return super().__new__(cls, _label(base, order) + "(t)")

    @property
    def base(self) -> str:
        return _split(self.name[:-3])[0]

    @property
    def order(self) -> int:
        return _split(self.name[:-3])[1]

    def shifted(self, m: int = 1) -> "Driver":
        return Driver(self.base, self.order + m)


class Param(sp.Symbol):
    """A named constant."""


class Time(sp.Symbol):
    pass


t = Time("t")


def var(base: str, order: int = 0) -> Var:
    return Var(base, order)


def is_constant(e: sp.Expr) -> bool:
    """True when ``e`` involves no unknowns, drivers or time (parameters allowed)."""
    return not any(isinstance(s, (Var, Driver, Time)) for s in sp.sympify(e).free_symbols)


def _time_derivative(e: sp.Expr) -> sp.Expr:
    out = sp.Integer(0)
    for s in e.free_symbols:
        if isinstance(s, (Var, Driver)):
            out += sp.diff(e, s) * s.shifted()
        elif isinstance(s, Time):
            out += sp.diff(e, s)
    return out


def total_derivative(e, m: int = 1) -> sp.Expr:
    """Return the ``m``-th total time derivative of ``e``."""
    if m < 0:
        raise ValueError("derivative order must be nonnegative")
    e = sp.sympify(e)
    for _ in range(m):
        e = _time_derivative(e)
    return e


def partial(e, j: str, k: int) -> sp.Expr:
    """Partial derivative with respect to the jet symbol x_j^(k)."""
    return sp.diff(sp.sympify(e), Var(j, k))


def substitute(e, target: tuple[str, int], replacement) -> sp.Expr:
    j, k = target
    return sp.sympify(e).xreplace({Var(j, k): sp.sympify(replacement)})


def orders_present(e, j: str) -> list[int]:
    return sorted(
        {s.order for s in sp.sympify(e).free_symbols if isinstance(s, Var) and s.base == j},
        reverse=True,
    )


def sigma_of(e, j: str, rng: np.random.Generator | None = None):
    """Highest order of x_j on which ``e`` genuinely depends, or ``NEG_INF``.

    Syntactic occurrences whose partial derivative is identically zero
    (hidden cancellations) are skipped.
    """
    e = sp.sympify(e)
    for k in orders_present(e, j):
        if not is_identically_zero(sp.diff(e, Var(j, k)), rng=rng):
            return k
    return NEG_INF


def variables_in(e) -> set[str]:
    return {s.base for s in sp.sympify(e).free_symbols if isinstance(s, Var)}


# -- numerical probing ------------------------------------------------------

def _ordered_symbols(exprs: Iterable[sp.Expr]) -> list[sp.Symbol]:
    syms: set[sp.Symbol] = set()
    for e in exprs:
        syms |= sp.sympify(e).free_symbols
    return sorted(syms, key=lambda s: (type(s).__name__, s.name))


def _default_rng(rng):
    return rng if rng is not None else np.random.default_rng(0x5EED)


def probe_points(symbols, rng=None, fixed: Mapping[sp.Symbol, float] | None = None):
    """Yield random assignments of ``symbols`` in (-2, 2); ``fixed`` overrides."""
    rng = _default_rng(rng)
    fixed = dict(fixed or {})
    while True:
        point = {s: float(rng.uniform(PROBE_LOW, PROBE_HIGH)) for s in symbols}
        point.update(fixed)
        yield point


class Evaluator:
    """Compiled float evaluation of a list of expressions at probe points."""

    def __init__(self, exprs: Iterable, fixed: Mapping | None = None):
        self.exprs = [sp.sympify(e) for e in exprs]
        self.fixed = {k: float(v) for k, v in (fixed or {}).items()}
        self.symbols = _ordered_symbols(self.exprs)
        self._fn = sp.lambdify(self.symbols, self.exprs, modules="math")

    def at(self, point: Mapping) -> list[float]:
        """Evaluate at ``point``; raises ``ArithmeticError`` on singular points."""
        args = [point[s] for s in self.symbols]
        try:
            vals = self._fn(*args)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise ArithmeticError(str(exc)) from exc
        out = []
        for v in vals:
            if isinstance(v, complex):
                if abs(v.imag) > 0:
                    raise ArithmeticError("complex value")
                v = v.real
            v = float(v)
            if not math.isfinite(v):
                raise ArithmeticError("non-finite value")
            out.append(v)
        return out

    def samples(self, count: int = PROBES, rng=None):
        """Yield ``count`` (point, values) pairs, resampling singular points."""
        points = probe_points(self.symbols, rng, self.fixed)
        produced = failures = 0
        while produced < count:
            point = next(points)
            try:
                vals = self.at(point)
            except ArithmeticError:
                failures += 1
                if failures > MAX_RESAMPLES:
                    raise ProbeExhaustion("probe exhaustion") from None
                continue
            produced += 1
            yield point, vals


def _magnitude(e: sp.Expr) -> list[sp.Expr]:
    return list(e.args) if isinstance(e, sp.Add) else [e]


def is_identically_zero(e, rng=None, probes: int = PROBES) -> bool:
    """Probabilistic zero test.

    One-sided: a ``False`` answer is certain, a ``True`` answer can be wrong
    with negligible probability.  Cancellation is judged relative to the
    magnitude of the summands.
    """
    e = sp.sympify(e)
    if e == 0:
        return True
    if not e.free_symbols:
        return abs(complex(e.evalf())) < ZERO_TOL
    terms = _magnitude(e)
    ev = Evaluator([e, *terms])
    for _, vals in ev.samples(probes, rng):
        scale = max(1.0, sum(abs(v) for v in vals[1:]))
        if abs(vals[0]) > ZERO_TOL * scale:
            return False
    return True


def prune(e, rng=None) -> sp.Expr:
    """Drop jet symbols that ``e`` does not genuinely depend on.

    Such a symbol can be set to any value; the result is kept only when it
    agrees with ``e`` at random points.
    """
    e = sp.sympify(e)
    fake = {}
    for s in e.free_symbols:
        if isinstance(s, (Var, Driver)) and is_identically_zero(sp.diff(e, s), rng=rng):
            fake[s] = sp.Integer(0)
    if not fake:
        return e
    for value in (sp.Integer(0), sp.Integer(1)):
        candidate = e.xreplace({s: value for s in fake})
        if candidate.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
            continue
        try:
            if is_identically_zero(candidate - e, rng=rng):
                return candidate
        except ProbeExhaustion:
            continue
    return e


def tidy(e) -> sp.Expr:
    """Cheap normalisation used before display: cancel rational structure."""
    e = sp.sympify(e)
    try:
        out = sp.cancel(sp.together(e))
    except sp.PolynomialError:
        return e
    return out if sp.count_ops(out) <= sp.count_ops(e) else e
