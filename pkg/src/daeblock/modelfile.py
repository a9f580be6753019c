"""Reader and writer for the ``.dae`` model format.

::

    # comment
    param R0 = 1000, C1 = 1e-6;
    var x1, x2, x3;
    driver h1;
    let a3 = 2/(2 - cos(x3)^2);        # named subexpression
    fn g(y) = beta*(exp(y/UF) - 1);    # one-line macro
    eq f1: x1 + x2 + h1(t) = 0;

Derivatives are written with primes (``x1''``) or as ``x1^(4)``; the latter
form applies only when the base is a declared variable or driver and the
exponent is a parenthesised integer literal.  Use ``**`` or ``^`` with a bare
literal (``x^2``) for powers.  Primes bind tighter than powers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

import sympy as sp
from sympy.printing.str import StrPrinter

from .structure import DaeSystem, Equation
from .symbolic import Driver, Param, Time, Var, t

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),;:='])
    """,
    re.VERBOSE,
)

FUNCTIONS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}
CONSTANTS = {"pi": sp.pi, "E": sp.E}
KEYWORDS = {"param", "var", "driver", "let", "fn", "eq"}


class ModelSyntaxError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out = []
    line, start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ModelSyntaxError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind != "ws":
            out.append(Token(kind, m.group(), line, m.start() - start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - start + 1))
    return out


def _number(text: str) -> sp.Rational:
    return sp.Rational(Fraction(text))


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0
        self.params: dict[str, sp.Rational] = {}
        self.variables: list[str] = []
        self.drivers: list[str] = []
        self.lets: dict[str, sp.Expr] = {}
        self.fns: dict[str, tuple[list[str], list[Token]]] = {}
        self.equations: list[Equation] = []
        self.scope: list[dict[str, sp.Expr]] = []

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ModelSyntaxError(msg, tok.line, tok.col)

    def next(self) -> Token:
        tok = self.tok
        self.pos += 1
        return tok

    def accept(self, text: str) -> bool:
        if self.tok.kind in ("op", "name") and self.tok.text == text:
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.accept(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.toks[self.pos - 1]

    def name(self) -> Token:
        if self.tok.kind != "name":
            self.error(f"expected a name, found {self.tok.text or 'end of input'!r}")
        return self.next()

    def declare(self, tok: Token):
        taken = (
            set(self.params) | set(self.variables) | set(self.drivers) | set(self.lets)
            | set(self.fns) | set(FUNCTIONS) | set(CONSTANTS) | KEYWORDS | {"t"}
        )
        if tok.text in taken:
            self.error(f"{tok.text!r} is already defined", tok)

    # -- statements
    def parse(self) -> DaeSystem:
        while self.tok.kind != "eof":
            kw = self.name()
            handler = getattr(self, f"_stmt_{kw.text}", None)
            if handler is None:
                self.error(f"unknown statement {kw.text!r}", kw)
            handler()
            self.expect(";")
        if len(self.equations) != len(self.variables):
            tok = self.tok
            raise ModelSyntaxError(
                f"system is not square: {len(self.equations)} equations, "
                f"{len(self.variables)} variables",
                tok.line,
                tok.col,
            )
        return DaeSystem(
            tuple(self.equations),
            tuple(self.variables),
            dict(self.params),
            tuple(self.drivers),
        )

    def _stmt_param(self):
        while True:
            tok = self.name()
            self.declare(tok)
            self.expect("=")
            value = self.expression()
            if value.free_symbols:
                self.error("parameter values must be numeric", tok)
            self.params[tok.text] = sp.nsimplify(value, rational=True) if not value.is_Rational else value
            if not self.accept(","):
                break

    def _names(self, sink: list[str]):
        while True:
            tok = self.name()
            self.declare(tok)
            sink.append(tok.text)
            if not self.accept(","):
                break

    def _stmt_var(self):
        self._names(self.variables)

    def _stmt_driver(self):
        self._names(self.drivers)

    def _stmt_let(self):
        tok = self.name()
        self.declare(tok)
        self.expect("=")
        self.lets[tok.text] = self.expression()

    def _stmt_fn(self):
        tok = self.name()
        self.declare(tok)
        self.expect("(")
        args = [self.name().text]
        while self.accept(","):
            args.append(self.name().text)
        self.expect(")")
        self.expect("=")
        begin = self.pos
        depth = 0
        while not (self.tok.text == ";" and depth == 0):
            if self.tok.kind == "eof":
                self.error("unterminated fn definition")
            depth += {"(": 1, ")": -1}.get(self.tok.text, 0)
            self.pos += 1
        body = self.toks[begin : self.pos] + [Token("op", ";", self.tok.line, self.tok.col)]
        self.fns[tok.text] = (args, body)

    def _stmt_eq(self):
        tok = self.name()
        if tok.text in {e.name for e in self.equations}:
            self.error(f"duplicate equation name {tok.text!r}", tok)
        self.expect(":")
        lhs = self.expression()
        self.expect("=")
        rhs = self.expression()
        self.equations.append(Equation(tok.text, lhs - rhs))

    # -- expressions
    def expression(self) -> sp.Expr:
        left = self.term()
        while self.tok.text in ("+", "-"):
            op = self.next().text
            right = self.term()
            left = left + right if op == "+" else left - right
        return left

    def term(self) -> sp.Expr:
        left = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.next().text
            right = self.unary()
            left = left * right if op == "*" else left / right
        return left

    def unary(self) -> sp.Expr:
        if self.accept("-"):
            return -self.unary()
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> sp.Expr:
        base = self.primary()
        if self.tok.text in ("^", "**"):
            self.next()
            return base ** self.unary()
        return base

    def _order(self) -> int:
        k = 0
        while self.accept("'"):
            k += 1
        if k == 0 and self.tok.text == "^" and self._derivative_exponent():
            self.next()
            self.next()
            k = int(self.next().text)
            self.next()
        return k

    def _derivative_exponent(self) -> bool:
        toks = self.toks[self.pos : self.pos + 4]
        return (
            len(toks) == 4
            and toks[1].text == "("
            and toks[2].kind == "num"
            and toks[2].text.isdigit()
            and toks[3].text == ")"
        )

    def primary(self) -> sp.Expr:
        tok = self.tok
        if tok.kind == "num":
            self.next()
            return _number(tok.text)
        if self.accept("("):
            e = self.expression()
            self.expect(")")
            return e
        if tok.kind != "name":
            self.error(f"unexpected {tok.text or 'end of input'!r}")
        self.next()
        name = tok.text
        for frame in reversed(self.scope):
            if name in frame:
                return frame[name]
        if name in self.variables:
            return Var(name, self._order())
        if name in self.drivers:
            k = self._order()
            if self.accept("("):
                self.expect("t")
                self.expect(")")
            return Driver(name, k)
        if name in self.params:
            return Param(name)
        if name == "t":
            return t
        if name in CONSTANTS:
            return CONSTANTS[name]
        if name in self.lets:
            return self.lets[name]
        if name in FUNCTIONS or name in self.fns:
            self.expect("(")
            args = [self.expression()]
            while self.accept(","):
                args.append(self.expression())
            self.expect(")")
            if name in FUNCTIONS:
                if len(args) != 1:
                    self.error(f"{name} takes one argument", tok)
                return FUNCTIONS[name](args[0])
            return self._expand(tok, args)
        self.error(f"undeclared symbol {name!r}", tok)

    def _expand(self, tok: Token, args: list[sp.Expr]) -> sp.Expr:
        params, body = self.fns[tok.text]
        if len(params) != len(args):
            self.error(f"{tok.text} takes {len(params)} arguments", tok)
        saved_toks, saved_pos = self.toks, self.pos
        self.toks, self.pos = body, 0
        self.scope.append(dict(zip(params, args)))
        try:
            e = self.expression()
            if self.tok.text != ";":
                self.error("trailing tokens in fn body")
        finally:
            self.scope.pop()
            self.toks, self.pos = saved_toks, saved_pos
        return e


def parse_model(text: str) -> DaeSystem:
    """Parse model text into a :class:`DaeSystem`."""
    return _Parser(text).parse()


def load_model(path) -> DaeSystem:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


class _ModelPrinter(StrPrinter):
    def _print_Symbol(self, expr):
        return expr.name

    _print_Var = _print_Symbol
    _print_Driver = _print_Symbol
    _print_Param = _print_Symbol
    _print_Time = _print_Symbol


def format_expr(e) -> str:
    return _ModelPrinter({"order": "none"}).doprint(sp.sympify(e))


def _format_value(v: sp.Rational) -> str:
    return str(v)


def format_model(sys: DaeSystem, header: str | None = None) -> str:
    """Write ``sys`` in the model grammar; conversion provenance becomes comments."""
    lines = []
    if header:
        lines += [f"# {line}" for line in header.splitlines()]
    for rec in sys.provenance:
        for line in str(rec).splitlines():
            lines.append(f"# {line}")
    if sys.parameters:
        lines.append("param " + ", ".join(f"{k} = {_format_value(v)}" for k, v in sys.parameters.items()) + ";")
    lines.append("var " + ", ".join(sys.variables) + ";")
    if sys.drivers:
        lines.append("driver " + ", ".join(sys.drivers) + ";")
    for eq in sys.equations:
        lines.append(f"eq {eq.name}: {format_expr(eq.expr)} = 0;")
    return "\n".join(lines) + "\n"
