"""Small smooth-expression language with symbolic derivatives.

Grammar (used by config files for profiles, plane-field coframes and
vector fields)::

    expr   := ['-'] term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' integer)?
    base   := number | ident | ident '(' args ')' | '(' expr ')'

Every admissible construct is C^infinity on its domain: the function
table contains only smooth primitives (``sin``, ``cos``, ``exp``, smooth
min/max ``smin``/``smax``, ``bump``, ``smoothstep``) and division is
guarded separately by a sampled nonvanishing-denominator check.
``bump(u) = exp(-1/(1-u^2))`` for |u| < 1 and 0 elsewhere;
``smoothstep`` is the bump-style one-sided interpolant, exactly 0 for
u <= 0 and exactly 1 for u >= 1.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Expr",
    "ParseError",
    "SmoothnessError",
    "parse_expr",
    "check_denominators",
    "DEFAULT_VARIABLES",
]

DEFAULT_VARIABLES = ("r", "theta", "phi", "t", "s", "u",
                     "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8",
                     "y1", "y2")


class ParseError(ValueError):
    """Syntax or vocabulary error, carrying 1-based line/column."""

    def __init__(self, message, line, col):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


class SmoothnessError(ValueError):
    """A construct that cannot be certified smooth (e.g. sampled zero denominator)."""


# ---------------------------------------------------------------------------
# AST nodes


class Expr:
    """Base class; subclasses implement eval(env) and diff(var)."""

    def eval(self, env):
        raise NotImplementedError

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    def variables(self) -> set:
        out = set()
        self._collect_vars(out)
        return out

    def _collect_vars(self, out):
        for child in self.children():
            child._collect_vars(out)

    def children(self):
        return ()

    def __call__(self, **env):
        return self.eval(env)

    def __str__(self):
        return self._text(0)

    def _text(self, prec):
        raise NotImplementedError


class Const(Expr):
    def __init__(self, value):
        self.value = float(value)

    def eval(self, env):
        return self.value

    def diff(self, var):
        return Const(0.0)

    def _text(self, prec):
        if self.value < 0 and prec > 0:
            return f"({self.value:g})"
        return f"{self.value:g}"


class Var(Expr):
    def __init__(self, name):
        self.name = name

    def eval(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise KeyError(f"no value bound for variable '{self.name}'") from None

    def diff(self, var):
        return Const(1.0 if var == self.name else 0.0)

    def _collect_vars(self, out):
        out.add(self.name)

    def _text(self, prec):
        return self.name


def _is_const(e, v=None):
    return isinstance(e, Const) and (v is None or e.value == v)


class Add(Expr):
    def __new__(cls, a, b):
        if _is_const(a, 0.0):
            return b
        if _is_const(b, 0.0):
            return a
        if _is_const(a) and _is_const(b):
            return Const(a.value + b.value)
        self = object.__new__(cls)
        self.a, self.b = a, b
        return self

    def children(self):
        return (self.a, self.b)

    def eval(self, env):
        return self.a.eval(env) + self.b.eval(env)

    def diff(self, var):
        return Add(self.a.diff(var), self.b.diff(var))

    def _text(self, prec):
        s = f"{self.a._text(1)} + {self.b._text(1)}"
        return f"({s})" if prec > 1 else s


class Sub(Expr):
    def __new__(cls, a, b):
        if _is_const(b, 0.0):
            return a
        if _is_const(a) and _is_const(b):
            return Const(a.value - b.value)
        self = object.__new__(cls)
        self.a, self.b = a, b
        return self

    def children(self):
        return (self.a, self.b)

    def eval(self, env):
        return self.a.eval(env) - self.b.eval(env)

    def diff(self, var):
        return Sub(self.a.diff(var), self.b.diff(var))

    def _text(self, prec):
        s = f"{self.a._text(1)} - {self.b._text(2)}"
        return f"({s})" if prec > 1 else s


class Mul(Expr):
    def __new__(cls, a, b):
        if _is_const(a, 0.0) or _is_const(b, 0.0):
            return Const(0.0)
        if _is_const(a, 1.0):
            return b
        if _is_const(b, 1.0):
            return a
        if _is_const(a) and _is_const(b):
            return Const(a.value * b.value)
        self = object.__new__(cls)
        self.a, self.b = a, b
        return self

    def children(self):
        return (self.a, self.b)

    def eval(self, env):
        return self.a.eval(env) * self.b.eval(env)

    def diff(self, var):
        return Add(Mul(self.a.diff(var), self.b), Mul(self.a, self.b.diff(var)))

    def _text(self, prec):
        s = f"{self.a._text(2)} * {self.b._text(2)}"
        return f"({s})" if prec > 2 else s


class Div(Expr):
    def __new__(cls, a, b):
        if _is_const(a, 0.0):
            return Const(0.0)
        if _is_const(b, 1.0):
            return a
        if _is_const(a) and _is_const(b) and b.value != 0.0:
            return Const(a.value / b.value)
        self = object.__new__(cls)
        self.a, self.b = a, b
        return self

    def children(self):
        return (self.a, self.b)

    def eval(self, env):
        return self.a.eval(env) / self.b.eval(env)

    def diff(self, var):
        num = Sub(Mul(self.a.diff(var), self.b), Mul(self.a, self.b.diff(var)))
        return Div(num, Pow(self.b, 2))

    def _text(self, prec):
        s = f"{self.a._text(2)} / {self.b._text(3)}"
        return f"({s})" if prec > 2 else s


class Pow(Expr):
    def __new__(cls, a, k):
        k = int(k)
        if k == 1:
            return a
        if k == 0:
            return Const(1.0)
        if _is_const(a):
            return Const(a.value ** k)
        self = object.__new__(cls)
        self.a, self.k = a, k
        return self

    def children(self):
        return (self.a,)

    def eval(self, env):
        base = self.a.eval(env)
        if self.k < 0:
            return 1.0 / base ** (-self.k)
        return base ** self.k

    def diff(self, var):
        return Mul(Mul(Const(self.k), Pow(self.a, self.k - 1)), self.a.diff(var))

    def _text(self, prec):
        return f"{self.a._text(4)}^{self.k}"


class Fun1(Expr):
    """sin / cos / exp."""

    _eval = {"sin": np.sin, "cos": np.cos, "exp": np.exp}

    def __init__(self, name, a):
        self.name, self.a = name, a

    def children(self):
        return (self.a,)

    def eval(self, env):
        return self._eval[self.name](self.a.eval(env))

    def diff(self, var):
        da = self.a.diff(var)
        if self.name == "sin":
            return Mul(Fun1("cos", self.a), da)
        if self.name == "cos":
            return Mul(Sub(Const(0.0), Fun1("sin", self.a)), da)
        return Mul(self, da)  # exp

    def _text(self, prec):
        return f"{self.name}({self.a._text(0)})"


class Smax(Expr):
    """Smooth maximum log(e^a + e^b); derivative uses exp(a - smax) weights."""

    def __init__(self, a, b):
        self.a, self.b = a, b

    def children(self):
        return (self.a, self.b)

    def eval(self, env):
        return np.logaddexp(self.a.eval(env), self.b.eval(env))

    def diff(self, var):
        wa = Fun1("exp", Sub(self.a, self))
        wb = Fun1("exp", Sub(self.b, self))
        return Add(Mul(self.a.diff(var), wa), Mul(self.b.diff(var), wb))

    def _text(self, prec):
        return f"smax({self.a._text(0)}, {self.b._text(0)})"


class Smin(Expr):
    """Smooth minimum -log(e^-a + e^-b)."""

    def __init__(self, a, b):
        self.a, self.b = a, b

    def children(self):
        return (self.a, self.b)

    def eval(self, env):
        return -np.logaddexp(-self.a.eval(env), -self.b.eval(env))

    def diff(self, var):
        wa = Fun1("exp", Sub(self, self.a))
        wb = Fun1("exp", Sub(self, self.b))
        return Add(Mul(self.a.diff(var), wa), Mul(self.b.diff(var), wb))

    def _text(self, prec):
        return f"smin({self.a._text(0)}, {self.b._text(0)})"


def _poly_derivative(p):
    if len(p) <= 1:
        return np.array([0.0])
    n = np.arange(1, len(p))
    return p[1:] * n


def _poly_mul(p, q):
    return np.convolve(p, q)


def _poly_add(p, q):
    if len(p) < len(q):
        p, q = q, p
    out = p.copy()
    out[: len(q)] += q
    return out


_BUMP_POLYS = {0: np.array([1.0])}
_ONESIDED_POLYS = {0: np.array([1.0])}


def _bump_poly(m):
    """Numerator polynomial of the m-th bump derivative over (1-u^2)^(2m)."""
    while m not in _BUMP_POLYS:
        j = max(_BUMP_POLYS) ; p = _BUMP_POLYS[j]
        one_minus = np.array([1.0, 0.0, -1.0])  # 1 - u^2
        term1 = _poly_mul(_poly_derivative(p), _poly_mul(one_minus, one_minus))
        term2 = _poly_mul(np.array([0.0, 4.0 * j]), _poly_mul(one_minus, p))
        term3 = _poly_mul(np.array([0.0, -2.0]), p)
        _BUMP_POLYS[j + 1] = _poly_add(_poly_add(term1, term2), term3)
    return _BUMP_POLYS[m]


def _onesided_poly(m):
    """Numerator polynomial of the m-th derivative of exp(-1/u) over u^(2m)."""
    while m not in _ONESIDED_POLYS:
        j = max(_ONESIDED_POLYS) ; p = _ONESIDED_POLYS[j]
        term1 = _poly_mul(np.array([0.0, 0.0, 1.0]), _poly_derivative(p))
        term2 = _poly_mul(np.array([1.0, -2.0 * j]), p)
        _ONESIDED_POLYS[j + 1] = _poly_add(term1, term2)
    return _ONESIDED_POLYS[m]


def _guarded_exp_product(log_main, poly_vals, log_den):
    """sign(poly) * exp(log_main + log|poly| - log_den), with 0*inf -> 0."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        mag = np.where(poly_vals == 0.0, -np.inf,
                       log_main + np.log(np.abs(np.where(poly_vals == 0.0, 1.0, poly_vals))) - log_den)
        out = np.sign(poly_vals) * np.exp(mag)
    return out


class BumpK(Expr):
    """m-th derivative of the bump profile, composed with an argument."""

    def __init__(self, a, m=0):
        self.a, self.m = a, int(m)

    def children(self):
        return (self.a,)

    def eval(self, env):
        u = np.asarray(self.a.eval(env), dtype=float)
        inside = np.abs(u) < 1.0
        us = np.where(inside, u, 0.0)
        d = 1.0 - us * us
        if self.m == 0:
            vals = np.exp(-1.0 / d)
        else:
            poly = np.polyval(_bump_poly(self.m)[::-1], us)
            vals = _guarded_exp_product(-1.0 / d, poly, 2 * self.m * np.log(d))
        out = np.where(inside, vals, 0.0)
        return out if out.ndim else float(out)

    def diff(self, var):
        return Mul(BumpK(self.a, self.m + 1), self.a.diff(var))

    def _text(self, prec):
        if self.m == 0:
            return f"bump({self.a._text(0)})"
        return f"bump_d{self.m}({self.a._text(0)})"


class OneSidedK(Expr):
    """m-th derivative of exp(-1/u) for u > 0 (0 for u <= 0)."""

    def __init__(self, a, m=0):
        self.a, self.m = a, int(m)

    def children(self):
        return (self.a,)

    def eval(self, env):
        u = np.asarray(self.a.eval(env), dtype=float)
        inside = u > 0.0
        us = np.where(inside, u, 1.0)
        if self.m == 0:
            vals = np.exp(-1.0 / us)
        else:
            poly = np.polyval(_onesided_poly(self.m)[::-1], us)
            vals = _guarded_exp_product(-1.0 / us, poly, 2 * self.m * np.log(us))
        out = np.where(inside, vals, 0.0)
        return out if out.ndim else float(out)

    def diff(self, var):
        return Mul(OneSidedK(self.a, self.m + 1), self.a.diff(var))

    def _text(self, prec):
        if self.m == 0:
            return f"onesided({self.a._text(0)})"
        return f"onesided_d{self.m}({self.a._text(0)})"


class Step(Expr):
    """Smooth step E(u)/(E(u)+E(1-u)) with E(u)=exp(-1/u) one-sided.

    Exactly 0 for u <= 0 and exactly 1 for u >= 1; all derivatives vanish
    at both ends.
    """

    def __init__(self, a):
        self.a = a

    def children(self):
        return (self.a,)

    def eval(self, env):
        u = np.asarray(self.a.eval(env), dtype=float)
        lo = u <= 0.0
        hi = u >= 1.0
        mid = ~(lo | hi)
        us = np.where(mid, u, 0.5)
        e0 = np.exp(-1.0 / us)
        e1 = np.exp(-1.0 / (1.0 - us))
        vals = e0 / (e0 + e1)
        out = np.where(hi, 1.0, np.where(lo, 0.0, vals))
        return out if out.ndim else float(out)

    def diff(self, var):
        a = self.a
        comp = Sub(Const(1.0), a)
        num = Add(Mul(OneSidedK(a, 1), OneSidedK(comp, 0)),
                  Mul(OneSidedK(a, 0), OneSidedK(comp, 1)))
        den = Pow(Add(OneSidedK(a, 0), OneSidedK(comp, 0)), 2)
        return Mul(Div(num, den), a.diff(var))

    def _text(self, prec):
        return f"smoothstep({self.a._text(0)})"


# ---------------------------------------------------------------------------
# Parser

_FUNCTIONS = {
    "sin": (1, lambda a: Fun1("sin", a)),
    "cos": (1, lambda a: Fun1("cos", a)),
    "exp": (1, lambda a: Fun1("exp", a)),
    "smin": (2, Smin),
    "smax": (2, Smax),
    "bump": (1, lambda a: BumpK(a, 0)),
    "smoothstep": (1, Step),
}

_NONSMOOTH = {"abs", "sign", "floor", "ceil", "min", "max", "mod", "sqrt", "log", "tan"}


class _Tokenizer:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1
        self.tokens = []
        self._run()

    def _error(self, msg):
        raise ParseError(msg, self.line, self.col)

    def _run(self):
        t = self.text
        while self.pos < len(t):
            c = t[self.pos]
            if c == "\n":
                self.pos += 1
                self.line += 1
                self.col = 1
                continue
            if c.isspace():
                self._advance(1)
                continue
            if c.isdigit() or (c == "." and self.pos + 1 < len(t) and t[self.pos + 1].isdigit()):
                self._number()
                continue
            if c.isalpha() or c == "_":
                self._ident()
                continue
            if c in "+-*/^(),":
                self.tokens.append((c, c, self.line, self.col))
                self._advance(1)
                continue
            self._error(f"unexpected character {c!r}")
        self.tokens.append(("end", "", self.line, self.col))

    def _advance(self, n):
        self.pos += n
        self.col += n

    def _number(self):
        start = self.pos
        t = self.text
        while self.pos < len(t) and (t[self.pos].isdigit() or t[self.pos] == "."):
            self._advance(1)
        if self.pos < len(t) and t[self.pos] in "eE":
            save = self.pos
            self._advance(1)
            if self.pos < len(t) and t[self.pos] in "+-":
                self._advance(1)
            if self.pos < len(t) and t[self.pos].isdigit():
                while self.pos < len(t) and t[self.pos].isdigit():
                    self._advance(1)
            else:
                self.pos = save
        text = t[start:self.pos]
        try:
            value = float(text)
        except ValueError:
            self._error(f"bad number literal {text!r}")
        self.tokens.append(("num", value, self.line, self.col - len(text)))

    def _ident(self):
        start = self.pos
        t = self.text
        while self.pos < len(t) and (t[self.pos].isalnum() or t[self.pos] == "_"):
            self._advance(1)
        name = t[start:self.pos]
        self.tokens.append(("ident", name, self.line, self.col - len(name)))


class _Parser:
    def __init__(self, tokens, variables):
        self.tokens = tokens
        self.i = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise ParseError(f"expected {kind!r}, found {tok[1]!r}", tok[2], tok[3])
        return tok

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected trailing input {tok[1]!r}", tok[2], tok[3])
        return e

    def expr(self):
        if self.peek()[0] == "-":
            self.next()
            e = Sub(Const(0.0), self.term())
        else:
            e = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.next()[0]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self):
        e = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = self.next()[0]
            rhs = self.factor()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def factor(self):
        e = self.base()
        if self.peek()[0] == "^":
            self.next()
            tok = self.next()
            neg = False
            if tok[0] == "-":
                neg = True
                tok = self.next()
            if tok[0] != "num" or tok[1] != int(tok[1]):
                raise ParseError("exponent must be an integer", tok[2], tok[3])
            k = int(tok[1])
            e = Pow(e, -k if neg else k)
        return e

    def base(self):
        tok = self.next()
        kind, value, line, col = tok
        if kind == "num":
            return Const(value)
        if kind == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "ident":
            if self.peek()[0] == "(":
                return self._call(value, line, col)
            if value in _FUNCTIONS or value in _NONSMOOTH:
                raise ParseError(f"function name {value!r} used without arguments", line, col)
            if self.variables is not None and value not in self.variables:
                raise ParseError(f"unknown identifier {value!r}", line, col)
            return Var(value)
        raise ParseError(f"unexpected token {value!r}", line, col)

    def _call(self, name, line, col):
        if name in _NONSMOOTH:
            raise ParseError(f"{name!r} is not smooth and is not part of the grammar", line, col)
        if name not in _FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", line, col)
        arity, build = _FUNCTIONS[name]
        self.expect("(")
        args = [self.expr()]
        while self.peek()[0] == ",":
            self.next()
            args.append(self.expr())
        self.expect(")")
        if len(args) != arity:
            raise ParseError(f"{name} takes {arity} argument(s), got {len(args)}", line, col)
        return build(*args)


def parse_expr(text: str, variables=DEFAULT_VARIABLES) -> Expr:
    """Parse an expression; raise ParseError with position on bad input.

    ``variables`` is the admissible identifier inventory (None = accept any).
    """
    tokens = _Tokenizer(text).tokens
    return _Parser(tokens, set(variables) if variables is not None else None).parse()


def _div_denominators(e):
    out = []
    if isinstance(e, Div):
        out.append(e.b)
    if isinstance(e, Pow) and e.k < 0:
        out.append(e.a)
    for child in e.children():
        out.extend(_div_denominators(child))
    return out


def check_denominators(e: Expr, bounds: dict, samples: int = 400, seed: int = 0,
                       tol: float = 1e-8):
    """Sample every division denominator over the given variable ranges.

    ``bounds`` maps variable name -> (lo, hi).  Raises SmoothnessError with a
    witness assignment if any denominator comes within ``tol`` of zero.
    """
    dens = _div_denominators(e)
    if not dens:
        return
    rng = np.random.default_rng(seed)
    names = sorted(e.variables())
    missing = [n for n in names if n not in bounds]
    if missing:
        raise SmoothnessError(f"no sampling bounds for variables {missing}")
    env = {n: rng.uniform(bounds[n][0], bounds[n][1], size=samples) for n in names}
    for den in dens:
        vals = np.asarray(den.eval(env), dtype=float)
        bad = np.abs(vals) < tol
        if np.any(bad):
            idx = int(np.argmax(bad))
            witness = {n: float(env[n][idx]) for n in names}
            raise SmoothnessError(
                f"denominator '{den}' is {vals.flat[idx]:.3e} at {witness}")
