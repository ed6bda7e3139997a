"""Parser and printers for the expression mini-language.

Grammar, loosest binding first::

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := atom ("^" NAT)? | "-" factor
    atom   := NUMBER | "i" | t | x | y | lambda | mu | eps | jetvar | arbfun | call | "(" expr ")"
    jetvar := DEP "_" [txy]+ | DEP "[" NAT "," NAT "," NAT "]" | DEP         DEP := u | s | q | p
    arbfun := "A" NAT ("'"+ | "^(" NAT ")")? "(t)"
    call   := (J | D | Delta | E | Dt | Dx | Dy) "(" expr ("," expr)? ")"

So "-u^2" is -(u^2), "-1/2*u" is ((-1)/2)*u and "a-b-c" is (a-b)-c. Builtin operators
are expanded while parsing.
"""

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Literal

from eulerncl.jetspace import (
    JetSpaceError,
    jacobian_bracket,
    laplacian,
    mixed,
    scaling_E,
    total_derivative,
)
from eulerncl.kernel import (
    DEPENDENT,
    I,
    INDEPENDENT,
    PARAMETERS,
    Expr,
    GaussianRational,
    Generator,
    GeneratorKind,
    KernelError,
    Monomial,
    Poly,
    arbfun,
    gen_of,
    indep,
    jet,
    param,
    var,
)

Format = Literal["plain", "latex", "json"]
FORMATS: tuple[str, ...] = ("plain", "latex", "json")

MAX_EXPONENT = 64

RESERVED = frozenset({"i", *INDEPENDENT, *PARAMETERS, *DEPENDENT, "J", "D", "Delta", "E", "Dt", "Dx", "Dy"})

_CALLS = {
    "D": (1, mixed),
    "Delta": (1, laplacian),
    "E": (1, scaling_E),
    "Dt": (1, lambda e: total_derivative(e, "t")),
    "Dx": (1, lambda e: total_derivative(e, "x")),
    "Dy": (1, lambda e: total_derivative(e, "y")),
    "J": (2, jacobian_bracket),
}

_ARBFUN = re.compile(r"A(\d+)(?:_(\w+))?")

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<number>\d+)"
    r"|(?P<name>[A-Za-z][A-Za-z0-9]*(?:_[A-Za-z0-9]+)?)"
    r"|(?P<op>[-+*/^(),\[\]'])"
    r"|(?P<bad>.)",
    re.DOTALL,
)


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    start: int
    end: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class ParseError(Exception):
    """Raised for input outside the expression grammar"""

    def __init__(self, message: str, span: SourceSpan):
        super().__init__(f"{span}: {message}")
        self.message = message
        self.span = span


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: SourceSpan


def tokenize(text: str, first_line: int = 1) -> list[Token]:
    tokens = []
    line, line_start = first_line, 0
    for match in _TOKEN.finditer(text):
        kind = match.lastgroup
        span = SourceSpan(line, match.start() - line_start + 1, match.start(), match.end())
        if kind == "bad":
            raise ParseError(f"unexpected character {match.group()!r}", span)
        if kind == "ws":
            newlines = match.group().count("\n")
            if newlines:
                line += newlines
                line_start = match.start() + match.group().rindex("\n") + 1
            continue
        tokens.append(Token(kind, match.group(), span))
    end = len(text)
    tokens.append(Token("eof", "", SourceSpan(line, end - line_start + 1, end, end)))
    return tokens


class _Parser:
    def __init__(self, text: str, first_line: int):
        self.tokens = tokenize(text, first_line)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        if token.kind != "eof":
            self.pos += 1
        return token

    def at(self, text: str) -> bool:
        return self.current.kind == "op" and self.current.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        return self.advance()

    def error(self, message: str, token: Token | None = None) -> ParseError:
        token = token or self.current
        found = "end of input" if token.kind == "eof" else repr(token.text)
        return ParseError(f"{message}, found {found}", token.span)

    def natural(self) -> int:
        if self.current.kind != "number":
            raise self.error("expected a natural number")
        return int(self.advance().text)

    def parse(self) -> Expr:
        e = self.expr()
        if self.current.kind != "eof":
            raise self.error("unexpected token")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.at("+") or self.at("-"):
            op = self.advance().text
            right = self.term()
            left = left + right if op == "+" else left - right
        return left

    def term(self) -> Expr:
        left = self.factor()
        while self.at("*") or self.at("/"):
            op = self.advance()
            right = self.factor()
            if op.text == "*":
                left = left * right
            elif right.is_zero():
                raise ParseError("division by zero", op.span)
            else:
                left = left / right
        return left

    def factor(self) -> Expr:
        if self.at("-"):
            self.advance()
            return -self.factor()
        base = self.atom()
        if self.at("^"):
            caret = self.advance()
            exponent = self.natural()
            if exponent > MAX_EXPONENT:
                raise ParseError(f"exponent {exponent} exceeds {MAX_EXPONENT}", caret.span)
            return base**exponent
        return base

    def atom(self) -> Expr:
        token = self.current
        if token.kind == "number":
            self.advance()
            return Expr.constant(int(token.text))
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if token.kind != "name":
            raise self.error("expected an expression")
        self.advance()
        name = token.text
        if name == "i":
            return Expr.constant(I)
        if name in INDEPENDENT:
            return var(indep(name))
        if name in PARAMETERS:
            return var(param(name))
        if name in _CALLS:
            return self.call(name, token)
        if name in DEPENDENT:
            if self.at("["):
                return self.bracket_jet(name)
            return var(jet(name))
        dep, _, subscript = name.partition("_")
        if dep in DEPENDENT and subscript:
            if set(subscript) - set(INDEPENDENT):
                raise ParseError(f"invalid jet subscript {subscript!r}", token.span)
            return var(jet(dep, [subscript.count(d) for d in INDEPENDENT]))
        if match := _ARBFUN.fullmatch(name):
            if match.group(2) is not None:
                raise ParseError(f"{name}: arbitrary functions depend on t only, write A{match.group(1)}'(t)", token.span)
            return self.arbitrary_function(int(match.group(1)), token)
        raise ParseError(f"unknown identifier {name!r}", token.span)

    def bracket_jet(self, dep: str) -> Expr:
        self.expect("[")
        index = [self.natural()]
        for _ in range(2):
            self.expect(",")
            index.append(self.natural())
        self.expect("]")
        return var(jet(dep, index))

    def arbitrary_function(self, ident: int, token: Token) -> Expr:
        order = 0
        if self.at("^"):
            self.advance()
            self.expect("(")
            order = self.natural()
            self.expect(")")
        else:
            while self.at("'"):
                self.advance()
                order += 1
        self.expect("(")
        argument = self.current
        if argument.kind != "name" or argument.text != "t":
            if argument.kind == "name" and argument.text in ("x", "y"):
                raise ParseError(f"A{ident}: arbitrary functions depend on t only", argument.span)
            raise self.error("expected (t) after an arbitrary function")
        self.advance()
        self.expect(")")
        return var(arbfun(ident, order))

    def call(self, name: str, token: Token) -> Expr:
        arity, fn = _CALLS[name]
        self.expect("(")
        args = [self.expr()]
        if self.at(","):
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if len(args) != arity:
            raise ParseError(f"{name} takes {arity} argument{'s' if arity > 1 else ''}, got {len(args)}", token.span)
        return fn(*args)


def parse(text: str, first_line: int = 1) -> Expr:
    parser = _Parser(text, first_line)
    try:
        return parser.parse()
    except RecursionError:
        raise ParseError("expression nested too deeply", parser.current.span) from None
    except (KernelError, JetSpaceError) as e:
        raise ParseError(str(e), parser.current.span) from e


def parse_assignments(text: str) -> dict[str, Expr]:
    """Parse "lambda=1, mu=0, eps=1/2" into parameter values."""
    values: dict[str, Expr] = {}
    offset = 0
    for item in text.split(","):
        name, sep, value = item.partition("=")
        name = name.strip()
        span = SourceSpan(1, offset + 1, offset, offset + len(item))
        if not sep or name not in PARAMETERS:
            raise ParseError(f"expected <parameter>=<expression>, parameters are {', '.join(PARAMETERS)}", span)
        if name in values:
            raise ParseError(f"{name} assigned twice", span)
        values[name] = parse(value)
        offset += len(item) + 1
    return values


# printers


def _generator_plain(g: Generator) -> str:
    match g.kind:
        case GeneratorKind.JET:
            subscript = g.multi_index.subscript()
            return f"{g.name}_{subscript}" if subscript else g.name
        case GeneratorKind.ARBFUN:
            n = g.derivative_order
            return f"{g.name}{chr(39) * n}(t)" if n < 3 else f"{g.name}^({n})(t)"
        case _:
            return g.name


def _generator_latex(g: Generator) -> str:
    match g.kind:
        case GeneratorKind.JET:
            subscript = g.multi_index.subscript()
            return f"{g.name}_{{{subscript}}}" if subscript else g.name
        case GeneratorKind.ARBFUN:
            n = g.derivative_order
            head = f"A_{{{g.rank}}}"
            return f"{head}{chr(39) * n}(t)" if n < 3 else f"{head}^{{({n})}}(t)"
        case GeneratorKind.PARAM:
            return {"lambda": r"\lambda", "mu": r"\mu", "eps": r"\varepsilon"}[g.name]
        case _:
            return g.name


def _public(mono: Monomial) -> list[tuple[Generator, int]]:
    return sorted(((gen_of(g), e) for g, e in mono), key=lambda pair: pair[0].sort_key)


def _coefficient_plain(c: GaussianRational) -> tuple[str, str]:
    """Sign and magnitude text of a coefficient."""
    if c.im == 0:
        return ("-" if c.re < 0 else "+"), str(abs(c.re))
    if c.re == 0:
        magnitude = "i" if abs(c.im) == 1 else f"{abs(c.im)}*i"
        return ("-" if c.im < 0 else "+"), magnitude
    im_sign = "-" if c.im < 0 else "+"
    return "+", f"({c.re} {im_sign} {abs(c.im)}*i)"


def _poly_plain(poly: Poly) -> str:
    if poly.is_zero():
        return "0"
    parts = []
    for mono, c in poly.sorted_terms():
        sign, magnitude = _coefficient_plain(c)
        factors = "*".join(
            _generator_plain(g) if e == 1 else f"{_generator_plain(g)}^{e}" for g, e in _public(mono)
        )
        if not factors:
            text = magnitude
        elif magnitude == "1":
            text = factors
        else:
            text = f"{magnitude}*{factors}"
        if not parts:
            parts.append(text if sign == "+" else f"-{text}")
        else:
            parts.append(f"{sign} {text}")
    return " ".join(parts)


def to_plain(e: Expr) -> str:
    """Plain text that parses back to an equal expression."""
    num = _poly_plain(e.num)
    if not e.factors:
        return num
    parts = [f"({_poly_plain(b)})" if k == 1 else f"({_poly_plain(b)})^{k}" for b, k in e.factors]
    den = parts[0] if len(parts) == 1 else f"({'*'.join(parts)})"
    return f"({num})/{den}"


def _rational_latex(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return rf"\frac{{{q.numerator}}}{{{q.denominator}}}"


def _poly_latex(poly: Poly) -> str:
    if poly.is_zero():
        return "0"
    parts = []
    for mono, c in poly.sorted_terms():
        if c.im == 0:
            sign, magnitude = ("-" if c.re < 0 else "+"), _rational_latex(abs(c.re))
        elif c.re == 0:
            sign = "-" if c.im < 0 else "+"
            magnitude = "i" if abs(c.im) == 1 else f"{_rational_latex(abs(c.im))} i"
        else:
            im_sign = "-" if c.im < 0 else "+"
            sign, magnitude = "+", rf"\left({_rational_latex(c.re)} {im_sign} {_rational_latex(abs(c.im))} i\right)"
        factors = " ".join(
            _generator_latex(g) if e == 1 else f"{_generator_latex(g)}^{{{e}}}" for g, e in _public(mono)
        )
        if not factors:
            text = magnitude
        elif magnitude == "1":
            text = factors
        else:
            text = f"{magnitude} {factors}"
        if not parts:
            parts.append(text if sign == "+" else f"-{text}")
        else:
            parts.append(f"{sign} {text}")
    return " ".join(parts)


def to_latex(e: Expr) -> str:
    num = _poly_latex(e.num)
    if not e.factors:
        return num
    den = " ".join(
        rf"\left({_poly_latex(b)}\right)" + (f"^{{{k}}}" if k > 1 else "") for b, k in e.factors
    )
    return rf"\frac{{{num}}}{{{den}}}"


def _terms_json(poly: Poly) -> list[dict]:
    return [
        {
            "coeff": {"re": str(c.re), "im": str(c.im)},
            "pows": [[str(g), e] for g, e in _public(mono)],
        }
        for mono, c in poly.sorted_terms()
    ]


def to_json_terms(e: Expr) -> dict[str, list[dict]]:
    """{"num": [...], "den": [...]} with the denominator expanded; generators in bracket notation."""
    return {"num": _terms_json(e.num), "den": _terms_json(e.den)}


def render(e: Expr, fmt: Format = "plain") -> str:
    match fmt:
        case "plain":
            return to_plain(e)
        case "latex":
            return to_latex(e)
        case "json":
            return json.dumps(to_json_terms(e), sort_keys=True)
        case _:
            raise ValueError(f"Unknown format {fmt!r}, expected one of {', '.join(FORMATS)}")


def iter_terms(e: Expr) -> Iterator[tuple[str, GaussianRational]]:
    """(monomial text, coefficient) pairs of the numerator, leading term first."""
    for mono, c in e.num.sorted_terms():
        yield "*".join(_generator_plain(g) if k == 1 else f"{_generator_plain(g)}^{k}" for g, k in _public(mono)) or "1", c
