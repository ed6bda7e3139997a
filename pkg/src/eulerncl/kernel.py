"""Exact sparse arithmetic for rational differential expressions.

Everything else in the package is built on the three value types defined here:

- `GaussianRational`, the coefficient field Q(i);
- `Poly`, a sparse polynomial over Q(i) in jet, parameter, independent-variable
  and arbitrary-function generators;
- `Expr`, a fraction `num / den` whose denominator is kept as a product of
  monic factors.

Generators are interned to small integers so that monomials are tuples of
`(generator id, exponent)` pairs. The ids are local to a process; the public
generator order (`Generator.sort_key`) is content based and stable across runs.
"""

import threading
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from functools import cmp_to_key, lru_cache
from typing import Callable, Iterable, Mapping, NamedTuple

import structlog

from eulerncl.config import active_config

logger = structlog.stdlib.get_logger(__name__)


class KernelError(Exception):
    """Raised for invalid operations on expressions"""

    pass


class ZeroDivisorError(KernelError):
    """Raised when dividing by an expression that is identically zero"""

    pass


class ZeroDenominatorError(KernelError):
    """Raised when a substitution or evaluation makes a denominator vanish"""

    def __init__(self, denominator: "Expr | GaussianRational | Poly", message: str = "zero denominator"):
        super().__init__(message)
        self.denominator = denominator


class UnassignedGeneratorError(KernelError):
    """Raised when evaluating at a point that misses a generator"""

    pass


class SelfReferenceError(KernelError):
    """Raised when a substitution binding refers to its own generator"""

    pass


class GaussianRational:
    """Exact element a + b*i of Q(i)."""

    __slots__ = ("re", "im")

    re: Fraction
    im: Fraction

    def __init__(self, re: int | Fraction | str = 0, im: int | Fraction | str = 0):
        self.re = re if type(re) is Fraction else Fraction(re)
        self.im = im if type(im) is Fraction else Fraction(im)

    @classmethod
    def coerce(cls, value: "GaussianRational | int | Fraction") -> "GaussianRational":
        if isinstance(value, GaussianRational):
            return value
        return cls(value)

    def __add__(self, other: "GaussianRational") -> "GaussianRational":
        return GaussianRational(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "GaussianRational") -> "GaussianRational":
        return GaussianRational(self.re - other.re, self.im - other.im)

    def __mul__(self, other: "GaussianRational") -> "GaussianRational":
        if not self.im and not other.im:
            return GaussianRational(self.re * other.re, self.im)
        return GaussianRational(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    def __truediv__(self, other: "GaussianRational") -> "GaussianRational":
        if not other:
            raise ZeroDivisorError("zero divisor")
        if not other.im:
            return GaussianRational(self.re / other.re, self.im / other.re)
        norm = other.re * other.re + other.im * other.im
        return GaussianRational(
            (self.re * other.re + self.im * other.im) / norm,
            (self.im * other.re - self.re * other.im) / norm,
        )

    def __neg__(self) -> "GaussianRational":
        return GaussianRational(-self.re, -self.im)

    def __pow__(self, exponent: int) -> "GaussianRational":
        if exponent < 0:
            return (ONE / self) ** (-exponent)
        result = ONE
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            base = base * base
            exponent >>= 1
        return result

    def __bool__(self) -> bool:
        return bool(self.re) or bool(self.im)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GaussianRational):
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self) -> int:
        return hash((self.re, self.im))

    def __repr__(self) -> str:
        return f"GaussianRational({self.re}, {self.im})"

    @property
    def is_real(self) -> bool:
        return not self.im


ZERO = GaussianRational(0)
ONE = GaussianRational(1)
I = GaussianRational(0, 1)


class GeneratorKind(IntEnum):
    INDEP = 0
    PARAM = 1
    ARBFUN = 2
    JET = 3


INDEPENDENT = ("t", "x", "y")
PARAMETERS = ("lambda", "mu", "eps")
DEPENDENT = ("u", "s", "q", "p")


class MultiIndex(NamedTuple):
    """Derivative orders in (t, x, y)."""

    t: int = 0
    x: int = 0
    y: int = 0

    @property
    def order(self) -> int:
        return self.t + self.x + self.y

    def __add__(self, other: "MultiIndex") -> "MultiIndex":  # type: ignore[override]
        return MultiIndex(self.t + other.t, self.x + other.x, self.y + other.y)

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(self.t - other.t, self.x - other.x, self.y - other.y)

    def dominates(self, other: "MultiIndex") -> bool:
        return self.t >= other.t and self.x >= other.x and self.y >= other.y

    def subscript(self) -> str:
        return "t" * self.t + "x" * self.x + "y" * self.y


@dataclass(frozen=True, slots=True)
class Generator:
    """One coordinate of the expression ring.

    The fixed total order is: t < x < y < lambda < mu < eps < A_i^(n) (by i, then n)
    < jets of u < jets of s < jets of q < jets of p; jets of one dependent variable
    are ordered by total order, then lexicographically by (t, x, y) orders.
    """

    kind: GeneratorKind
    rank: int
    index: tuple[int, ...] = ()

    @property
    def sort_key(self) -> tuple:
        if self.kind is GeneratorKind.JET:
            return (self.kind, self.rank, sum(self.index), self.index)
        return (self.kind, self.rank, 0, self.index)

    def __lt__(self, other: "Generator") -> bool:
        return self.sort_key < other.sort_key

    @property
    def name(self) -> str:
        match self.kind:
            case GeneratorKind.INDEP:
                return INDEPENDENT[self.rank]
            case GeneratorKind.PARAM:
                return PARAMETERS[self.rank]
            case GeneratorKind.ARBFUN:
                return f"A{self.rank}"
            case _:
                return DEPENDENT[self.rank]

    @property
    def is_jet(self) -> bool:
        return self.kind is GeneratorKind.JET

    @property
    def multi_index(self) -> MultiIndex:
        if not self.is_jet:
            raise KernelError(f"{self.name} is not a jet variable")
        return MultiIndex(*self.index)

    @property
    def derivative_order(self) -> int:
        """Order of an arbitrary function derivative A^(n)."""
        if self.kind is not GeneratorKind.ARBFUN:
            raise KernelError(f"{self.name} is not an arbitrary function")
        return self.index[0]

    def __str__(self) -> str:
        match self.kind:
            case GeneratorKind.JET:
                return f"{self.name}[{','.join(str(i) for i in self.index)}]"
            case GeneratorKind.ARBFUN:
                return f"{self.name}^({self.index[0]})"
            case _:
                return self.name


def indep(name: str) -> Generator:
    return Generator(GeneratorKind.INDEP, INDEPENDENT.index(name))


def param(name: str) -> Generator:
    return Generator(GeneratorKind.PARAM, PARAMETERS.index(name))


def jet(dep: str, index: Iterable[int] = (0, 0, 0)) -> Generator:
    index = tuple(index)
    if len(index) != 3 or any(i < 0 for i in index):
        raise KernelError(f"Invalid multi-index {index}")
    return Generator(GeneratorKind.JET, DEPENDENT.index(dep), index)


def arbfun(ident: int, order: int = 0) -> Generator:
    if ident < 0 or order < 0:
        raise KernelError(f"Invalid arbitrary function A{ident}^({order})")
    return Generator(GeneratorKind.ARBFUN, ident, (order,))


_registry_lock = threading.Lock()
_generator_ids: dict[Generator, int] = {}
_generators: list[Generator] = []


def gen_id(generator: Generator) -> int:
    ident = _generator_ids.get(generator)
    if ident is not None:
        return ident
    with _registry_lock:
        ident = _generator_ids.get(generator)
        if ident is None:
            ident = len(_generators)
            _generators.append(generator)
            _generator_ids[generator] = ident
    return ident


def gen_of(ident: int) -> Generator:
    return _generators[ident]


Monomial = tuple[tuple[int, int], ...]
ONE_MONOMIAL: Monomial = ()


@lru_cache(maxsize=1 << 18)
def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    merged: list[tuple[int, int]] = []
    i = j = 0
    while i < len(a) and j < len(b):
        ga, ea = a[i]
        gb, eb = b[j]
        if ga == gb:
            merged.append((ga, ea + eb))
            i += 1
            j += 1
        elif ga < gb:
            merged.append(a[i])
            i += 1
        else:
            merged.append(b[j])
            j += 1
    merged.extend(a[i:])
    merged.extend(b[j:])
    return tuple(merged)


def mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def mono_lower(m: Monomial, ident: int, by: int = 1) -> Monomial:
    """Divide `m` by generator `ident` to the power `by` (which must divide it)."""
    out = []
    for g, e in m:
        if g == ident:
            if e > by:
                out.append((g, e - by))
        else:
            out.append((g, e))
    return tuple(out)


def mono_gcd(a: Monomial, b: Monomial) -> Monomial:
    eb = dict(b)
    return tuple((g, min(e, eb[g])) for g, e in a if g in eb)


def mono_quotient(a: Monomial, b: Monomial) -> Monomial:
    """a / b for a monomial b dividing a."""
    eb = dict(b)
    return tuple((g, e - eb.get(g, 0)) for g, e in a if e - eb.get(g, 0) > 0)


def _public_pairs(m: Monomial) -> list[tuple[tuple, int]]:
    return sorted((gen_of(g).sort_key, e) for g, e in m)


def mono_cmp(a: Monomial, b: Monomial) -> int:
    """Graded lexicographic comparison over the public generator order."""
    da, db = mono_degree(a), mono_degree(b)
    if da != db:
        return -1 if da < db else 1
    for (ka, ea), (kb, eb) in zip(_public_pairs(a), _public_pairs(b)):
        if ka != kb:
            # the earlier generator is the more significant variable
            return 1 if ka < kb else -1
        if ea != eb:
            return -1 if ea < eb else 1
    return 0


mono_key = cmp_to_key(mono_cmp)


class Poly:
    """Sparse polynomial over Q(i). Instances are never mutated after construction."""

    __slots__ = ("terms", "_hash", "_key")

    terms: dict[Monomial, GaussianRational]

    def __init__(self, terms: Mapping[Monomial, GaussianRational] | None = None):
        self.terms = {m: c for m, c in terms.items() if c} if terms else {}
        self._hash: int | None = None
        self._key: tuple | None = None

    @classmethod
    def _trusted(cls, terms: dict[Monomial, GaussianRational]) -> "Poly":
        poly = cls.__new__(cls)
        poly.terms = terms
        poly._hash = None
        poly._key = None
        return poly

    @classmethod
    def constant(cls, value: GaussianRational | int | Fraction) -> "Poly":
        value = GaussianRational.coerce(value)
        return cls._trusted({ONE_MONOMIAL: value} if value else {})

    @classmethod
    def generator(cls, generator: Generator | int) -> "Poly":
        ident = generator if isinstance(generator, int) else gen_id(generator)
        return cls._trusted({((ident, 1),): ONE})

    def is_zero(self) -> bool:
        return not self.terms

    def is_one(self) -> bool:
        return len(self.terms) == 1 and self.terms.get(ONE_MONOMIAL) == ONE

    def constant_value(self) -> GaussianRational | None:
        if not self.terms:
            return ZERO
        if len(self.terms) == 1 and ONE_MONOMIAL in self.terms:
            return self.terms[ONE_MONOMIAL]
        return None

    def single_generator(self) -> int | None:
        """The generator id if this polynomial is exactly one generator."""
        if len(self.terms) != 1:
            return None
        (m, c), = self.terms.items()
        if c == ONE and len(m) == 1 and m[0][1] == 1:
            return m[0][0]
        return None

    def __len__(self) -> int:
        return len(self.terms)

    def generator_ids(self) -> set[int]:
        return {g for m in self.terms for g, _ in m}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Poly):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def sort_key(self) -> tuple:
        """Deterministic (process-local) key used to order denominator factors."""
        if self._key is None:
            self._key = (len(self.terms), tuple(sorted((m, c.re, c.im) for m, c in self.terms.items())))
        return self._key

    def __add__(self, other: "Poly") -> "Poly":
        if not other.terms:
            return self
        if not self.terms:
            return other
        acc = dict(self.terms)
        for m, c in other.terms.items():
            prev = acc.get(m)
            if prev is None:
                acc[m] = c
            else:
                total = prev + c
                if total:
                    acc[m] = total
                else:
                    del acc[m]
        return Poly._trusted(acc)

    def __neg__(self) -> "Poly":
        return Poly._trusted({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def scale(self, factor: GaussianRational) -> "Poly":
        if not factor:
            return Poly()
        if factor == ONE:
            return self
        return Poly._trusted({m: c * factor for m, c in self.terms.items()})

    def mul_monomial(self, mono: Monomial, coeff: GaussianRational = ONE) -> "Poly":
        return Poly._trusted({mono_mul(m, mono): c * coeff for m, c in self.terms.items()})

    def __mul__(self, other: "Poly") -> "Poly":
        if not self.terms or not other.terms:
            return Poly()
        if len(other.terms) == 1:
            (m, c), = other.terms.items()
            return self.mul_monomial(m, c)
        if len(self.terms) == 1:
            (m, c), = self.terms.items()
            return other.mul_monomial(m, c)
        acc: dict[Monomial, GaussianRational] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = mono_mul(m1, m2)
                prev = acc.get(m)
                acc[m] = c1 * c2 if prev is None else prev + c1 * c2
        return Poly._trusted({m: c for m, c in acc.items() if c})

    def __pow__(self, exponent: int) -> "Poly":
        if exponent < 0:
            raise KernelError("negative power of a polynomial")
        return _poly_power(self, exponent)

    def content_monomial(self) -> Monomial:
        """Greatest monomial dividing every term."""
        it = iter(self.terms)
        try:
            content = next(it)
        except StopIteration:
            return ONE_MONOMIAL
        for m in it:
            if not content:
                break
            content = mono_gcd(content, m)
        return content

    def divide_monomial(self, mono: Monomial) -> "Poly":
        return Poly._trusted({mono_quotient(m, mono): c for m, c in self.terms.items()})

    def min_exponent(self, ident: int) -> int:
        low = None
        for m in self.terms:
            e = 0
            for g, k in m:
                if g == ident:
                    e = k
                    break
            if e == 0:
                return 0
            low = e if low is None else min(low, e)
        return low or 0

    def leading_term(self) -> tuple[Monomial, GaussianRational]:
        if not self.terms:
            raise KernelError("zero polynomial has no leading term")
        m = max(self.terms, key=mono_key)
        return m, self.terms[m]

    def sorted_terms(self) -> list[tuple[Monomial, GaussianRational]]:
        """Terms in descending graded lexicographic order."""
        return sorted(self.terms.items(), key=lambda item: mono_key(item[0]), reverse=True)

    def derive(self, delta: Callable[[int], "Poly | None"]) -> "Poly":
        """Apply the derivation sending generator g to delta(g) (None meaning zero)."""
        images: dict[int, Poly | None] = {}
        acc: dict[Monomial, GaussianRational] = {}
        for m, c in self.terms.items():
            for g, e in m:
                if g in images:
                    dg = images[g]
                else:
                    dg = images[g] = delta(g)
                if dg is None or not dg.terms:
                    continue
                rest = mono_lower(m, g)
                coeff = c * GaussianRational(e) if e != 1 else c
                for dm, dc in dg.terms.items():
                    key = mono_mul(rest, dm)
                    prev = acc.get(key)
                    acc[key] = coeff * dc if prev is None else prev + coeff * dc
        return Poly._trusted({m: c for m, c in acc.items() if c})

    def evaluate(self, point: Mapping[int, GaussianRational]) -> GaussianRational:
        total = ZERO
        for m, c in self.terms.items():
            value = c
            for g, e in m:
                try:
                    value = value * point[g] ** e
                except KeyError:
                    raise UnassignedGeneratorError(f"No value assigned to {gen_of(g)}") from None
            total = total + value
        return total

    def exact_quotient(self, divisor: "Poly") -> "Poly | None":
        """self / divisor when the division is exact, otherwise None."""
        return _sympy_exact_quotient(self, divisor)


ONE_POLY = Poly.constant(1)
ZERO_POLY = Poly()


@lru_cache(maxsize=4096)
def _poly_power(poly: Poly, exponent: int) -> Poly:
    if exponent == 0:
        return ONE_POLY
    if exponent == 1:
        return poly
    half = _poly_power(poly, exponent // 2)
    result = half * half
    if exponent & 1:
        result = result * poly
    return result


def _sympy_exact_quotient(dividend: Poly, divisor: Poly) -> Poly | None:
    from sympy.polys.domains import QQ, QQ_I
    from sympy.polys.rings import ring

    if divisor.is_zero():
        raise ZeroDivisorError("zero divisor")
    if not divisor.generator_ids() <= dividend.generator_ids():
        return None
    ids = sorted(dividend.generator_ids())
    if not ids:
        return None
    position = {g: i for i, g in enumerate(ids)}
    gaussian = any(c.im for c in dividend.terms.values()) or any(c.im for c in divisor.terms.values())
    domain = QQ_I if gaussian else QQ

    def to_sympy(poly: Poly):
        out = {}
        for m, c in poly.terms.items():
            exps = [0] * len(ids)
            for g, e in m:
                exps[position[g]] = e
            re = QQ(c.re.numerator, c.re.denominator)
            if gaussian:
                out[tuple(exps)] = domain(re, QQ(c.im.numerator, c.im.denominator))
            else:
                out[tuple(exps)] = re
        return out

    def from_sympy_coeff(c) -> GaussianRational:
        if gaussian:
            return GaussianRational(
                Fraction(int(c.x.numerator), int(c.x.denominator)),
                Fraction(int(c.y.numerator), int(c.y.denominator)),
            )
        return GaussianRational(Fraction(int(c.numerator), int(c.denominator)))

    try:
        R = ring([f"g{g}" for g in ids], domain)[0]
        quotient, remainder = R.from_dict(to_sympy(dividend)).div(R.from_dict(to_sympy(divisor)))
    except Exception as e:
        logger.warning("Exact division failed, keeping fraction unreduced", error=str(e))
        return None
    if remainder:
        return None
    terms = {}
    for exps, c in quotient.items():
        terms[tuple((ids[i], e) for i, e in enumerate(exps) if e)] = from_sympy_coeff(c)
    return Poly(terms)


Factors = tuple[tuple[Poly, int], ...]


def _sorted_factors(factors: Mapping[Poly, int]) -> Factors:
    return tuple(sorted(((p, e) for p, e in factors.items() if e > 0), key=lambda item: item[0].sort_key()))


def _expand(factors: Iterable[tuple[Poly, int]]) -> Poly:
    result = ONE_POLY
    for base, e in factors:
        result = result * _poly_power(base, e)
    return result


class Expr:
    """Exact rational differential expression num / den.

    The denominator is stored as a product of monic factors (`factors`), each either a
    single generator or a polynomial with no monomial content. All scalars live in
    the numerator, so the expanded denominator always has leading coefficient 1.
    `is_zero()` only looks at the numerator.
    """

    __slots__ = ("num", "factors")

    num: Poly
    factors: Factors

    def __init__(self, num: Poly | None = None, factors: Factors = ()):
        self.num = num if num is not None else Poly()
        self.factors = () if self.num.is_zero() else factors

    @classmethod
    def constant(cls, value: GaussianRational | int | Fraction) -> "Expr":
        return cls(Poly.constant(value))

    @classmethod
    def of(cls, generator: Generator) -> "Expr":
        return cls(Poly.generator(generator))

    @classmethod
    def from_poly(cls, poly: Poly) -> "Expr":
        return cls(poly)

    @property
    def den(self) -> Poly:
        return _expand(self.factors)

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_polynomial(self) -> bool:
        return not self.factors

    def constant_value(self) -> GaussianRational | None:
        if self.factors:
            return None
        return self.num.constant_value()

    def generators(self) -> set[Generator]:
        ids = self.num.generator_ids()
        for base, _ in self.factors:
            ids |= base.generator_ids()
        return {gen_of(g) for g in ids}

    def jets(self, dep: str | None = None) -> set[Generator]:
        return {g for g in self.generators() if g.is_jet and (dep is None or g.name == dep)}

    def term_count(self) -> int:
        return len(self.num) + sum(len(b) for b, _ in self.factors)

    # arithmetic

    def __add__(self, other: "Expr | int") -> "Expr":
        other = _coerce(other)
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        if self.factors == other.factors:
            return _canonical(self.num + other.num, dict(self.factors))
        mine, theirs = dict(self.factors), dict(other.factors)
        lcm = dict(mine)
        for base, e in theirs.items():
            if e > lcm.get(base, 0):
                lcm[base] = e
        num = self.num * _expand((b, e - mine.get(b, 0)) for b, e in lcm.items()) + other.num * _expand(
            (b, e - theirs.get(b, 0)) for b, e in lcm.items()
        )
        return _canonical(num, lcm)

    __radd__ = __add__

    def __neg__(self) -> "Expr":
        return Expr(-self.num, self.factors)

    def __sub__(self, other: "Expr | int") -> "Expr":
        return self + (-_coerce(other))

    def __rsub__(self, other: "Expr | int") -> "Expr":
        return _coerce(other) - self

    def __mul__(self, other: "Expr | int") -> "Expr":
        other = _coerce(other)
        if self.is_zero() or other.is_zero():
            return ZERO_EXPR
        if not self.factors and not other.factors:
            return Expr(self.num * other.num)
        merged = dict(self.factors)
        for base, e in other.factors:
            merged[base] = merged.get(base, 0) + e
        return _canonical(self.num * other.num, merged)

    __rmul__ = __mul__

    def scale(self, factor: GaussianRational) -> "Expr":
        return Expr(self.num.scale(factor), self.factors)

    def inverse(self) -> "Expr":
        if self.is_zero():
            logger.error("Division by zero expression")
            raise ZeroDivisorError("zero divisor")
        content = self.num.content_monomial()
        rest = self.num.divide_monomial(content) if content else self.num
        _, lead = rest.leading_term()
        rest = rest.scale(ONE / lead)
        factors: dict[Poly, int] = {}
        for g, e in content:
            factors[Poly.generator(g)] = e
        if not rest.is_one():
            factors[rest] = factors.get(rest, 0) + 1
        return _canonical(_expand(self.factors).scale(ONE / lead), factors)

    def __truediv__(self, other: "Expr | int") -> "Expr":
        other = _coerce(other)
        value = other.constant_value()
        if value is not None:
            if not value:
                logger.error("Division by zero expression")
                raise ZeroDivisorError("zero divisor")
            return self.scale(ONE / value)
        return self * other.inverse()

    def __rtruediv__(self, other: "Expr | int") -> "Expr":
        return _coerce(other) / self

    def __pow__(self, exponent: int) -> "Expr":
        if exponent < 0:
            return self.inverse() ** (-exponent)
        if exponent == 0:
            return ONE_EXPR
        return Expr(
            _poly_power(self.num, exponent),
            tuple((b, e * exponent) for b, e in self.factors),
        )

    def __eq__(self, other: object) -> bool:
        if isinstance(other, int):
            other = Expr.constant(other)
        if not isinstance(other, Expr):
            return NotImplemented
        if self.factors == other.factors:
            return self.num == other.num
        return (self - other).is_zero()

    __hash__ = None  # type: ignore[assignment]

    def structurally_equal(self, other: "Expr") -> bool:
        return self.factors == other.factors and self.num == other.num

    def __repr__(self) -> str:
        from eulerncl.exprlang import to_plain

        return f"Expr({to_plain(self)!r})"

    def derive(self, delta: Callable[[int], Poly | None]) -> "Expr":
        """Apply a derivation given by its values on generators (quotient rule on factors)."""
        dnum = self.num.derive(delta)
        moving = []
        for base, e in self.factors:
            dbase = base.derive(delta)
            if not dbase.is_zero():
                moving.append((base, e, dbase))
        if not moving:
            return _canonical(dnum, dict(self.factors))
        bases = [b for b, _, _ in moving]
        num = dnum * _expand((b, 1) for b in bases)
        for i, (base, e, dbase) in enumerate(moving):
            others = _expand((b, 1) for j, b in enumerate(bases) if j != i)
            num = num - self.num * dbase * others * Poly.constant(e)
        factors = dict(self.factors)
        for base in bases:
            factors[base] += 1
        return _canonical(num, factors)


ZERO_EXPR = Expr()
ONE_EXPR = Expr.constant(1)


def _coerce(value: "Expr | int | Fraction | GaussianRational") -> Expr:
    if isinstance(value, Expr):
        return value
    return Expr.constant(value)


def _canonical(num: Poly, factors: dict[Poly, int], force_gcd: bool = False) -> Expr:
    """Cancel generator factors against the numerator; divide out polynomial factors lazily."""
    if num.is_zero():
        return ZERO_EXPR
    if not factors:
        return Expr(num)
    for base in list(factors):
        ident = base.single_generator()
        if ident is None:
            continue
        k = min(factors[base], num.min_exponent(ident))
        if k:
            num = num.divide_monomial(((ident, k),))
            factors[base] -= k
    threshold = active_config().gcd_threshold
    if force_gcd or len(num) > threshold or any(len(b) > threshold for b in factors):
        num, factors = _divide_out(num, factors)
    return Expr(num, _sorted_factors(factors))


def _divide_out(num: Poly, factors: dict[Poly, int]) -> tuple[Poly, dict[Poly, int]]:
    reduced = 0
    for base in list(factors):
        if base.single_generator() is not None:
            continue
        while factors[base] > 0:
            quotient = num.exact_quotient(base)
            if quotient is None:
                break
            num = quotient
            factors[base] -= 1
            reduced += 1
    if reduced:
        logger.debug("Reduced fraction", factors_removed=reduced, terms=len(num))
    return num, factors


def const(value: GaussianRational | int | Fraction) -> Expr:
    return Expr.constant(value)


def var(generator: Generator) -> Expr:
    return Expr.of(generator)


def normalize(e: Expr) -> Expr:
    """Canonical representative of `e`.

    Generator factors are always cancelled; polynomial factors are divided out when
    the numerator exceeds the configured gcd threshold. Idempotent.
    """
    return _canonical(e.num, dict(e.factors))


def reduce_fraction(e: Expr) -> Expr:
    """Like `normalize`, but always tries to divide out polynomial factors."""
    return _canonical(e.num, dict(e.factors), force_gcd=True)


def is_zero(e: Expr) -> bool:
    return e.is_zero()


def partial(e: Expr, generator: Generator) -> Expr:
    target = gen_id(generator)
    return e.derive(lambda g: ONE_POLY if g == target else None)


def _substitute_poly(poly: Poly, values: Mapping[int, Expr]) -> Expr:
    # Group terms by their bound part so each distinct product of bound values is built once.
    groups: dict[Monomial, dict[Monomial, GaussianRational]] = {}
    for m, c in poly.terms.items():
        bound = tuple((g, e) for g, e in m if g in values)
        free = tuple((g, e) for g, e in m if g not in values) if bound else m
        groups.setdefault(bound, {})[free] = c
    powers: dict[tuple[int, int], Expr] = {}
    products: dict[Monomial, Expr] = {ONE_MONOMIAL: ONE_EXPR}

    def product(bound: Monomial) -> Expr:
        if bound in products:
            return products[bound]
        g, e = bound[-1]
        if (g, e) not in powers:
            powers[(g, e)] = values[g] ** e
        value = product(bound[:-1]) * powers[(g, e)]
        products[bound] = value
        return value

    # Sum group contributions sharing a denominator before taking least common multiples.
    by_factors: dict[Factors, Poly] = {}
    for bound, free_terms in groups.items():
        value = product(bound)
        contribution = Poly._trusted(free_terms) * value.num
        by_factors[value.factors] = by_factors.get(value.factors, ZERO_POLY) + contribution
    total = ZERO_EXPR
    for factors, num in by_factors.items():
        total = total + _canonical(num, dict(factors))
    return total


def _substitute(e: Expr, values: Mapping[int, Expr]) -> Expr:
    touched = e.num.generator_ids()
    for base, _ in e.factors:
        touched |= base.generator_ids()
    if not touched & values.keys():
        return e
    result = _substitute_poly(e.num, values)
    for base, k in e.factors:
        if not base.generator_ids() & values.keys():
            result = result * Expr(ONE_POLY, ((base, k),))
            continue
        value = _substitute_poly(base, values)
        if value.is_zero():
            logger.error("Substitution produced a zero denominator", denominator=repr(Expr(base)))
            raise ZeroDenominatorError(Expr(base))
        result = result / value**k
    return result


def substitute(e: Expr, bindings: Mapping[Generator, Expr]) -> Expr:
    """Simultaneously replace generators by expressions.

    A binding may not mention its own generator; iterated rewriting belongs to
    `eulerncl.onshell`.
    """
    values: dict[int, Expr] = {}
    for generator, value in bindings.items():
        if generator in value.generators():
            raise SelfReferenceError(f"Binding for {generator} refers to {generator}")
        values[gen_id(generator)] = value
    return _substitute(e, values)


def substitute_simultaneous(e: Expr, bindings: Mapping[Generator, Expr]) -> Expr:
    """Simultaneous substitution that allows a binding to mention its own generator (chart changes)."""
    return _substitute(e, {gen_id(g): v for g, v in bindings.items()})


def eval_at(e: Expr, point: Mapping[Generator, GaussianRational | int | Fraction]) -> GaussianRational:
    values = {gen_id(g): GaussianRational.coerce(v) for g, v in point.items()}
    den = ONE
    for base, k in e.factors:
        den = den * base.evaluate(values) ** k
    if not den:
        raise ZeroDenominatorError(den, "denominator vanishes at point")
    return e.num.evaluate(values) / den


def drop(e: Expr, generators: Iterable[Generator]) -> Expr:
    """Set the given generators to zero."""
    return substitute(e, {g: ZERO_EXPR for g in generators})
