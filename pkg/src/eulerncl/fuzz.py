"""Seeded random expressions and the kernel property sweeps built on them."""

import operator
import random
import time
from typing import Callable, Sequence

import structlog

from eulerncl.exprlang import ParseError, parse, to_plain
from eulerncl.jetspace import DIRECTIONS, MultiIndex, total_derivative
from eulerncl.kernel import (
    Expr,
    GaussianRational,
    Generator,
    arbfun,
    indep,
    jet,
    normalize,
    param,
    var,
)
from eulerncl.reports import VerificationReport
from eulerncl.varcalc import LinearDiffOperator, adjoint, euler_operator, green_remainder, is_total_divergence

logger = structlog.stdlib.get_logger(__name__)

DEFAULT_CASES = {
    "canonical-form": 1000,
    "derivative-commutation": 100,
    "euler-divergence": 100,
    "green-formula": 100,
    "adjoint-involution": 100,
    "parser-roundtrip": 500,
    "parser-garbage": 500,
}


def multi_indices(max_order: int) -> list[MultiIndex]:
    return [
        MultiIndex(a, b, c)
        for a in range(max_order + 1)
        for b in range(max_order + 1 - a)
        for c in range(max_order + 1 - a - b)
    ]


def base_generators(dep: str = "u", max_order: int = 2, explicit: bool = True) -> list[Generator]:
    gens = [jet(dep, sigma) for sigma in multi_indices(max_order)]
    if explicit:
        gens += [indep("t"), indep("x"), indep("y"), param("lambda"), arbfun(1)]
    return gens


def random_coefficient(rng: random.Random, gaussian: bool = True) -> GaussianRational:
    re = GaussianRational(rng.randint(-5, 5)) / GaussianRational(rng.randint(1, 4))
    if gaussian and rng.random() < 0.2:
        return re + GaussianRational(0, rng.randint(-3, 3))
    return re if re else GaussianRational(1)


def random_monomial(rng: random.Random, gens: list[Generator], degree: int) -> Expr:
    e = Expr.constant(1)
    for _ in range(rng.randint(0, degree)):
        e = e * var(rng.choice(gens))
    return e


def random_poly(rng: random.Random, gens: list[Generator], terms: int = 3, degree: int = 2) -> Expr:
    e = Expr()
    for _ in range(rng.randint(1, terms)):
        e = e + random_monomial(rng, gens, degree).scale(random_coefficient(rng))
    return e


def random_expr(rng: random.Random, gens: list[Generator], terms: int = 3, degree: int = 2) -> Expr:
    """A polynomial, or a quotient of polynomials with a nonzero denominator."""
    num = random_poly(rng, gens, terms, degree)
    if rng.random() < 0.5:
        return num
    den = random_poly(rng, gens, 2, 2)
    while den.is_zero():
        den = random_poly(rng, gens, 2, 2)
    return num / den


def random_operator(rng: random.Random, gens: list[Generator], max_order: int = 3) -> LinearDiffOperator:
    sigmas = multi_indices(max_order)
    return LinearDiffOperator({rng.choice(sigmas): random_poly(rng, gens, 2, 2) for _ in range(rng.randint(1, 4))})


def random_text(rng: random.Random, depth: int = 3) -> str:
    """A random sentence of the expression grammar."""
    if depth == 0 or rng.random() < 0.3:
        return rng.choice(
            [
                str(rng.randint(0, 9)),
                "i",
                "t",
                "x",
                "y",
                "lambda",
                "mu",
                "eps",
                "u",
                "s",
                "u_x",
                "u_txy",
                "u[0,2,1]",
                "s_y",
                "A1(t)",
                "A2'(t)",
                "A1^(3)(t)",
            ]
        )
    match rng.randrange(7):
        case 0:
            return f"{random_text(rng, depth - 1)} + {random_text(rng, depth - 1)}"
        case 1:
            return f"{random_text(rng, depth - 1)} - {random_text(rng, depth - 1)}"
        case 2:
            return f"{random_text(rng, depth - 1)}*{random_text(rng, depth - 1)}"
        case 3:
            return f"({random_text(rng, depth - 1)})^{rng.randint(0, 3)}"
        case 4:
            return f"-{random_text(rng, depth - 1)}"
        case 5:
            return f"{rng.choice(['Dx', 'Dy', 'D', 'E'])}({random_text(rng, depth - 1)})"
        case _:
            return f"J({random_text(rng, depth - 1)}, {random_text(rng, depth - 1)})"


def random_garbage(rng: random.Random, length: int = 24) -> str:
    alphabet = "uqpstxyAJDEi_[],()^*/+-'0123456789 #$\n\té"
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, length)))


def _sweep(name: str, cases: int, check: Callable[[random.Random], str | None], seed: int) -> VerificationReport:
    """Run `check` on `cases` seeded draws; it returns None or a failure description."""
    started = time.perf_counter()
    rng = random.Random(f"{name}:{seed}")
    failures = []
    for case in range(cases):
        failure = check(rng)
        if failure is not None:
            failures.append(f"case {case}: {failure}")
            if len(failures) >= 5:
                break
    notes = [f"{cases} cases, seed {seed}"] + failures
    if failures:
        logger.error("Property failed", prop=name, failures=len(failures))
    return VerificationReport.from_flag(f"kernel-props[{name}]", not failures, started, notes)


def reassociate(rng: random.Random, terms: Sequence[Expr], op: Callable[[Expr, Expr], Expr]) -> Expr:
    """Combine `terms` with `op` in a shuffled order and a random bracketing."""
    items = list(terms)
    rng.shuffle(items)
    while len(items) > 1:
        i = rng.randrange(len(items) - 1)
        items[i : i + 2] = [op(items[i], items[i + 1])]
    return items[0]


def check_canonical_form(rng: random.Random) -> str | None:
    gens = base_generators(max_order=1)
    a, b, c = (random_expr(rng, gens) for _ in range(3))
    if not ((a + b) * c - (a * c + b * c)).is_zero():
        return f"distributivity fails for {to_plain(a)}, {to_plain(b)}, {to_plain(c)}"
    if not (a - a).is_zero():
        return f"{to_plain(a)} - itself is not zero"
    if not normalize(normalize(a)).structurally_equal(normalize(a)):
        return f"normalize is not idempotent on {to_plain(a)}"
    if not b.is_zero() and not ((a / b) * b - a).is_zero():
        return f"(a/b)*b != a for {to_plain(a)}, {to_plain(b)}"
    # structural identity is only promised for polynomials: quotient denominators are not factored
    for op, count in ((operator.add, 6), (operator.mul, 3)):
        terms = [random_poly(rng, gens) for _ in range(rng.randint(2, count))]
        first = normalize(reassociate(rng, terms, op))
        second = normalize(reassociate(rng, terms, op))
        if not first.structurally_equal(second):
            return f"{op.__name__} of {[to_plain(t) for t in terms]} depends on order: {to_plain(first)} vs {to_plain(second)}"
    return None


def check_commutation(rng: random.Random) -> str | None:
    e = random_expr(rng, base_generators(max_order=2))
    d1, d2 = rng.sample(DIRECTIONS, 2)
    if total_derivative(total_derivative(e, d1), d2) != total_derivative(total_derivative(e, d2), d1):
        return f"D_{d1} D_{d2} != D_{d2} D_{d1} on {to_plain(e)}"
    return None


def check_euler_divergence(rng: random.Random) -> str | None:
    e = random_poly(rng, base_generators(max_order=2), 3, 3)
    d = rng.choice(DIRECTIONS)
    residual = euler_operator(total_derivative(e, d), "u")
    if not residual.is_zero():
        return f"E_u(D_{d}({to_plain(e)})) = {to_plain(residual)}"
    return None


def check_green_formula(rng: random.Random) -> str | None:
    gens = base_generators(max_order=3)
    F = random_poly(rng, gens, 3, 2)
    remainder = green_remainder(F, var(jet("q")), var(jet("p")))
    report = is_total_divergence(remainder, ("q", "p"))
    if not report.ok:
        return f"l_F(q)p - q l*_F(p) is not a divergence for F = {to_plain(F)}"
    return None


def check_adjoint_involution(rng: random.Random) -> str | None:
    op = random_operator(rng, base_generators(max_order=1))
    if adjoint(adjoint(op)) != op:
        return f"adjoint is not an involution on {op!r}"
    return None


def check_roundtrip(rng: random.Random) -> str | None:
    text = random_text(rng)
    e = parse(text)
    printed = to_plain(e)
    if parse(printed) != e:
        return f"{text!r} printed as {printed!r} does not parse back"
    return None


def check_garbage(rng: random.Random) -> str | None:
    text = random_garbage(rng)
    try:
        parse(text)
    except ParseError:
        return None
    except Exception as e:  # anything other than a ParseError is a defect
        return f"{text!r} raised {type(e).__name__}: {e}"
    return None


PROPERTIES: dict[str, Callable[[random.Random], str | None]] = {
    "canonical-form": check_canonical_form,
    "derivative-commutation": check_commutation,
    "euler-divergence": check_euler_divergence,
    "green-formula": check_green_formula,
    "adjoint-involution": check_adjoint_involution,
    "parser-roundtrip": check_roundtrip,
    "parser-garbage": check_garbage,
}


def kernel_props(seed: int = 0, cases: dict[str, int] | None = None) -> list[VerificationReport]:
    counts = {**DEFAULT_CASES, **(cases or {})}
    return [_sweep(name, counts[name], check, seed) for name, check in PROPERTIES.items()]
