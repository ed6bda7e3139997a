"""Variational calculus on jet expressions.

Horizontal 2-forms are written A dx^dy + B dy^dt + C dt^dx and the horizontal
differential is W dt^dx^dy with W = D_t(A) + D_x(B) + D_y(C). With this orientation
the canonical conservation law satisfies d_h(Omega) = l_F(q) p - q l*_F(p) with
coefficient +1.
"""

import time
from dataclasses import dataclass
from math import comb
from typing import Callable, Iterable, Mapping

import structlog

from eulerncl.jetspace import MultiIndex, jetvar, total_derivative, total_derivative_multi
from eulerncl.kernel import ZERO_EXPR, Expr, partial
from eulerncl.reports import VerificationReport

logger = structlog.stdlib.get_logger(__name__)


class LinearDiffOperator:
    """sum over sigma of coeff_sigma * D_sigma, one summand per multi-index."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[MultiIndex, Expr] | None = None):
        self.terms: dict[MultiIndex, Expr] = {
            MultiIndex(*sigma): c for sigma, c in (terms or {}).items() if not c.is_zero()
        }

    def __repr__(self) -> str:
        return f"LinearDiffOperator({ {s.subscript() or '1': c for s, c in self.terms.items()} })"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LinearDiffOperator):
            return NotImplemented
        if self.terms.keys() != other.terms.keys():
            return False
        return all(self.terms[s] == other.terms[s] for s in self.terms)

    __hash__ = None  # type: ignore[assignment]

    @property
    def order(self) -> int:
        return max((s.order for s in self.terms), default=0)

    def apply(self, f: Expr) -> Expr:
        total = ZERO_EXPR
        for sigma, c in self.terms.items():
            total = total + c * total_derivative_multi(f, sigma)
        return total

    def apply_symbol(self, dep: str) -> Expr:
        """Apply to a bare dependent variable, whose derivatives are jet coordinates."""
        total = ZERO_EXPR
        for sigma, c in self.terms.items():
            total = total + c * jetvar(dep, sigma)
        return total


def linear_operator(F: Expr, dep: str) -> LinearDiffOperator:
    return LinearDiffOperator({g.multi_index: partial(F, g) for g in F.jets(dep)})


def linearize(F: Expr, dep: str = "u", probe: str = "q") -> tuple[LinearDiffOperator, Expr]:
    """Universal linearization l_F and its application to the probe variable."""
    if F.jets(probe):
        raise ValueError(f"Probe variable {probe} already occurs in F")
    op = linear_operator(F, dep)
    return op, op.apply_symbol(probe)


def _sub_indices(sigma: MultiIndex) -> Iterable[MultiIndex]:
    for a in range(sigma.t + 1):
        for b in range(sigma.x + 1):
            for c in range(sigma.y + 1):
                yield MultiIndex(a, b, c)


def adjoint(op: LinearDiffOperator) -> LinearDiffOperator:
    """Formal adjoint sum (-1)^|sigma| D_sigma o (coeff_sigma *), expanded back by Leibniz."""
    out: dict[MultiIndex, Expr] = {}
    for sigma, c in op.terms.items():
        sign = -1 if sigma.order % 2 else 1
        for rho in _sub_indices(sigma):
            weight = sign * comb(sigma.t, rho.t) * comb(sigma.x, rho.x) * comb(sigma.y, rho.y)
            term = total_derivative_multi(c, sigma - rho) * weight
            out[rho] = out.get(rho, ZERO_EXPR) + term
    return LinearDiffOperator(out)


def euler_operator(e: Expr, dep: str) -> Expr:
    """Variational derivative E_dep(e) = sum (-1)^|sigma| D_sigma(de/d dep_sigma)."""
    total = ZERO_EXPR
    for g in sorted(e.jets(dep)):
        sigma = g.multi_index
        term = total_derivative_multi(partial(e, g), sigma)
        total = total - term if sigma.order % 2 else total + term
    return total


def is_total_divergence(e: Expr, deps: Iterable[str], claim_id: str = "divergence") -> VerificationReport:
    started = time.perf_counter()
    residual = ZERO_EXPR
    notes = []
    for dep in sorted(deps):
        r = euler_operator(e, dep)
        if r.is_zero():
            notes.append(f"E_{dep} vanishes")
        else:
            notes.append(f"E_{dep} has {len(r.num)} numerator terms")
            if residual.is_zero():
                residual = r
    return VerificationReport.from_residual(claim_id, residual, started=started, notes=notes)


@dataclass(frozen=True)
class HorizontalForm2:
    """A dx^dy + B dy^dt + C dt^dx."""

    A: Expr = ZERO_EXPR
    B: Expr = ZERO_EXPR
    C: Expr = ZERO_EXPR

    BASIS = ("dx^dy", "dy^dt", "dt^dx")

    def coefficients(self) -> tuple[Expr, Expr, Expr]:
        return (self.A, self.B, self.C)

    def map(self, fn: Callable[[Expr], Expr]) -> "HorizontalForm2":
        return HorizontalForm2(fn(self.A), fn(self.B), fn(self.C))

    def __add__(self, other: "HorizontalForm2") -> "HorizontalForm2":
        return HorizontalForm2(self.A + other.A, self.B + other.B, self.C + other.C)

    def __sub__(self, other: "HorizontalForm2") -> "HorizontalForm2":
        return HorizontalForm2(self.A - other.A, self.B - other.B, self.C - other.C)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.coefficients())


@dataclass(frozen=True)
class HorizontalForm3:
    """W dt^dx^dy."""

    W: Expr = ZERO_EXPR


def horizontal_differential(omega: HorizontalForm2) -> HorizontalForm3:
    return HorizontalForm3(
        total_derivative(omega.A, "t") + total_derivative(omega.B, "x") + total_derivative(omega.C, "y")
    )


def green_remainder(F: Expr, q_expr: Expr, p_expr: Expr, dep: str = "u") -> Expr:
    """l_F(q) p - q l*_F(p)."""
    if q_expr.is_zero() or p_expr.is_zero():
        return ZERO_EXPR
    op = linear_operator(F, dep)
    return op.apply(q_expr) * p_expr - q_expr * adjoint(op).apply(p_expr)


__all__ = [
    "HorizontalForm2",
    "HorizontalForm3",
    "LinearDiffOperator",
    "adjoint",
    "euler_operator",
    "green_remainder",
    "horizontal_differential",
    "is_total_divergence",
    "linearize",
]
