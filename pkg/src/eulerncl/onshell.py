"""The equation manifold and its covering extension as an oriented rewrite system.

A jet variable is reducible when it is a derivative of some rule's left-hand side.
Rules are tried in the order they were added (equation first, then s_t, then s_y),
so a derivative of s carrying a t-index always reduces through the s_t rule.
Normal forms of prolonged jets are built one total derivative at a time from the
normal form of the jet below and cached on the system.
"""

import threading
import time
from dataclasses import dataclass
from enum import StrEnum
from typing import Iterable, Mapping

import structlog

from eulerncl.jetspace import (
    DIRECTIONS,
    UNIT,
    jacobian_bracket,
    jetvar,
    laplacian,
    mixed,
    scaling_E,
    total_derivative,
)
from eulerncl.kernel import Expr, Generator, jet, param, substitute, var
from eulerncl.reports import VerificationReport, expect_failure

logger = structlog.stdlib.get_logger(__name__)


class RestrictionError(Exception):
    """Raised when restriction to the equation manifold cannot complete"""

    pass


class Variant(StrEnum):
    D = "D"
    LAPLACE = "laplace"


ParamValues = Mapping[str, Expr]

S_T = jet("s", (1, 0, 0))
S_Y = jet("s", (0, 0, 1))


@dataclass(frozen=True)
class RewriteRule:
    lhs: Generator
    rhs: Expr

    def reduces(self, generator: Generator) -> bool:
        return (
            generator.is_jet
            and generator.name == self.lhs.name
            and generator.multi_index.dominates(self.lhs.multi_index)
        )


class OnShellSystem:
    """Immutable rewrite system; only the prolongation cache changes after construction."""

    def __init__(self, variant: Variant, rules: Iterable[RewriteRule], assumptions: Iterable[Expr] = ()):
        self.variant = Variant(variant)
        self.rules: tuple[RewriteRule, ...] = tuple(rules)
        self.assumptions: tuple[Expr, ...] = tuple(assumptions)
        self._normal_forms: dict[Generator, Expr] = {}
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        lhs = ", ".join(f"{r.lhs.name}_{r.lhs.multi_index.subscript()}" for r in self.rules)
        return f"OnShellSystem(variant={self.variant}, rules=[{lhs}])"

    @property
    def has_covering(self) -> bool:
        return any(rule.lhs.name == "s" for rule in self.rules)

    def rule_for(self, lhs: Generator) -> RewriteRule:
        for rule in self.rules:
            if rule.lhs == lhs:
                return rule
        raise KeyError(f"No rule for {lhs}")

    def reducing_rule(self, generator: Generator) -> RewriteRule | None:
        for rule in self.rules:
            if rule.reduces(generator):
                return rule
        return None

    def is_reducible(self, generator: Generator) -> bool:
        return self.reducing_rule(generator) is not None

    def replace_rule(self, lhs: Generator, rhs: Expr) -> "OnShellSystem":
        rules = [RewriteRule(r.lhs, rhs) if r.lhs == lhs else r for r in self.rules]
        return OnShellSystem(self.variant, rules, self.assumptions)

    def extended(self, rules: Iterable[RewriteRule], assumptions: Iterable[Expr] = ()) -> "OnShellSystem":
        return OnShellSystem(self.variant, self.rules + tuple(rules), self.assumptions + tuple(assumptions))

    def normal_form(self, generator: Generator) -> Expr:
        cached = self._normal_forms.get(generator)
        if cached is not None:
            return cached
        rule = self.reducing_rule(generator)
        if rule is None:
            return var(generator)
        if generator == rule.lhs:
            value = self.restrict(rule.rhs)
        else:
            index = generator.multi_index
            lhs_index = rule.lhs.multi_index
            d = next(d for d in DIRECTIONS if getattr(index, d) > getattr(lhs_index, d))
            lower = jet(generator.name, index - UNIT[d])
            value = self.restrict(total_derivative(self.normal_form(lower), d))
        with self._lock:
            value = self._normal_forms.setdefault(generator, value)
        logger.debug("Prolongation cached", jet=str(generator), terms=value.term_count())
        return value

    def restrict(self, e: Expr) -> Expr:
        """Normal form of `e` on the equation manifold (and covering, if present)."""
        reducible = [g for g in e.generators() if self.is_reducible(g)]
        if not reducible:
            return e
        try:
            bindings = {g: self.normal_form(g) for g in reducible}
        except RecursionError:
            logger.error("Restriction did not terminate", variant=str(self.variant))
            raise RestrictionError("restriction did not terminate") from None
        return substitute(e, bindings)


def equation_rhs(variant: Variant) -> tuple[Generator, Expr]:
    u = jetvar("u")
    if Variant(variant) is Variant.D:
        return jet("u", (1, 1, 1)), jacobian_bracket(u, mixed(u))
    return jet("u", (1, 2, 0)), jacobian_bracket(u, laplacian(u)) - jetvar("u", "tyy")


def make_equation_system(variant: Variant | str) -> OnShellSystem:
    """u_txy -> J(u, D(u)) for the D-form, u_txx -> J(u, Delta u) - u_tyy for the Delta-form."""
    lhs, rhs = equation_rhs(Variant(variant))
    return OnShellSystem(Variant(variant), [RewriteRule(lhs, rhs)])


def vorticity(variant: Variant | str, e: Expr) -> Expr:
    """D(e) for the D-form, Delta(e) for the Delta-form."""
    return mixed(e) if Variant(variant) is Variant.D else laplacian(e)


def specialize(e: Expr, params: ParamValues | None) -> Expr:
    if not params:
        return e
    return substitute(e, {param(name): value for name, value in params.items()})


def covering_rules(variant: Variant | str, params: ParamValues | None = None) -> tuple[RewriteRule, RewriteRule, Expr]:
    """The s_t and s_y rules of the covering and the divisor they assume nonzero."""
    u, s = jetvar("u"), jetvar("s")
    lam, mu, eps = (var(param(p)) for p in ("lambda", "mu", "eps"))
    w = vorticity(variant, u)
    w_x = total_derivative(w, "x")
    w_y = total_derivative(w, "y")
    s_t = jacobian_bracket(u, s) + eps * scaling_E(u)
    s_y = (lam + mu * w - eps * scaling_E(w) + w_y * jetvar("s", "x")) / w_x
    return (
        RewriteRule(S_T, specialize(s_t, params)),
        RewriteRule(S_Y, specialize(s_y, params)),
        w_x,
    )


def extend_with_covering(system: OnShellSystem, params: ParamValues | None = None) -> OnShellSystem:
    s_t, s_y, divisor = covering_rules(system.variant, params)
    logger.debug("Extending with covering", variant=str(system.variant))
    return system.extended([s_t, s_y], [divisor])


def covering_defects(variant: Variant | str, params: ParamValues | None = None) -> tuple[Expr, Expr]:
    """G1, G2: left minus right sides of the two covering equations."""
    u, s = jetvar("u"), jetvar("s")
    lam, mu, eps = (var(param(p)) for p in ("lambda", "mu", "eps"))
    w = vorticity(variant, u)
    g1 = jetvar("s", "t") - jacobian_bracket(u, s) - eps * scaling_E(u)
    g2 = jacobian_bracket(w, s) - lam - mu * w + eps * scaling_E(w)
    return specialize(g1, params), specialize(g2, params)


def make_covering_system(variant: Variant | str, params: ParamValues | None = None) -> OnShellSystem:
    return extend_with_covering(make_equation_system(variant), params)


def restrict(system: OnShellSystem, e: Expr) -> Expr:
    return system.restrict(e)


def flatness_check(system: OnShellSystem, claim_id: str | None = None) -> VerificationReport:
    """Compatibility of the covering: D_t(s_y) - D_y(s_t) vanishes on the system."""
    started = time.perf_counter()
    s_t = system.rule_for(S_T)
    s_y = system.rule_for(S_Y)
    residual = system.restrict(total_derivative(s_y.rhs, "t") - total_derivative(s_t.rhs, "y"))
    report = VerificationReport.from_residual(
        claim_id or f"flatness[{system.variant}]", residual, system.assumptions, started
    )
    logger.info("Flatness checked", claim_id=report.claim_id, status=str(report.status))
    return report


def flatness_mutation_report(system: OnShellSystem) -> VerificationReport:
    """Control: with s_t -> s_t + u_x the covering is no longer flat."""
    perturbed = system.replace_rule(S_T, system.rule_for(S_T).rhs + jetvar("u", "x"))
    report = flatness_check(perturbed, f"flatness[{system.variant}:s_t+u_x]")
    return expect_failure(f"flatness-control[{system.variant}]", report)
