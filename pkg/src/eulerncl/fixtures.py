"""Transcribed reference coefficients and their term-by-term comparison with computed forms."""

import re
import time
from dataclasses import dataclass, field, replace
from enum import StrEnum
from importlib import resources
from pathlib import Path
from typing import Iterator

import structlog

from eulerncl.config import active_config
from eulerncl.euler2d import canonical_form2, covering_system, construct_ncl, lookup_generator, verify_ncl_closed
from eulerncl.exprlang import ParseError, parse, to_plain
from eulerncl.jetspace import jetvar
from eulerncl.kernel import ONE_POLY, Expr, GaussianRational, Poly, drop, jet, param, partial, reduce_fraction, var
from eulerncl.onshell import Variant
from eulerncl.reports import VerificationReport, expect_failure
from eulerncl.varcalc import HorizontalForm2

logger = structlog.stdlib.get_logger(__name__)

BASES = ("A", "B", "C")
BASIS_NAMES = dict(zip(BASES, HorizontalForm2.BASIS))

FIBER = {"s_xx": jet("s", (0, 2, 0)), "s_x": jet("s", (0, 1, 0)), "s": jet("s")}
PARAMETER_COMPONENTS = ("lambda", "mu", "eps")
COMPONENTS = (*FIBER, *PARAMETER_COMPONENTS, "1")

_LINE = re.compile(r"^(?P<label>[A-Za-z][A-Za-z0-9_]*)\s*(?:\[(?P<tag>\w+)\])?\s*=\s*(?P<expr>[^#]*?)\s*(?:#\s*(?P<anchor>.*))?$")


class FixtureError(Exception):
    """Raised for malformed or missing fixture files"""

    pass


class Tag(StrEnum):
    EXACT = "exact"
    REPRESENTATIVE = "representative"
    UNCERTAIN = "uncertain"


@dataclass(frozen=True)
class FixtureLine:
    """One transcribed line; `expr` is None when the transcription does not parse."""

    label: str
    text: str
    anchor: str
    line: int
    tag: Tag = Tag.EXACT
    expr: Expr | None = field(default=None, compare=False)
    error: ParseError | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Example:
    name: str
    variant: Variant
    generator: str | None
    placement: dict[str, tuple[str, str | None]]
    description: str


def _coefficient_layout(letter: str) -> dict[str, tuple[str, str | None]]:
    layout: dict[str, tuple[str, str | None]] = {"dxdy": ("A", None)}
    for basis, offset in (("B", 0), ("C", 4)):
        for i, component in enumerate(("s_xx", "s_x", "s"), start=1):
            layout[f"{letter}{offset + i}"] = (basis, component)
        for j, component in enumerate(PARAMETER_COMPONENTS, start=1):
            layout[f"{letter}{offset + 4}_{j}"] = (basis, component)
    return layout


EXAMPLES: dict[str, Example] = {
    "ex1": Example("ex1", Variant.D, "ex1", _coefficient_layout("L"), "conservation law for q = u - x*u_x"),
    "ex2": Example("ex2", Variant.D, "ex2", _coefficient_layout("M"), "two-component law for q = A1(t)"),
    "ccl": Example(
        "ccl", Variant.D, None, {"dxdy": ("A", None), "K1": ("B", None), "K2": ("C", None)}, "canonical law, D-form"
    ),
    "ccl_laplace": Example(
        "ccl_laplace",
        Variant.LAPLACE,
        None,
        {"dxdy": ("A", None), "N1": ("B", None), "N2": ("C", None)},
        "canonical law, Delta-form",
    ),
}


def fixtures_path(name: str) -> Path:
    directory = active_config().fixtures_dir
    if directory is not None:
        return Path(directory) / f"{name}.txt"
    return Path(str(resources.files("eulerncl") / "data" / f"{name}.txt"))


def parse_fixture_text(text: str) -> list[FixtureLine]:
    """Parse `label [tag] = expression  # anchor` lines; blank and comment lines are skipped."""
    fixtures = []
    seen = set()
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        match = _LINE.match(line)
        if match is None:
            raise FixtureError(f"line {number}: expected 'label [tag] = expression  # anchor'")
        label = match.group("label")
        if label in seen:
            raise FixtureError(f"line {number}: duplicate label {label}")
        seen.add(label)
        try:
            tag = Tag(match.group("tag") or Tag.EXACT)
        except ValueError:
            raise FixtureError(f"line {number}: unknown tag {match.group('tag')!r}") from None
        source = match.group("expr")
        try:
            expr, error = parse(source, first_line=number), None
        except ParseError as e:
            expr, error = None, e
            logger.warning("Fixture line does not parse", label=label, line=number, error=e.message)
        fixtures.append(FixtureLine(label, source, match.group("anchor") or "", number, tag, expr, error))
    return fixtures


def load_fixtures(name: str) -> list[FixtureLine]:
    path = fixtures_path(name)
    try:
        text = path.read_text()
    except OSError as e:
        logger.error("Could not read fixtures", path=str(path), error=str(e))
        raise FixtureError(f"could not read {path}: {e}") from e
    return parse_fixture_text(text)


def find_fixture(label: str) -> tuple[Example, FixtureLine | None]:
    """An example by name, or the example holding a line with this label."""
    if label in EXAMPLES:
        return EXAMPLES[label], None
    for example in EXAMPLES.values():
        if label in example.placement:
            for fixture in load_fixtures(example.name):
                if fixture.label == label:
                    return example, fixture
    raise KeyError(f"Unknown fixture {label!r}")


def _multiplier(component: str | None) -> Expr:
    if component is None or component == "1":
        return Expr.constant(1)
    if component in FIBER:
        return var(FIBER[component])
    return var(param(component))


def assemble(example: Example, fixtures: list[FixtureLine]) -> HorizontalForm2:
    """The transcribed form; lines that do not parse are left out."""
    coefficients = {basis: Expr() for basis in BASES}
    for fixture in fixtures:
        if fixture.expr is None:
            continue
        try:
            basis, component = example.placement[fixture.label]
        except KeyError:
            raise FixtureError(f"{example.name}: no placement for {fixture.label}") from None
        coefficients[basis] = coefficients[basis] + fixture.expr * _multiplier(component)
    return HorizontalForm2(coefficients["A"], coefficients["B"], coefficients["C"])


def components(e: Expr) -> dict[str, Expr]:
    """Split a coefficient that is affine in s, s_x, s_xx and in the parameters."""
    out = {name: partial(e, g) for name, g in FIBER.items()}
    rest = drop(e, FIBER.values())
    params = [param(name) for name in PARAMETER_COMPONENTS]
    for name, g in zip(PARAMETER_COMPONENTS, params):
        out[name] = partial(rest, g)
    out["1"] = drop(rest, params)
    return out


@dataclass
class TermDiff:
    monomial: str
    computed: GaussianRational | None
    fixture: GaussianRational | None


@dataclass
class ComponentDiff:
    basis: str
    component: str
    labels: list[str]
    tag: Tag
    denominator: str = "1"
    only_computed: list[TermDiff] = field(default_factory=list)
    only_fixture: list[TermDiff] = field(default_factory=list)
    mismatched: list[TermDiff] = field(default_factory=list)
    unparsed: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.only_computed or self.only_fixture or self.mismatched or self.unparsed)

    def describe(self) -> Iterator[str]:
        where = f"{BASIS_NAMES[self.basis]}[{self.component}] ({', '.join(self.labels) or 'no fixture line'}, {self.tag})"
        if self.empty:
            yield f"{where}: match"
            return
        yield f"{where}: over common denominator {self.denominator}"
        for label in self.unparsed:
            yield f"  unparsed: {label}"
        for term in self.only_computed:
            yield f"  only computed: {_coeff(term.computed)} * {term.monomial}"
        for term in self.only_fixture:
            yield f"  only fixture: {_coeff(term.fixture)} * {term.monomial}"
        for term in self.mismatched:
            yield f"  mismatch: {term.monomial}: computed {_coeff(term.computed)}, fixture {_coeff(term.fixture)}"


def _coeff(c: GaussianRational | None) -> str:
    return to_plain(Expr.constant(c)) if c is not None else "0"


@dataclass
class FixtureDiff:
    example: str
    components: list[ComponentDiff]

    @property
    def empty(self) -> bool:
        return all(c.empty for c in self.components)

    @property
    def asserted_empty(self) -> bool:
        return all(c.empty for c in self.components if c.tag is Tag.EXACT)

    def component(self, basis: str, component: str) -> ComponentDiff:
        for c in self.components:
            if c.basis == basis and c.component == component:
                return c
        raise KeyError((basis, component))

    def for_label(self, label: str) -> list[ComponentDiff]:
        return [c for c in self.components if label in c.labels]

    def to_report(self, started: float | None = None) -> VerificationReport:
        """Verified when every exact component matches; other tags are reported only."""
        notes = [line for c in self.components for line in c.describe()]
        return VerificationReport.from_flag(f"fixture-diff[{self.example}]", self.asserted_empty, started, notes)


def _common_numerators(a: Expr, b: Expr) -> tuple[Poly, Poly, Expr]:
    lcm: dict[Poly, int] = dict(a.factors)
    for base, k in b.factors:
        lcm[base] = max(lcm.get(base, 0), k)
    den = ONE_POLY
    for base, k in lcm.items():
        den = den * base**k
    den_expr = Expr.from_poly(den)
    return reduce_fraction(a * den_expr).num, reduce_fraction(b * den_expr).num, den_expr


def diff_terms(computed: Expr, fixture: Expr, into: ComponentDiff) -> ComponentDiff:
    """Per-term comparison of two expressions over their common denominator."""
    if (computed - fixture).is_zero():
        return into
    cn, fn, den = _common_numerators(computed, fixture)
    into.denominator = to_plain(den)
    names = {m: _monomial_text(m) for m in set(cn.terms) | set(fn.terms)}
    for mono in sorted(names, key=names.get):
        c, f = cn.terms.get(mono), fn.terms.get(mono)
        if f is None:
            into.only_computed.append(TermDiff(names[mono], c, None))
        elif c is None:
            into.only_fixture.append(TermDiff(names[mono], None, f))
        elif c != f:
            into.mismatched.append(TermDiff(names[mono], c, f))
    return into


def _monomial_text(mono) -> str:
    return to_plain(Expr.from_poly(Poly({mono: GaussianRational(1)})))


def _component_tag(fixtures: list[FixtureLine]) -> Tag:
    if any(f.tag is Tag.UNCERTAIN or f.expr is None for f in fixtures):
        return Tag.UNCERTAIN
    if any(f.tag is Tag.REPRESENTATIVE for f in fixtures):
        return Tag.REPRESENTATIVE
    return Tag.EXACT


def fixture_diff(computed: HorizontalForm2, example: Example, fixtures: list[FixtureLine]) -> FixtureDiff:
    """Compare computed and transcribed forms coefficient by coefficient and fiber component by component."""
    transcribed = assemble(example, fixtures)
    diffs = []
    for basis, mine, theirs in zip(BASES, computed.coefficients(), transcribed.coefficients()):
        lines = [f for f in fixtures if example.placement.get(f.label, (None,))[0] == basis]
        whole = [f for f in lines if example.placement[f.label][1] is None]
        mine_parts, theirs_parts = components(mine), components(theirs)
        emitted = len(diffs)
        for component in COMPONENTS:
            placed = [f for f in lines if example.placement[f.label][1] == component]
            # a whole-coefficient line that transcribes 0 is still compared, as the "1" component
            keep_zero = component == "1" and bool(whole) and len(diffs) == emitted
            if not (placed or keep_zero) and mine_parts[component].is_zero() and theirs_parts[component].is_zero():
                continue
            contributing = placed + whole
            entry = ComponentDiff(basis, component, [f.label for f in contributing], _component_tag(contributing))
            entry.unparsed = [f"{f.label}: {f.error}" for f in contributing if f.expr is None]
            diffs.append(diff_terms(mine_parts[component], theirs_parts[component], entry))
    return FixtureDiff(example.name, diffs)


def computed_form(example: Example) -> HorizontalForm2:
    if example.generator is None:
        return canonical_form2(example.variant, jetvar("q"), jetvar("p"))
    return construct_ncl(example.variant, lookup_generator(example.generator, example.variant))


def diff_report(name: str) -> VerificationReport:
    started = time.perf_counter()
    example = EXAMPLES[name]
    diff = fixture_diff(computed_form(example), example, load_fixtures(name))
    report = diff.to_report(started)
    logger.info("Fixture diff", example=name, asserted_empty=diff.asserted_empty, empty=diff.empty)
    return report


def transcribed_closedness_report(name: str) -> VerificationReport:
    """verify_ncl_closed on the transcribed form itself, when every line parses."""
    started = time.perf_counter()
    example = EXAMPLES[name]
    fixtures = load_fixtures(name)
    claim_id = f"transcribed-closed[{name}]"
    unparsed = [f.label for f in fixtures if f.expr is None]
    if unparsed:
        return VerificationReport.from_flag(
            claim_id, False, started, [f"not assembled, unparsed lines: {', '.join(unparsed)}"]
        )
    system = covering_system(example.variant)
    report = verify_ncl_closed(assemble(example, fixtures), system, claim_id)
    if report.ok:
        return report
    diff = fixture_diff(computed_form(example), example, fixtures)
    if diff.asserted_empty:
        return report
    # not closed, and the exact lines already disagree with the computed law: report where
    explained = [line for c in diff.components if c.tag is Tag.EXACT and not c.empty for line in c.describe()]
    logger.info("Transcription not closed", example=name, diff_lines=len(explained))
    return expect_failure(claim_id, replace(report, claim_id=f"{claim_id}:as-transcribed"), explained)
