"""Named verification scenarios, as run by `eulerncl verify`."""

import contextvars
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import structlog

from eulerncl import euler2d, fixtures, fuzz
from eulerncl.euler2d import lookup_generator, symmetries
from eulerncl.kernel import PARAMETERS, Expr
from eulerncl.onshell import Variant, flatness_check, flatness_mutation_report
from eulerncl.reports import VerificationReport

logger = structlog.stdlib.get_logger(__name__)

BOTH = (Variant.D, Variant.LAPLACE)


class ScenarioError(Exception):
    """Raised for unknown scenarios or options a scenario cannot use"""

    pass


@dataclass(frozen=True)
class ScenarioOptions:
    variant: Variant | None = None
    generator: str | None = None
    params: dict[str, Expr] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        unknown = sorted(set(self.params) - set(PARAMETERS))
        if unknown:
            raise ScenarioError(f"Unknown parameters {', '.join(unknown)}; expected some of {', '.join(PARAMETERS)}")
        for name, value in self.params.items():
            if value.generators():
                raise ScenarioError(f"Parameter {name} must be a constant")

    def variants(self, default: tuple[Variant, ...] = BOTH) -> tuple[Variant, ...]:
        return (self.variant,) if self.variant is not None else default


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    claims: str
    run: Callable[[ScenarioOptions], list[VerificationReport]]


def _generators(options: ScenarioOptions, variant: Variant) -> list[euler2d.GeneratorSpec]:
    if options.generator is not None:
        try:
            return [lookup_generator(options.generator, variant)]
        except ValueError as e:
            raise ScenarioError(str(e)) from e
    return symmetries(variant)


def canonical_law(options: ScenarioOptions) -> list[VerificationReport]:
    return [euler2d.prop1_report(v) for v in options.variants()]


def adjoint(options: ScenarioOptions) -> list[VerificationReport]:
    return [euler2d.adjoint_report(v) for v in options.variants()]


def cosymmetries(options: ScenarioOptions) -> list[VerificationReport]:
    reports = []
    for v in options.variants():
        reports.append(euler2d.verify_cosymmetry(euler2d.cosymmetry(v), options.params))
        reports.append(euler2d.cosymmetry_mutation_report(v))
    return reports


def symmetry_checks(options: ScenarioOptions) -> list[VerificationReport]:
    """The D-form list by default; `--variant laplace` checks the Delta-form family."""
    reports = []
    for v in options.variants((Variant.D,)):
        reports += [euler2d.verify_symmetry(spec, v) for spec in _generators(options, v)]
        if options.generator is None:
            if v is Variant.D:
                reports.append(euler2d.phi4_report())
            reports.append(euler2d.negative_control_report(v))
    return reports


def flatness(options: ScenarioOptions) -> list[VerificationReport]:
    reports = []
    for v in options.variants():
        system = euler2d.covering_system(v, options.params)
        reports += [flatness_check(system), flatness_mutation_report(system)]
    return reports


def ncl_closed(options: ScenarioOptions) -> list[VerificationReport]:
    # a user-supplied generator is checked against the D-form unless a variant is named
    default = (Variant.D,) if options.generator is not None else BOTH
    reports = [
        euler2d.ncl_closed_report(v, spec, options.params)
        for v in options.variants(default)
        for spec in _generators(options, v)
    ]
    if options.generator is None and Variant.D in options.variants(default):
        reports.append(euler2d.ncl_mutation_report())
    return reports


def two_component(options: ScenarioOptions) -> list[VerificationReport]:
    if options.generator is None:
        options = replace(options, generator="ex2")
    return [euler2d.two_component_report(v, spec) for v in options.variants() for spec in _generators(options, v)]


def sxx_independence(options: ScenarioOptions) -> list[VerificationReport]:
    return [
        euler2d.sxx_independence_report(v, spec)
        for v in options.variants((Variant.LAPLACE,))
        for spec in _generators(options, v)
    ]


def decomposition_ex1(options: ScenarioOptions) -> list[VerificationReport]:
    P, Q, R = euler2d.example_decomposition("ex1")
    return [
        euler2d.verify_decomposition(P, Q, R, Variant.D, claim_id="decomposition[ex1]"),
        euler2d.decomposition_mutation_report(),
    ]


def decomposition_ex2(options: ScenarioOptions) -> list[VerificationReport]:
    P, Q, R = euler2d.example_decomposition("ex2")
    return [euler2d.verify_decomposition(P, Q, R, Variant.D, claim_id="decomposition[ex2]")]


def fixture_diff_ex1(options: ScenarioOptions) -> list[VerificationReport]:
    return [fixtures.diff_report("ex1"), fixtures.transcribed_closedness_report("ex1")]


def fixture_diff_ex2(options: ScenarioOptions) -> list[VerificationReport]:
    return [fixtures.diff_report("ex2")]


def fixture_diff_ccl(options: ScenarioOptions) -> list[VerificationReport]:
    return [fixtures.diff_report("ccl"), fixtures.diff_report("ccl_laplace")]


def rotation(options: ScenarioOptions) -> list[VerificationReport]:
    return [euler2d.verify_rotation(seed=options.seed)]


def kernel_props(options: ScenarioOptions) -> list[VerificationReport]:
    return fuzz.kernel_props(seed=options.seed)


REGISTRY: dict[str, Scenario] = {
    s.name: s
    for s in (
        Scenario("prop1", "off-shell canonical law: W(d_h Omega) = l_F(q) p - q l*_F(p)", "canonical-law", canonical_law),
        Scenario("adjoint", "generic adjoint of the linearization against its closed form", "adjoint", adjoint),
        Scenario("prop2", "p0 solves l*_F(p) = 0 on the equation and covering, with mutation control", "cosymmetry", cosymmetries),
        Scenario("prop3", "the symmetry generators solve l_F(phi) = 0, phi4 candidates, control q = u", "symmetry", symmetry_checks),
        Scenario("flatness", "D_t(s_y) = D_y(s_t) on the equation and covering, with perturbed s_t control", "flatness", flatness),
        Scenario("ncl-closed", "the constructed conservation laws are closed on-shell, with dropped-term control", "ncl-closed", ncl_closed),
        Scenario("two-component", "q = A(t) gives a law with no dx^dy part", "two-component", two_component),
        Scenario("sxx-independence", "Delta-form laws do not depend on s_xx", "sxx-independent", sxx_independence),
        Scenario("decomposition-ex1", "characteristic of the first worked example, with mutation control", "decomposition", decomposition_ex1),
        Scenario("decomposition-ex2", "characteristic of the two-component example", "decomposition", decomposition_ex2),
        Scenario("fixture-diff-ex1", "first worked example against its transcription, and the transcription's closedness", "fixture-diff", fixture_diff_ex1),
        Scenario("fixture-diff-ex2", "two-component example against its transcription", "fixture-diff", fixture_diff_ex2),
        Scenario("fixture-diff-ccl", "canonical law of both forms against their transcriptions", "fixture-diff", fixture_diff_ccl),
        Scenario("rotation", "complex rotation takes the Delta-form to a multiple of the D-form", "rotation", rotation),
        Scenario("kernel-props", "seeded property sweeps over the kernel, calculus and parser", "kernel-props", kernel_props),
    )
}

ALIASES = {"symmetries": "prop3", "cosymmetry": "prop2", "canonical-law": "prop1"}


def scenario(name: str) -> Scenario:
    key = ALIASES.get(name, name)
    try:
        return REGISTRY[key]
    except KeyError:
        logger.error("Unknown scenario", scenario=name)
        raise ScenarioError(f"Unknown scenario {name!r}; run `eulerncl list` to see them") from None


def list_scenarios() -> list[Scenario]:
    return list(REGISTRY.values())


def run_scenario(name: str, options: ScenarioOptions | None = None) -> list[VerificationReport]:
    s = scenario(name)
    started = time.perf_counter()
    logger.info("Starting scenario", scenario=s.name)
    reports = s.run(options or ScenarioOptions())
    failed = [r.claim_id for r in reports if not r.ok]
    logger.info(
        "Finished scenario",
        scenario=s.name,
        reports=len(reports),
        failed=len(failed),
        elapsed_ms=int((time.perf_counter() - started) * 1000),
    )
    if failed:
        logger.error("Scenario has failed reports", scenario=s.name, claims=failed)
    return reports


def run_scenarios(names: Iterable[str], options: ScenarioOptions | None = None, jobs: int = 1) -> list[VerificationReport]:
    """Run scenarios up to `jobs` at a time; reports come back sorted by claim id."""
    names = list(dict.fromkeys(scenario(name).name for name in names))
    if jobs == 1 or len(names) == 1:
        reports = [r for name in names for r in run_scenario(name, options)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            # each worker sees the active configuration of the caller
            futures = [pool.submit(contextvars.copy_context().run, run_scenario, name, options) for name in names]
            reports = [r for future in futures for r in future.result()]
    return sorted(reports, key=lambda r: r.claim_id)
