import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence, TextIO

import structlog

from eulerncl.config import OUTPUT_FORMATS, Config, configured
from eulerncl.euler2d import construct_ncl, lookup_generator, verify_rotation
from eulerncl.exprlang import ParseError, iter_terms, parse_assignments, to_json_terms, to_latex, to_plain
from eulerncl.fixtures import BASIS_NAMES, FixtureError, Tag, computed_form, find_fixture, fixture_diff, load_fixtures
from eulerncl.kernel import Expr, Poly
from eulerncl.onshell import Variant
from eulerncl.reports import Status, VerificationReport
from eulerncl.scenarios import REGISTRY, ScenarioError, ScenarioOptions, list_scenarios, run_scenarios

logger = structlog.stdlib.get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Raised for command-line input the cli cannot act on"""

    pass


def get_config() -> Config:
    """Defaults from the environment; only the log level and output format are read there."""

    def get_choice_env(key: str, default: str, choices: Sequence[str]) -> str:
        value = os.environ.get(key) or default
        if value not in choices:
            logger.error(f"{key} must be one of {', '.join(choices)}", value=value)
            raise UsageError(f"{key} must be one of {', '.join(choices)}, got {value!r}")
        return value

    return Config(
        log_level=os.environ.get("LOG_LEVEL", "INFO"),
        output_format=get_choice_env("EULERNCL_FORMAT", "text", OUTPUT_FORMATS),
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=OUTPUT_FORMATS, help="output format (default: $EULERNCL_FORMAT or text)")
    common.add_argument("--order-cap", type=int, help="highest jet order total derivatives may reach")
    common.add_argument("--fixtures", type=Path, help="directory holding ex1.txt, ex2.txt, ... transcriptions")
    common.add_argument("--full-residual", action="store_true", help="print every residual term")
    common.add_argument("--residual-terms", type=int, help="residual terms printed for failed reports")
    common.add_argument("--no-timings", action="store_true", help="report elapsed_ms as 0")

    parser = argparse.ArgumentParser(prog="eulerncl", description="Verify nonlocal conservation laws of the 2D Euler equation.")
    commands = parser.add_subparsers(dest="command", required=True)

    verify = commands.add_parser("verify", parents=[common], help="run one or more scenarios, or all")
    verify.add_argument("scenarios", nargs="+", metavar="scenario")
    verify.add_argument("--variant", choices=[v.value for v in Variant])
    verify.add_argument("--generator", help="generator name (phi1..phi8, ex1, ...) or expression")
    verify.add_argument("--params", default="symbolic", help="symbolic, or lambda=...,mu=...,eps=...")
    verify.add_argument("--jobs", type=int, default=1, help="scenarios run at the same time")
    verify.add_argument("--seed", type=int, default=0)

    construct = commands.add_parser("construct", parents=[common], help="print the conservation law of a generator")
    construct.add_argument("--generator", required=True)
    construct.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.D.value)
    construct.add_argument("--params", default="symbolic")

    diff = commands.add_parser("diff", parents=[common], help="compare a transcription with the computed form")
    diff.add_argument("--fixture", required=True, help="example name (ex1, ex2, ccl, ccl_laplace) or line label")

    rotate = commands.add_parser("rotate", parents=[common], help="check the complex rotation between the two forms")
    rotate.add_argument("--seed", type=int, default=0)

    commands.add_parser("list", parents=[common], help="list scenarios")
    return parser


def parse_params(text: str) -> dict[str, Expr]:
    if text.strip() in ("", "symbolic"):
        return {}
    return parse_assignments(text)


def config_from_args(args: argparse.Namespace) -> Config:
    config = get_config()
    overrides: dict[str, Any] = {}
    if args.format:
        overrides["output_format"] = args.format
    if args.order_cap is not None:
        overrides["order_cap"] = args.order_cap
    if args.fixtures is not None:
        if not args.fixtures.is_dir():
            raise UsageError(f"--fixtures {args.fixtures} is not a directory")
        overrides["fixtures_dir"] = args.fixtures
    if args.full_residual:
        overrides["full_residual"] = True
    if args.residual_terms is not None:
        overrides["residual_terms"] = args.residual_terms
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    try:
        return replace(config, **overrides)
    except ValueError as e:
        raise UsageError(str(e)) from e


def run(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except UsageError as e:
        print(f"eulerncl: {e}", file=sys.stderr)
        return EXIT_USAGE

    # Configure logging level; events go to stderr so stdout stays machine-readable
    structlog.configure(
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, config.log_level.upper(), logging.INFO)),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
    )

    with configured(config):
        try:
            return COMMANDS[args.command](args, config, out)
        except (UsageError, ParseError, ScenarioError, FixtureError) as e:
            print(f"eulerncl: {e}", file=sys.stderr)
    return EXIT_USAGE


def verify_command(args: argparse.Namespace, config: Config, out: TextIO) -> int:
    names = list(REGISTRY) if args.scenarios == ["all"] else args.scenarios
    options = ScenarioOptions(
        variant=Variant(args.variant) if args.variant else None,
        generator=args.generator,
        params=parse_params(args.params),
        seed=args.seed,
    )
    reports = run_scenarios(names, options, jobs=config.jobs)
    write_reports(reports, config, out, timings=not args.no_timings)
    return EXIT_OK if all(r.ok for r in reports) else EXIT_FAILED


def construct_command(args: argparse.Namespace, config: Config, out: TextIO) -> int:
    variant = Variant(args.variant)
    try:
        spec = lookup_generator(args.generator, variant)
    except ValueError as e:
        raise UsageError(str(e)) from e
    omega = construct_ncl(variant, spec, parse_params(args.params))
    coefficients = dict(zip(omega.BASIS, omega.coefficients()))
    match config.output_format:
        case "json":
            document = {
                "generator": spec.name,
                "expression": spec.text,
                "variant": str(variant),
                "form": {basis: to_json_terms(c) for basis, c in coefficients.items()},
            }
            out.write(json.dumps(document, indent=2) + "\n")
        case "latex":
            for basis, c in coefficients.items():
                out.write(f"{basis}: {to_latex(c)}\n")
        case _:
            out.write(f"# {spec.name} = {spec.text} ({variant})\n")
            for basis, c in coefficients.items():
                out.write(f"{basis}: {to_plain(c)}\n")
    return EXIT_OK


def diff_command(args: argparse.Namespace, config: Config, out: TextIO) -> int:
    try:
        example, line = find_fixture(args.fixture)
    except KeyError as e:
        raise UsageError(e.args[0]) from None
    diff = fixture_diff(computed_form(example), example, load_fixtures(example.name))
    selected = diff.for_label(line.label) if line is not None else diff.components
    if config.output_format == "json":
        document = [
            {
                "basis": BASIS_NAMES[c.basis],
                "component": c.component,
                "labels": c.labels,
                "tag": str(c.tag),
                "denominator": c.denominator,
                "only_computed": [_term_json(t.monomial, t.computed) for t in c.only_computed],
                "only_fixture": [_term_json(t.monomial, t.fixture) for t in c.only_fixture],
                "mismatched": [
                    {"monomial": t.monomial, "computed": _coeff_json(t.computed), "fixture": _coeff_json(t.fixture)}
                    for t in c.mismatched
                ],
                "unparsed": c.unparsed,
            }
            for c in selected
        ]
        out.write(json.dumps({"example": example.name, "components": document}, indent=2) + "\n")
    else:
        for c in selected:
            for text in c.describe():
                out.write(text + "\n")
    asserted = [c for c in selected if c.tag is Tag.EXACT]
    return EXIT_OK if all(c.empty for c in asserted) else EXIT_FAILED


def _coeff_json(c) -> dict[str, str] | None:
    return None if c is None else {"re": str(c.re), "im": str(c.im)}


def _term_json(monomial: str, c) -> dict[str, Any]:
    return {"monomial": monomial, "coeff": _coeff_json(c)}


def rotate_command(args: argparse.Namespace, config: Config, out: TextIO) -> int:
    report = verify_rotation(seed=args.seed)
    write_reports([report], config, out, timings=not args.no_timings)
    return EXIT_OK if report.ok else EXIT_FAILED


def list_command(args: argparse.Namespace, config: Config, out: TextIO) -> int:
    scenarios = list_scenarios()
    if config.output_format == "json":
        document = [{"name": s.name, "claims": s.claims, "description": s.description} for s in scenarios]
        out.write(json.dumps({"scenarios": document}, indent=2) + "\n")
        return EXIT_OK
    width = max(len(s.name) for s in scenarios)
    for s in scenarios:
        out.write(f"{s.name:<{width}}  {s.description}\n")
    return EXIT_OK


COMMANDS = {
    "verify": verify_command,
    "construct": construct_command,
    "diff": diff_command,
    "rotate": rotate_command,
    "list": list_command,
}


def summary(reports: Sequence[VerificationReport]) -> dict[str, int]:
    return {str(status): sum(r.status is status for r in reports) for status in Status}


def _truncated(e: Expr, terms: int) -> Expr:
    return Expr(Poly(dict(list(e.num.sorted_terms())[:terms])), e.factors)


def write_reports(reports: Sequence[VerificationReport], config: Config, out: TextIO, timings: bool = True):
    if config.output_format == "json":
        documents = [r.to_dict(config.full_residual, config.residual_terms) for r in reports]
        if not timings:
            for document in documents:
                document["elapsed_ms"] = 0
        out.write(json.dumps({"reports": documents, "summary": summary(reports)}, indent=2) + "\n")
        return
    latex = config.output_format == "latex"
    show = to_latex if latex else to_plain
    for r in reports:
        out.write(f"{r.status:<26} {r.claim_id}" + (f"  ({r.elapsed_ms} ms)" if timings else "") + "\n")
        for a in r.assumptions:
            out.write(f"    assuming {show(a)} != 0\n")
        for note in r.notes:
            out.write(f"    {note}\n")
        if r.ok:
            continue
        total = len(r.residual.num)
        limit = total if config.full_residual else config.residual_terms
        out.write(f"    residual: {total} numerator terms\n")
        if latex:
            out.write(f"    {to_latex(_truncated(r.residual, limit))}\n")
        else:
            for k, (monomial, c) in enumerate(iter_terms(r.residual)):
                if k == limit:
                    break
                out.write(f"    {to_plain(Expr.constant(c))} * {monomial}\n")
            if r.residual.factors:
                out.write(f"    over {to_plain(Expr(r.residual.den))}\n")
        if total > limit:
            out.write(f"    ... {total - limit} more terms\n")
    counts = summary(reports)
    out.write(", ".join(f"{n} {status}" for status, n in counts.items()) + "\n")
