"""The two equation variants, their symmetries and cosymmetries, and the conservation laws built from them."""

import random
import threading
import time
from dataclasses import dataclass, field

import structlog

from eulerncl.exprlang import parse, to_plain
from eulerncl.jetspace import (
    Matrix,
    apply_linear_change,
    const_matrix,
    jacobian_bracket,
    jetvar,
    total_derivative,
)
from eulerncl.kernel import (
    I,
    ONE,
    ZERO,
    Expr,
    GaussianRational,
    eval_at,
    jet,
    partial,
)
from eulerncl.onshell import (
    OnShellSystem,
    ParamValues,
    Variant,
    covering_defects,
    make_covering_system,
    make_equation_system,
    specialize,
    vorticity,
)
from eulerncl.reports import VerificationReport, elapsed_ms, expect_failure
from eulerncl.varcalc import (
    HorizontalForm2,
    adjoint,
    horizontal_differential,
    is_total_divergence,
    linear_operator,
)

logger = structlog.stdlib.get_logger(__name__)

HALF = GaussianRational(1, 0) / GaussianRational(2, 0)
HALF_EXPR = Expr.constant(HALF)

# (t~, x~, y~) = M (t, x, y); takes the Delta-form to -2i times the D-form.
ROTATION = const_matrix(
    [
        [ONE, ZERO, ZERO],
        [ZERO, (ONE + I) * HALF, (ONE + I) * HALF],
        [ZERO, -(ONE - I) * HALF, (ONE - I) * HALF],
    ]
)


@dataclass(frozen=True)
class GeneratorSpec:
    """A symmetry generator, identified by its formula."""

    name: str
    text: str
    expr: Expr = field(compare=False, repr=False)
    description: str = ""

    def __post_init__(self):
        foreign = {g.name for g in self.expr.jets()} - {"u"}
        if foreign:
            raise ValueError(f"{self.name}: a generator may only contain jets of u, found {', '.join(sorted(foreign))}")


def generator_spec(name: str, text: str, description: str = "") -> GeneratorSpec:
    return GeneratorSpec(name, text, parse(text), description)


@dataclass(frozen=True)
class CosymmetrySpec:
    variant: Variant
    text: str
    expr: Expr = field(compare=False, repr=False)


_GENERATOR_TABLES: dict[Variant, list[tuple[str, str, str]]] = {
    Variant.D: [
        ("phi1", "-t*u_t - u", "time scaling"),
        ("phi2", "-u_t", "time translation"),
        ("phi3", "-x*u_x + y*u_y", "hyperbolic rotation"),
        ("phi5", "-x*u_x - y*u_y + 2*u", "scaling"),
        ("phi6", "-A1(t)*u_x + A1'(t)*y", "moving frame along x"),
        ("phi7", "-A2(t)*u_y - A2'(t)*x", "moving frame along y"),
        ("phi8", "A3(t)", "gauge"),
    ],
    Variant.LAPLACE: [
        ("phi1", "-t*u_t - u", "time scaling"),
        ("phi2", "-u_t", "time translation"),
        ("phi3", "y*u_x - x*u_y", "rotation"),
        ("phi4", "t*(y*u_x - x*u_y) - 1/2*(x^2 + y^2)", "rotating frame"),
        ("phi5", "-x*u_x - y*u_y + 2*u", "scaling"),
        ("phi6", "-A1(t)*u_x + A1'(t)*y", "moving frame along x"),
        ("phi7", "-A2(t)*u_y - A2'(t)*x", "moving frame along y"),
        ("phi8", "A3(t)", "gauge"),
    ],
}

# The listed phi4 has "t*y*u" where t*y*u_y matches the t*x*u_x term; both are kept and checked.
PHI4_CANDIDATES: tuple[tuple[str, str], ...] = (
    ("phi4-printed", "-t*x*u_x + t*y*u + x*y"),
    ("phi4-conjectured", "-t*x*u_x + t*y*u_y + x*y"),
)

EXAMPLE_GENERATORS: dict[str, str] = {
    "ex1": "u - x*u_x",
    "ex2": "A1(t)",
}

NEGATIVE_CONTROL = "u"

# The Delta-form lambda term carries a factor t: -Delta(p_t) has to supply the +lambda
# that J(s, Delta(u)) takes away, and a t-free (x^2 + y^2)/4 supplies nothing.
_COSYMMETRIES: dict[Variant, str] = {
    Variant.D: "s - lambda*t*x*y - (mu + 2*eps)*t*u",
    Variant.LAPLACE: "s - (mu + 2*eps)*t*u - 1/4*lambda*t*(x^2 + y^2)",
}

# p0 with the (mu + 2 eps) t u term dropped
_MUTATED_COSYMMETRIES: dict[Variant, str] = {
    Variant.D: "s - lambda*t*x*y",
    Variant.LAPLACE: "s - 1/4*lambda*t*(x^2 + y^2)",
}

_systems: dict[tuple, OnShellSystem] = {}
_systems_lock = threading.Lock()
_phi4: dict[Variant, GeneratorSpec] = {}


def builtin_F(variant: Variant | str) -> Expr:
    """D(u_t) - J(u, D(u)) or Delta(u_t) - J(u, Delta(u))."""
    u = jetvar("u")
    return vorticity(variant, total_derivative(u, "t")) - jacobian_bracket(u, vorticity(variant, u))


def _params_key(params: ParamValues | None) -> tuple:
    if not params:
        return ()
    return tuple(sorted((name, to_plain(value)) for name, value in params.items()))


def equation_system(variant: Variant | str) -> OnShellSystem:
    return _shared_system(Variant(variant), covering=False, params=None)


def covering_system(variant: Variant | str, params: ParamValues | None = None) -> OnShellSystem:
    return _shared_system(Variant(variant), covering=True, params=params)


def _shared_system(variant: Variant, covering: bool, params: ParamValues | None) -> OnShellSystem:
    """Systems are shared so their prolongation caches are reused across checks."""
    key = (variant, covering, _params_key(params))
    with _systems_lock:
        system = _systems.get(key)
        if system is None:
            system = make_covering_system(variant, params) if covering else make_equation_system(variant)
            _systems[key] = system
        return system


def symmetries(variant: Variant | str) -> list[GeneratorSpec]:
    """The generator list of a variant; the D-form phi4 is resolved by checking both candidates."""
    variant = Variant(variant)
    specs = [generator_spec(name, text, description) for name, text, description in _GENERATOR_TABLES[variant]]
    if variant is Variant.D:
        specs.insert(3, resolve_phi4())
    return specs


def phi4_candidates() -> list[GeneratorSpec]:
    return [generator_spec(name, text) for name, text in PHI4_CANDIDATES]


def resolve_phi4() -> GeneratorSpec:
    """The phi4 candidate that is a symmetry of the D-form."""
    if Variant.D in _phi4:
        return _phi4[Variant.D]
    passing = [spec for spec in phi4_candidates() if verify_symmetry(spec, Variant.D).ok]
    if len(passing) != 1:
        raise ValueError(f"Expected exactly one phi4 candidate to pass, {len(passing)} did")
    chosen = passing[0]
    logger.info("Resolved phi4", candidate=chosen.name, formula=chosen.text)
    spec = GeneratorSpec("phi4", chosen.text, chosen.expr, f"{chosen.name}")
    _phi4[Variant.D] = spec
    return spec


def lookup_generator(name_or_expr: str, variant: Variant | str = Variant.D) -> GeneratorSpec:
    """Resolve a generator by name (phi1..phi8, phi4-printed, ex1, ...) or parse it as a formula."""
    variant = Variant(variant)
    key = name_or_expr.strip()
    if key in EXAMPLE_GENERATORS:
        return generator_spec(key, EXAMPLE_GENERATORS[key])
    for name, text in PHI4_CANDIDATES:
        if key == name:
            return generator_spec(name, text)
    if variant is Variant.D and key == "phi4":
        return resolve_phi4()
    for name, text, description in _GENERATOR_TABLES[variant]:
        if key == name:
            return generator_spec(name, text, description)
    return generator_spec(key, key)


def cosymmetry(variant: Variant | str) -> CosymmetrySpec:
    variant = Variant(variant)
    return CosymmetrySpec(variant, _COSYMMETRIES[variant], parse(_COSYMMETRIES[variant]))


def mutated_cosymmetry(variant: Variant | str) -> CosymmetrySpec:
    variant = Variant(variant)
    return CosymmetrySpec(variant, _MUTATED_COSYMMETRIES[variant], parse(_MUTATED_COSYMMETRIES[variant]))


def verify_symmetry(spec: GeneratorSpec, variant: Variant | str) -> VerificationReport:
    """restrict(l_F(phi)) on the equation; arbitrary functions stay symbolic."""
    started = time.perf_counter()
    variant = Variant(variant)
    system = equation_system(variant)
    residual = system.restrict(linear_operator(builtin_F(variant), "u").apply(spec.expr))
    report = VerificationReport.from_residual(
        f"symmetry[{variant}:{spec.name}]", residual, started=started, notes=[spec.text]
    )
    logger.debug("Symmetry checked", generator=spec.name, variant=str(variant), status=str(report.status))
    return report


def phi4_report() -> VerificationReport:
    """Both phi4 candidates are checked; verified iff exactly one of them is a symmetry."""
    started = time.perf_counter()
    outcomes = [(spec, verify_symmetry(spec, Variant.D)) for spec in phi4_candidates()]
    notes = [
        f"{spec.name} ({spec.text}): {report.status}"
        + ("" if report.ok else f", {len(report.residual.num)} residual terms")
        for spec, report in outcomes
    ]
    passing = sum(report.ok for _, report in outcomes)
    return VerificationReport.from_flag("symmetry[D:phi4-candidates]", passing == 1, started, notes)


def negative_control_report(variant: Variant | str) -> VerificationReport:
    spec = generator_spec("control", NEGATIVE_CONTROL)
    return expect_failure(f"symmetry-control[{Variant(variant)}:q=u]", verify_symmetry(spec, variant))


def verify_cosymmetry(spec: CosymmetrySpec, params: ParamValues | None = None, claim_id: str | None = None) -> VerificationReport:
    """restrict(l*_F(p0)) on the equation and its covering, divisor assumptions reported."""
    started = time.perf_counter()
    system = covering_system(spec.variant, params)
    op = adjoint(linear_operator(builtin_F(spec.variant), "u"))
    residual = system.restrict(op.apply(specialize(spec.expr, params)))
    report = VerificationReport.from_residual(
        claim_id or f"cosymmetry[{spec.variant}]", residual, system.assumptions, started, notes=[spec.text]
    )
    logger.debug("Cosymmetry checked", variant=str(spec.variant), status=str(report.status))
    return report


def cosymmetry_mutation_report(variant: Variant | str) -> VerificationReport:
    variant = Variant(variant)
    report = verify_cosymmetry(mutated_cosymmetry(variant), claim_id=f"cosymmetry[{variant}:mutated]")
    return expect_failure(f"cosymmetry-control[{variant}]", report)


def canonical_form2(variant: Variant | str, q: Expr, p: Expr) -> HorizontalForm2:
    """The canonical conservation law of the variant, at the given q and p."""
    if q.is_zero() or p.is_zero():
        return HorizontalForm2()
    variant = Variant(variant)
    u = jetvar("u")

    def d(e: Expr, subscript: str) -> Expr:
        for direction in subscript:
            e = total_derivative(e, direction)
        return e

    u_x, u_y, u_xx, u_xy, u_yy = (jetvar("u", s) for s in ("x", "y", "xx", "xy", "yy"))
    q_t, q_x, q_y = d(q, "t"), d(q, "x"), d(q, "y")
    p_t, p_x, p_y = d(p, "t"), d(p, "x"), d(p, "y")
    if variant is Variant.D:
        Dq, Dp = vorticity(variant, q), vorticity(variant, p)
        k1 = (
            u_y * (q * Dp + Dq * p)
            - vorticity(variant, u_y) * q * p
            - d(q_t * p, "y") * HALF_EXPR
            - q_y * (p_t - u_x * p_y)
            + u_yy * q * p_x
        )
        k2 = (
            -u_x * (q * Dp + Dq * p)
            + vorticity(variant, u_x) * q * p
            + d(q_t * p, "x") * HALF_EXPR
            + q * (d(p_t, "x") - u_xx * p_y)
            - u_y * q_x * p_x
        )
        return HorizontalForm2(Dq * p, k1, k2)
    lap_q = vorticity(variant, q)
    # corrected from the printed N1 (Delta(q_y)*p, here Delta(u)*q_y*p) and N2 (q*p_y, here q*p_yy); as printed the identity fails
    n1 = (
        q * d(p_t, "x")
        - q_x * p_t
        + u_y * (lap_q * p - q_x * p_x + q * d(p, "xx"))
        + vorticity(variant, u) * q_y * p
        - u_x * (q * d(p, "xy") + d(q, "xy") * p)
        - u_xy * (q_x * p - q * p_x)
        + u_yy * q * p_y
    )
    n2 = (
        q * d(p_t, "y")
        - q_y * p_t
        + u_x * (q_y * p_y - q * d(p, "yy") + q_x * p_x - d(q, "yy") * p)
        + u_y * (q * d(p, "xy") - q_y * p_x)
        - u_xx * q * p_x
        - u_yy * q_x * p
        - u_xy * q * p_y
    )
    return HorizontalForm2(lap_q * p, n1, n2)


def symbolic_canonical_form2(variant: Variant | str) -> HorizontalForm2:
    return canonical_form2(variant, jetvar("q"), jetvar("p"))


def prop1_report(variant: Variant | str) -> VerificationReport:
    """Off-shell: W(d_h Omega_{q,p}) equals l_F(q) p - q l*_F(p) for symbolic q and p."""
    started = time.perf_counter()
    variant = Variant(variant)
    F = builtin_F(variant)
    q, p = jetvar("q"), jetvar("p")
    op = linear_operator(F, "u")
    remainder = op.apply(q) * p - q * adjoint(op).apply(p)
    residual = horizontal_differential(canonical_form2(variant, q, p)).W - remainder
    return VerificationReport.from_residual(f"canonical-law[{variant}]", residual, started=started)


def printed_linearization(variant: Variant | str, q: Expr) -> Expr:
    """W(q_t) - J(q, W(u)) - J(u, W(q)) with W the vorticity operator of the variant."""
    u = jetvar("u")
    w = lambda e: vorticity(variant, e)  # noqa: E731
    return w(total_derivative(q, "t")) - jacobian_bracket(q, w(u)) - jacobian_bracket(u, w(q))


def printed_adjoint(variant: Variant | str, p: Expr) -> Expr:
    """-W(p_t - J(u, p)) - J(W(u), p)."""
    u = jetvar("u")
    return -vorticity(variant, total_derivative(p, "t") - jacobian_bracket(u, p)) - jacobian_bracket(
        vorticity(variant, u), p
    )


def adjoint_report(variant: Variant | str) -> VerificationReport:
    """The generically computed linearization and adjoint agree with their closed forms."""
    started = time.perf_counter()
    variant = Variant(variant)
    op = linear_operator(builtin_F(variant), "u")
    q, p = jetvar("q"), jetvar("p")
    linearization = op.apply_symbol("q") - printed_linearization(variant, q)
    residual = adjoint(op).apply(p) - printed_adjoint(variant, p)
    notes = ["linearization matches" if linearization.is_zero() else "linearization differs"]
    if residual.is_zero() and not linearization.is_zero():
        residual = linearization
    return VerificationReport.from_residual(f"adjoint[{variant}]", residual, started=started, notes=notes)


def construct_ncl(variant: Variant | str, spec: GeneratorSpec, params: ParamValues | None = None) -> HorizontalForm2:
    """Canonical law at q = phi, p = p0, with s_t, s_y and the equation's leading derivative eliminated."""
    variant = Variant(variant)
    system = covering_system(variant, params)
    p0 = specialize(cosymmetry(variant).expr, params)
    omega = canonical_form2(variant, spec.expr, p0)
    logger.debug("Constructing conservation law", generator=spec.name, variant=str(variant))
    return omega.map(system.restrict)


def verify_ncl_closed(omega: HorizontalForm2, system: OnShellSystem, claim_id: str = "ncl-closed") -> VerificationReport:
    started = time.perf_counter()
    residual = system.restrict(horizontal_differential(omega).W)
    report = VerificationReport.from_residual(claim_id, residual, system.assumptions, started)
    logger.debug("Closedness checked", claim_id=claim_id, status=str(report.status))
    return report


def ncl_closed_report(variant: Variant | str, spec: GeneratorSpec, params: ParamValues | None = None) -> VerificationReport:
    variant = Variant(variant)
    omega = construct_ncl(variant, spec, params)
    report = verify_ncl_closed(omega, covering_system(variant, params), f"ncl-closed[{variant}:{spec.name}]")
    report.notes.append(spec.text)
    return report


def ncl_mutation_report(generator: str = "ex2") -> VerificationReport:
    """Control: the D-form law with the u_yy*q*p_x term of its dy^dt coefficient dropped is not closed."""
    spec = lookup_generator(generator, Variant.D)
    system = covering_system(Variant.D)
    p0 = cosymmetry(Variant.D).expr
    omega = canonical_form2(Variant.D, spec.expr, p0)
    dropped = jetvar("u", "yy") * spec.expr * total_derivative(p0, "x")
    truncated = HorizontalForm2(omega.A, omega.B - dropped, omega.C).map(system.restrict)
    report = verify_ncl_closed(truncated, system, f"ncl-closed[D:{spec.name}:dropped-term]")
    return expect_failure(f"ncl-closed-control[D:{spec.name}]", report)


def two_component_report(variant: Variant | str, spec: GeneratorSpec) -> VerificationReport:
    """The dx^dy coefficient vanishes."""
    started = time.perf_counter()
    omega = construct_ncl(variant, spec)
    return VerificationReport.from_residual(
        f"two-component[{Variant(variant)}:{spec.name}]", omega.A, started=started, notes=[spec.text]
    )


def sxx_independence_report(variant: Variant | str, spec: GeneratorSpec) -> VerificationReport:
    """No coefficient of the constructed law depends on s_xx."""
    started = time.perf_counter()
    omega = construct_ncl(variant, spec)
    s_xx = jet("s", (0, 2, 0))
    residual = Expr()
    for coefficient in omega.coefficients():
        residual = partial(coefficient, s_xx)
        if not residual.is_zero():
            break
    return VerificationReport.from_residual(
        f"sxx-independent[{Variant(variant)}:{spec.name}]", residual, started=started, notes=[spec.text]
    )


def characteristic(variant: Variant | str, P: Expr, Q: Expr, R: Expr, params: ParamValues | None = None) -> Expr:
    """P F + Q G1 + R G2."""
    g1, g2 = covering_defects(variant, params)
    return P * builtin_F(variant) + Q * g1 + R * g2


def verify_decomposition(
    P: Expr,
    Q: Expr,
    R: Expr,
    variant: Variant | str,
    params: ParamValues | None = None,
    omega: HorizontalForm2 | None = None,
    claim_id: str = "decomposition",
) -> VerificationReport:
    """W(d_h omega) - (P F + Q G1 + R G2) is a total divergence in u and s.

    W(d_h omega) is a divergence by construction, so without `omega` only the
    characteristic part is sent through the Euler operators.
    """
    started = time.perf_counter()
    difference = -characteristic(variant, P, Q, R, params)
    notes = []
    if omega is not None:
        difference = horizontal_differential(omega).W + difference
    else:
        notes.append("d_h(omega) term omitted: exact by construction")
    report = is_total_divergence(difference, ("u", "s"), claim_id)
    report.notes = notes + report.notes
    report.elapsed_ms = elapsed_ms(started)
    return report


def example_decomposition(name: str) -> tuple[Expr, Expr, Expr]:
    """(P, Q, R) of the worked examples."""
    match name:
        case "ex1":
            texts = ("x*s_x + s - 2*t*(mu + 2*eps)*u - 2*lambda*t*x*y", "-x*D(u_x)", "u - x*u_x")
        case "ex2":
            texts = ("-A1(t)*(mu + 2*eps)*t", "0", "A1(t)")
        case _:
            raise KeyError(f"No decomposition for {name!r}")
    P, Q, R = (parse(text) for text in texts)
    return P, Q, R


def decomposition_mutation_report() -> VerificationReport:
    """Dropping x*s_x from the first example's P breaks exactness."""
    P, Q, R = example_decomposition("ex1")
    report = verify_decomposition(P - parse("x*s_x"), Q, R, Variant.D, claim_id="decomposition[ex1:mutated]")
    return expect_failure("decomposition-control[ex1]", report)


def find_constant(image: Expr, goal: Expr) -> GaussianRational | None:
    """The c with image = c * goal, if there is one."""
    if goal.is_zero() or not image.is_polynomial() or not goal.is_polynomial():
        return None
    mono, coeff = goal.num.leading_term()
    c = image.num.terms.get(mono, ZERO) / coeff
    if not c or not (image - goal.scale(c)).is_zero():
        return None
    return c


def sampled_ratio(image: Expr, goal: Expr, points: int, seed: int) -> list[GaussianRational]:
    """image / goal evaluated at random Gaussian-rational points where goal does not vanish."""
    rng = random.Random(seed)
    generators = sorted(image.generators() | goal.generators())
    ratios = []
    for _ in range(4 * points):
        point = {g: GaussianRational(rng.randint(-9, 9), rng.randint(-9, 9)) for g in generators}
        at_goal = eval_at(goal, point)
        if at_goal:
            ratios.append(eval_at(image, point) / at_goal)
        if len(ratios) == points:
            break
    return ratios


def verify_rotation(
    matrix: Matrix = ROTATION,
    source: Variant | str = Variant.LAPLACE,
    target: Variant | str = Variant.D,
    points: int = 5,
    seed: int = 0,
) -> VerificationReport:
    """The change of variables takes builtin_F(source) to c * builtin_F(target), c a nonzero constant.

    c is read off exact evaluations at random points first; the symbolic identity
    image = c * goal and find_constant then have to agree with it.
    """
    started = time.perf_counter()
    claim_id = f"rotation[{Variant(source)}->{Variant(target)}]"
    image = apply_linear_change(builtin_F(source), matrix)
    goal = builtin_F(target)
    ratios = sampled_ratio(image, goal, points, seed)
    if not ratios:
        return VerificationReport.from_flag(claim_id, False, started, ["target vanishes at every sampled point"], image)
    c = ratios[0]
    text = f"c = {to_plain(Expr.constant(c))}"
    if not c or any(r != c for r in ratios):
        logger.info("Sampled ratios are not one constant", claim_id=claim_id, distinct=len(set(ratios)))
        return VerificationReport.from_flag(
            claim_id, False, started, ["no constant multiple at the sampled points"], image - goal.scale(c)
        )
    residual = image - goal.scale(c)
    if not residual.is_zero():
        return VerificationReport.from_residual(claim_id, residual, started=started, notes=[text, "symbolic identity fails"])
    if find_constant(image, goal) != c:
        logger.error("Symbolic constant disagrees with sampled one", claim_id=claim_id)
        return VerificationReport.from_flag(claim_id, False, started, [text, "find_constant disagrees"])
    return VerificationReport.from_flag(claim_id, True, started, [text, f"read off {len(ratios)} random points"])
