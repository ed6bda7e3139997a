"""Jet-coordinate semantics: total derivatives and the operators built from them."""

from functools import lru_cache
from typing import Literal, Sequence

import structlog

from eulerncl.config import active_config
from eulerncl.kernel import (
    ONE,
    ONE_POLY,
    ZERO,
    ZERO_EXPR,
    Expr,
    GaussianRational,
    Generator,
    GeneratorKind,
    MultiIndex,
    Poly,
    arbfun,
    gen_of,
    indep,
    jet,
    substitute_simultaneous,
    var,
)

logger = structlog.stdlib.get_logger(__name__)

Direction = Literal["t", "x", "y"]
DIRECTIONS: tuple[Direction, ...] = ("t", "x", "y")
UNIT: dict[str, MultiIndex] = {
    "t": MultiIndex(1, 0, 0),
    "x": MultiIndex(0, 1, 0),
    "y": MultiIndex(0, 0, 1),
}

Matrix = Sequence[Sequence[GaussianRational]]

__all__ = [
    "ChartChangeError",
    "Direction",
    "JetOrderError",
    "JetSpaceError",
    "MultiIndex",
    "apply_linear_change",
    "jacobian_bracket",
    "laplacian",
    "mixed",
    "scaling_E",
    "total_derivative",
    "total_derivative_multi",
]


class JetSpaceError(Exception):
    """Raised for invalid jet-space operations"""

    pass


class JetOrderError(JetSpaceError):
    """Raised when a total derivative would exceed the configured jet order cap"""

    pass


class ChartChangeError(JetSpaceError):
    """Raised for unsupported or singular changes of independent variables"""

    pass


@lru_cache(maxsize=1 << 16)
def _image(ident: int, direction: str, cap: int) -> Poly | None:
    generator = gen_of(ident)
    match generator.kind:
        case GeneratorKind.INDEP:
            return ONE_POLY if generator.name == direction else None
        case GeneratorKind.PARAM:
            return None
        case GeneratorKind.ARBFUN:
            # arbitrary functions depend on t only
            if direction != "t":
                return None
            return Poly.generator(arbfun(generator.rank, generator.derivative_order + 1))
        case _:
            index = generator.multi_index + UNIT[direction]
            if index.order > cap:
                name = f"{generator.name}_{index.subscript()}"
                logger.error("Jet order cap exceeded", jet=name, order_cap=cap)
                raise JetOrderError(f"{name} exceeds the jet order cap {cap}")
            return Poly.generator(jet(generator.name, index))


def total_derivative(e: Expr, d: Direction) -> Expr:
    if d not in UNIT:
        raise JetSpaceError(f"Unknown direction {d!r}")
    cap = active_config().order_cap
    return e.derive(lambda ident: _image(ident, d, cap))


def total_derivative_multi(e: Expr, sigma: MultiIndex | Sequence[int]) -> Expr:
    sigma = MultiIndex(*sigma)
    for d, count in zip(DIRECTIONS, sigma):
        for _ in range(count):
            if e.is_zero():
                return e
            e = total_derivative(e, d)
    return e


def Dt(e: Expr) -> Expr:
    return total_derivative(e, "t")


def Dx(e: Expr) -> Expr:
    return total_derivative(e, "x")


def Dy(e: Expr) -> Expr:
    return total_derivative(e, "y")


def mixed(e: Expr) -> Expr:
    """The operator D = D_x o D_y."""
    return Dx(Dy(e))


def laplacian(e: Expr) -> Expr:
    return Dx(Dx(e)) + Dy(Dy(e))


def jacobian_bracket(a: Expr, b: Expr) -> Expr:
    """J(a, b) = a_x b_y - a_y b_x."""
    return Dx(a) * Dy(b) - Dy(a) * Dx(b)


def scaling_E(e: Expr) -> Expr:
    """E(e) = x e_x + y e_y - 2 e."""
    return var(indep("x")) * Dx(e) + var(indep("y")) * Dy(e) - e * 2


def jetvar(dep: str, index: Sequence[int] | str = (0, 0, 0)) -> Expr:
    """Jet variable of `dep`, by multi-index or subscript string ("txy")."""
    if isinstance(index, str):
        index = (index.count("t"), index.count("x"), index.count("y"))
    return var(jet(dep, index))


def invert(matrix: Matrix) -> list[list[GaussianRational]]:
    """Exact inverse of a square matrix over Q(i) by Gauss-Jordan elimination."""
    n = len(matrix)
    rows = [[GaussianRational.coerce(v) for v in row] + [ONE if i == j else ZERO for j in range(n)] for i, row in enumerate(matrix)]
    if any(len(row) != 2 * n for row in rows):
        raise ChartChangeError("Chart change matrix must be square")
    for col in range(n):
        pivot = next((r for r in range(col, n) if rows[r][col]), None)
        if pivot is None:
            raise ChartChangeError("Chart change matrix is singular")
        rows[col], rows[pivot] = rows[pivot], rows[col]
        scale = ONE / rows[col][col]
        rows[col] = [v * scale for v in rows[col]]
        for r in range(n):
            if r != col and rows[r][col]:
                factor = rows[r][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[col])]
    return [row[n:] for row in rows]


def _compose(a: dict[MultiIndex, GaussianRational], b: dict[MultiIndex, GaussianRational]) -> dict[MultiIndex, GaussianRational]:
    out: dict[MultiIndex, GaussianRational] = {}
    for sa, ca in a.items():
        for sb, cb in b.items():
            key = sa + sb
            out[key] = out.get(key, ZERO) + ca * cb
    return {k: v for k, v in out.items() if v}


def apply_linear_change(e: Expr, matrix: Matrix) -> Expr:
    """Rewrite `e`, written in tilde coordinates (t~, x~, y~) = M (t, x, y), in plain coordinates.

    Only jets of u and explicit t, x, y may occur.
    """
    for generator in e.generators():
        if generator.is_jet and generator.name != "u":
            raise ChartChangeError(f"Chart change does not support jets of {generator.name}")
    M = [[GaussianRational.coerce(v) for v in row] for row in matrix]
    if len(M) != 3:
        raise ChartChangeError("Chart change matrix must be 3x3")
    inverse = invert(M)
    # d/dx~_i = sum_j inverse[j][i] d/dx_j
    tilde_ops = [{UNIT[d]: inverse[j][i] for j, d in enumerate(DIRECTIONS) if inverse[j][i]} for i in range(3)]
    cap = active_config().order_cap
    bindings: dict[Generator, Expr] = {}
    for generator in e.generators():
        match generator.kind:
            case GeneratorKind.INDEP:
                i = DIRECTIONS.index(generator.name)
                image = ZERO_EXPR
                for j, d in enumerate(DIRECTIONS):
                    if M[i][j]:
                        image = image + var(indep(d)).scale(M[i][j])
                bindings[generator] = image
            case GeneratorKind.JET:
                op = {MultiIndex(): ONE}
                for i, count in enumerate(generator.multi_index):
                    for _ in range(count):
                        op = _compose(op, tilde_ops[i])
                image = ZERO_EXPR
                for sigma, c in op.items():
                    if sigma.order > cap:
                        raise JetOrderError(f"u_{sigma.subscript()} exceeds the jet order cap {cap}")
                    image = image + jetvar("u", sigma).scale(c)
                bindings[generator] = image
            case _:
                pass
    logger.debug("Applying chart change", generators=len(bindings))
    return substitute_simultaneous(e, bindings)


def identity_matrix() -> list[list[GaussianRational]]:
    return [[ONE if i == j else ZERO for j in range(3)] for i in range(3)]


def const_matrix(rows: Sequence[Sequence[int | GaussianRational]]) -> list[list[GaussianRational]]:
    return [[GaussianRational.coerce(v) for v in row] for row in rows]
