import random
from fractions import Fraction

import pytest

from eulerncl.fuzz import base_generators, random_expr
from eulerncl.kernel import (
    I,
    ONE,
    Expr,
    GaussianRational,
    SelfReferenceError,
    UnassignedGeneratorError,
    ZeroDenominatorError,
    ZeroDivisorError,
    KernelError,
    arbfun,
    drop,
    eval_at,
    indep,
    jet,
    normalize,
    param,
    partial,
    reduce_fraction,
    substitute,
    var,
)

t, x, y = (var(indep(name)) for name in ("t", "x", "y"))
u = var(jet("u"))


class TestGaussianRational:
    def test_multiplication(self):
        assert GaussianRational(1, 2) * GaussianRational(3, -1) == GaussianRational(5, 5)

    def test_division_inverts_multiplication(self):
        a, b = GaussianRational(Fraction(1, 3), 2), GaussianRational(-4, 1)
        assert (a * b) / b == a

    def test_i_squared(self):
        assert I * I == GaussianRational(-1)

    def test_division_by_zero(self):
        with pytest.raises(ZeroDivisorError):
            ONE / GaussianRational(0)

    def test_negative_power(self):
        assert GaussianRational(2) ** -2 == GaussianRational(Fraction(1, 4))

    def test_truthiness(self):
        assert not GaussianRational(0, 0)
        assert GaussianRational(0, 1)


class TestGenerator:
    def test_jet_string_uses_brackets(self):
        assert str(jet("u", (1, 1, 1))) == "u[1,1,1]"

    def test_arbitrary_function_string(self):
        assert str(arbfun(1, 2)) == "A1^(2)"

    def test_kind_order(self):
        ordered = [indep("t"), indep("y"), param("lambda"), param("eps"), arbfun(1), jet("u"), jet("s")]
        assert sorted(reversed(ordered)) == ordered

    def test_jets_ordered_by_total_order_first(self):
        assert jet("u", (0, 0, 2)) < jet("u", (1, 1, 1))
        assert jet("u", (0, 1, 0)) < jet("u", (1, 0, 0))

    def test_negative_index_rejected(self):
        with pytest.raises(KernelError):
            jet("u", (0, -1, 0))

    def test_multi_index_of_non_jet(self):
        with pytest.raises(KernelError):
            indep("x").multi_index


class TestExpr:
    def test_binomial_expansion(self):
        assert ((x + y) ** 2 - (x * x + 2 * x * y + y * y)).is_zero()

    def test_generator_quotient_cancels(self):
        q = (x * u) / x
        assert q.is_polynomial()
        assert q == u

    def test_fraction_sum(self):
        assert 1 / (x + y) + 1 / (x - y) == (2 * x) / (x * x - y * y)

    def test_multiply_back(self):
        a, b = x * u + 3, y - u
        assert (a / b) * b == a

    def test_division_by_zero_expression(self):
        with pytest.raises(ZeroDivisorError):
            x / (y - y)

    def test_scale_by_gaussian(self):
        assert (x.scale(I) * x.scale(I)) == -(x * x)

    def test_zero_has_no_factors(self):
        assert (u / (x + y) - u / (y + x)).factors == ()

    def test_generators_include_denominator(self):
        assert (u / (x + t)).generators() == {jet("u"), indep("x"), indep("t")}


class TestNormalize:
    def test_idempotent(self):
        e = (x * x * u + y) / (x * (u + y))
        assert normalize(normalize(e)).structurally_equal(normalize(e))

    def test_reduce_fraction_divides_out_common_factor(self):
        e = (x * x - y * y) / (x - y)
        reduced = reduce_fraction(e)
        assert reduced.is_polynomial()
        assert reduced == x + y


class TestPartial:
    def test_polynomial(self):
        assert partial(x * x * u, indep("x")) == 2 * x * u

    def test_quotient_rule(self):
        assert partial(1 / u, jet("u")) == -1 / (u * u)

    def test_independent_of_generator(self):
        assert partial(x * y, jet("u")).is_zero()


class TestSubstitute:
    def test_replaces_generator(self):
        assert substitute(u * x, {jet("u"): y}) == x * y

    def test_simultaneous(self):
        assert substitute(x - y, {indep("x"): y, indep("y"): x}) == y - x

    def test_self_reference_rejected(self):
        with pytest.raises(SelfReferenceError):
            substitute(u, {jet("u"): u + 1})

    def test_zero_denominator(self):
        with pytest.raises(ZeroDenominatorError):
            substitute(1 / u, {jet("u"): Expr()})

    def test_drop(self):
        assert drop(u * x + y, [jet("u")]) == y


class TestEvalAt:
    def test_gaussian_point(self):
        value = eval_at((x + y.scale(I)) ** 2, {indep("x"): 1, indep("y"): 1})
        assert value == GaussianRational(0, 2)

    def test_quotient(self):
        assert eval_at(u / x, {jet("u"): 3, indep("x"): 6}) == GaussianRational(Fraction(1, 2))

    def test_unassigned_generator(self):
        with pytest.raises(UnassignedGeneratorError):
            eval_at(x * y, {indep("x"): 1})


def random_point(rng, generators):
    return {g: GaussianRational(rng.randint(-9, 9), rng.randint(-9, 9)) for g in generators}


class TestZeroSoundness:
    def test_declared_zero_evaluates_to_zero(self):
        rng = random.Random(2)
        gens = base_generators(max_order=1)
        checked = 0
        for _ in range(40):
            a, b, c = (random_expr(rng, gens) for _ in range(3))
            lhs, rhs = (a + b) * c, a * c + b * c
            assert (lhs - rhs).is_zero()
            generators = sorted(lhs.generators() | rhs.generators())
            for _ in range(5):
                point = random_point(rng, generators)
                try:
                    assert eval_at(lhs, point) == eval_at(rhs, point)
                except ZeroDenominatorError:
                    continue
                checked += 1
        assert checked > 100

    def test_nonzero_evaluates_nonzero_somewhere(self):
        rng = random.Random(5)
        gens = base_generators(max_order=1)
        for _ in range(40):
            e = random_expr(rng, gens)
            if e.is_zero():
                continue
            generators = sorted(e.generators())
            values = []
            for _ in range(5):
                try:
                    values.append(eval_at(e, random_point(rng, generators)))
                except ZeroDenominatorError:
                    continue
            assert any(values), e
