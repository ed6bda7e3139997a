import random

import pytest

from eulerncl.exprlang import ParseError, parse
from eulerncl.fuzz import (
    DEFAULT_CASES,
    PROPERTIES,
    base_generators,
    kernel_props,
    multi_indices,
    check_canonical_form,
    random_expr,
    random_garbage,
    random_poly,
    reassociate,
)

SMALL = {name: 5 for name in DEFAULT_CASES}


class TestGenerators:
    def test_multi_indices(self):
        assert len(multi_indices(0)) == 1
        assert len(multi_indices(2)) == 10
        assert all(sum(m) <= 2 for m in multi_indices(2))

    def test_base_generators(self):
        assert len(base_generators(max_order=1, explicit=False)) == 4
        assert len(base_generators(max_order=1)) == 9

    def test_seeded(self):
        gens = base_generators()
        assert random_expr(random.Random(1), gens) == random_expr(random.Random(1), gens)

    def test_garbage_raises_only_parse_errors(self):
        rng = random.Random(11)
        for _ in range(100):
            try:
                parse(random_garbage(rng))
            except ParseError:
                pass


class TestReassociate:
    def test_sum_independent_of_order_and_bracketing(self):
        rng = random.Random(3)
        terms = [random_poly(rng, base_generators(max_order=1)) for _ in range(5)]
        expected = terms[0] + terms[1] + terms[2] + terms[3] + terms[4]
        for _ in range(10):
            assert reassociate(rng, terms, lambda a, b: a + b).structurally_equal(expected)

    def test_product_independent_of_order_and_bracketing(self, P):
        terms = [P("u_x + 1"), P("x - 2*i*u"), P("lambda*u_t")]
        expected = terms[0] * terms[1] * terms[2]
        rng = random.Random(5)
        for _ in range(10):
            assert reassociate(rng, terms, lambda a, b: a * b).structurally_equal(expected)

    def test_single_term(self, P):
        assert reassociate(random.Random(0), [P("u")], lambda a, b: a + b) == P("u")

    def test_canonical_form_check_passes(self):
        rng = random.Random(9)
        assert [check_canonical_form(rng) for _ in range(20)] == [None] * 20


class TestKernelProps:
    def test_every_property_has_a_default(self):
        assert DEFAULT_CASES.keys() == PROPERTIES.keys()

    def test_small_sweep(self):
        reports = kernel_props(seed=0, cases=SMALL)
        assert [r.claim_id for r in reports] == [f"kernel-props[{name}]" for name in PROPERTIES]
        assert all(r.ok for r in reports), [r.notes for r in reports if not r.ok]
        assert reports[0].notes == ["5 cases, seed 0"]

    def test_deterministic(self):
        first = kernel_props(seed=4, cases=SMALL)
        second = kernel_props(seed=4, cases=SMALL)
        assert [r.notes for r in first] == [r.notes for r in second]

    @pytest.mark.slow
    def test_default_sweep(self):
        assert all(r.ok for r in kernel_props())
