import json
import random
from fractions import Fraction

import pytest

from eulerncl.exprlang import (
    MAX_EXPONENT,
    ParseError,
    iter_terms,
    parse,
    parse_assignments,
    render,
    to_json_terms,
    to_latex,
    to_plain,
    tokenize,
)
from eulerncl.fuzz import random_text
from eulerncl.kernel import Expr, GaussianRational, arbfun, jet, var


class TestParse:
    def test_precedence(self):
        assert parse("-u^2") == -(parse("u") * parse("u"))
        assert parse("1 - 2 - 3") == Expr.constant(-4)
        assert parse("-1/2*u") == parse("u").scale(GaussianRational(Fraction(-1, 2)))

    def test_jet_notations_agree(self):
        assert parse("u_txy") == parse("u[1,1,1]")
        assert parse("u_yx") == parse("u_xy")
        assert parse("q_tt") == var(jet("q", (2, 0, 0)))

    def test_arbitrary_function_derivatives(self):
        assert parse("A1''(t)") == var(arbfun(1, 2))
        assert parse("A3^(4)(t)") == var(arbfun(3, 4))
        assert parse("A2(t)") == var(arbfun(2))

    def test_complex_unit(self):
        assert parse("i*i") == Expr.constant(-1)

    @pytest.mark.parametrize(
        "text, expected",
        [
            ("D(u)", "u_xy"),
            ("Delta(u)", "u_xx + u_yy"),
            ("E(u)", "x*u_x + y*u_y - 2*u"),
            ("J(x, y)", "1"),
            ("Dt(A1(t))", "A1'(t)"),
            ("Dx(A1(t))", "0"),
            ("Dy(x*y*u)", "x*u + x*y*u_y"),
        ],
    )
    def test_builtin_operators(self, text, expected):
        assert parse(text) == parse(expected)

    def test_newlines_are_whitespace(self):
        assert parse("u +\n  x") == parse("u + x")

    def test_division(self):
        assert parse("u/(x + y)") * parse("x + y") == parse("u")


class TestParseErrors:
    @pytest.mark.parametrize(
        "text, fragment",
        [
            ("u_z", "invalid jet subscript"),
            ("A1(x)", "depend on t only"),
            ("A1_x", "depend on t only"),
            ("1/0", "division by zero"),
            ("1/(x - x)", "division by zero"),
            (f"u^{MAX_EXPONENT + 1}", "exceeds"),
            ("foo", "unknown identifier"),
            ("u +", "expected an expression"),
            ("J(u)", "takes 2 arguments"),
            ("D(u, s)", "takes 1 argument"),
            ("u # v", "unexpected character"),
            ("u[1,1]", "expected"),
            ("A1", "expected '('"),
        ],
    )
    def test_rejected(self, text, fragment):
        with pytest.raises(ParseError) as error:
            parse(text)
        assert fragment in str(error.value)

    def test_span_points_at_offending_character(self):
        with pytest.raises(ParseError) as error:
            parse("u + $")
        assert (error.value.span.line, error.value.span.column) == (1, 5)

    def test_span_honours_first_line(self):
        with pytest.raises(ParseError) as error:
            parse("u +\n  $", first_line=10)
        assert str(error.value.span) == "11:3"

    def test_order_cap_becomes_parse_error(self):
        with pytest.raises(ParseError):
            parse("Dx(u[6,6,6])")

    def test_tokenize_ends_with_eof(self):
        assert [t.kind for t in tokenize("u_x + 1")] == ["name", "op", "number", "eof"]


class TestAssignments:
    def test_parameters(self):
        values = parse_assignments("lambda=1, mu=0, eps=1/2")
        assert values["lambda"] == 1
        assert values["mu"].is_zero()
        assert values["eps"] == Expr.constant(Fraction(1, 2))

    @pytest.mark.parametrize("text", ["nu=1", "lambda", "lambda=1,lambda=2"])
    def test_rejected(self, text):
        with pytest.raises(ParseError):
            parse_assignments(text)


class TestPrinters:
    @pytest.mark.parametrize(
        "text, printed",
        [
            ("u[1,1,1]", "u_txy"),
            ("u_yx", "u_xy"),
            ("A1''(t)", "A1''(t)"),
            ("A1'''(t)", "A1^(3)(t)"),
            ("-1/2*u", "-1/2*u"),
            ("3*i*s", "3*i*s"),
            ("1/u", "(1)/(u)"),
            ("lambda*u_x^2", "lambda*u_x^2"),
        ],
    )
    def test_plain(self, text, printed):
        assert to_plain(parse(text)) == printed

    @pytest.mark.parametrize(
        "text",
        [
            "u_x*u_y/(u_xxy + x)",
            "1/(u^2*(x + u_y))",
            "(1 + 2*i)*A2'(t) - eps*s_xx",
            "-(t - x)^3/(lambda*y)",
            "A1^(5)(t)*q_ttt*p",
        ],
    )
    def test_plain_parses_back(self, text):
        e = parse(text)
        assert parse(to_plain(e)) == e

    def test_random_sentences_parse_back(self):
        rng = random.Random(7)
        for _ in range(50):
            e = parse(random_text(rng))
            assert parse(to_plain(e)) == e

    def test_latex(self):
        assert to_latex(parse("lambda*u_xy")) == r"\lambda u_{xy}"
        assert to_latex(parse("1/2*eps")) == r"\frac{1}{2} \varepsilon"

    def test_json_terms(self):
        assert to_json_terms(parse("2*u_txy")) == {
            "num": [{"coeff": {"re": "2", "im": "0"}, "pows": [["u[1,1,1]", 1]]}],
            "den": [{"coeff": {"re": "1", "im": "0"}, "pows": []}],
        }
        assert to_json_terms(parse("A1''(t)"))["num"][0]["pows"] == [["A1^(2)", 1]]

    def test_render(self):
        e = parse("mu*u")
        assert render(e) == "mu*u"
        assert render(e, "latex") == r"\mu u"
        assert json.loads(render(e, "json"))["num"][0]["pows"] == [["mu", 1], ["u[0,0,0]", 1]]
        with pytest.raises(ValueError):
            render(e, "html")

    def test_iter_terms(self):
        assert list(iter_terms(parse("3*x*u_x^2"))) == [("x*u_x^2", GaussianRational(3))]
