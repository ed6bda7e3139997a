import pytest

from eulerncl.euler2d import builtin_F
from eulerncl.exprlang import parse
from eulerncl.jetspace import total_derivative
from eulerncl.kernel import MultiIndex
from eulerncl.onshell import Variant
from eulerncl.reports import Status
from eulerncl.varcalc import (
    HorizontalForm2,
    LinearDiffOperator,
    adjoint,
    euler_operator,
    green_remainder,
    horizontal_differential,
    is_total_divergence,
    linearize,
)

DX = MultiIndex(0, 1, 0)
DY = MultiIndex(0, 0, 1)
ID = MultiIndex(0, 0, 0)


class TestLinearize:
    def test_product(self):
        op, applied = linearize(parse("u*u_x"))
        assert op == LinearDiffOperator({ID: parse("u_x"), DX: parse("u")})
        assert applied == parse("u_x*q + u*q_x")

    def test_order(self):
        op, _ = linearize(builtin_F(Variant.D))
        assert op.order == 3

    def test_probe_must_be_fresh(self):
        with pytest.raises(ValueError):
            linearize(parse("u*q"))

    def test_zero_coefficients_dropped(self):
        assert LinearDiffOperator({ID: parse("0"), DX: parse("x")}).terms.keys() == {DX}

    def test_apply(self):
        op = LinearDiffOperator({DX: parse("x"), ID: parse("1")})
        assert op.apply(parse("x^2*u")) == parse("2*x^2*u + x^3*u_x + x^2*u")


class TestAdjoint:
    def test_first_derivative_is_antisymmetric(self):
        assert adjoint(LinearDiffOperator({DX: parse("1")})) == LinearDiffOperator({DX: parse("-1")})

    def test_variable_coefficient(self):
        # (x D_x)* = -D_x o x = -x D_x - 1
        assert adjoint(LinearDiffOperator({DX: parse("x")})) == LinearDiffOperator({DX: parse("-x"), ID: parse("-1")})

    def test_second_order(self):
        # (a D_xy)* = D_xy o a = a D_xy + a_y D_x + a_x D_y + a_xy
        op = LinearDiffOperator({MultiIndex(0, 1, 1): parse("u")})
        expected = LinearDiffOperator(
            {MultiIndex(0, 1, 1): parse("u"), DX: parse("u_y"), DY: parse("u_x"), ID: parse("u_xy")}
        )
        assert adjoint(op) == expected

    @pytest.mark.parametrize("variant", list(Variant))
    def test_involution(self, variant):
        op, _ = linearize(builtin_F(variant))
        assert adjoint(adjoint(op)) == op


class TestEulerOperator:
    def test_dirichlet_energy(self):
        assert euler_operator(parse("u_x^2"), "u") == parse("-2*u_xx")

    @pytest.mark.parametrize("text", ["u*u_x", "Dx(u*u_y)", "Dt(u_xy/u_x)", "Dy(A1(t)*u^3) + Dx(x*u_t)"])
    def test_divergences_are_annihilated(self, text):
        assert euler_operator(parse(text), "u").is_zero()

    def test_only_named_variable(self):
        assert euler_operator(parse("q*p_x"), "p") == parse("-q_x")
        assert euler_operator(parse("q*p_x"), "q") == parse("p_x")


class TestIsTotalDivergence:
    def test_divergence(self):
        report = is_total_divergence(parse("Dx(q*p) + Dy(u*q_t)"), ("u", "q", "p"))
        assert report.status is Status.VERIFIED
        assert report.notes == ["E_p vanishes", "E_q vanishes", "E_u vanishes"]

    def test_not_a_divergence(self):
        report = is_total_divergence(parse("q*p"), ("q", "p"), claim_id="product")
        assert report.status is Status.FAILED
        assert report.claim_id == "product"
        # dependents are checked in sorted order; the first nonzero one is the residual
        assert report.residual == parse("q")


class TestHorizontalForms:
    def test_differential(self):
        assert horizontal_differential(HorizontalForm2(parse("t"), parse("x"), parse("y"))).W == parse("3")
        assert horizontal_differential(HorizontalForm2(parse("x"), parse("y"), parse("t"))).W.is_zero()

    def test_exact_form_is_closed(self):
        # d_h of the 1-form f dt + g dx + h dy, written on the 2-form basis
        f, g, h = parse("u*x"), parse("u_t*y"), parse("s*u_x")
        omega = HorizontalForm2(
            A=total_derivative(h, "x") - total_derivative(g, "y"),
            B=total_derivative(f, "y") - total_derivative(h, "t"),
            C=total_derivative(g, "t") - total_derivative(f, "x"),
        )
        assert horizontal_differential(omega).W.is_zero()

    def test_arithmetic(self):
        a = HorizontalForm2(parse("u"), parse("x"), parse("0"))
        b = HorizontalForm2(parse("u"), parse("0"), parse("y"))
        assert (a - b).coefficients() == (parse("0"), parse("x"), parse("-y"))
        assert (a + b).map(lambda e: e * 0).is_zero()
        assert HorizontalForm2.BASIS == ("dx^dy", "dy^dt", "dt^dx")


class TestGreenFormula:
    @pytest.mark.parametrize("text", ["u*u_x", "u_t*u_xx + x*u_y^2", "u_xy/(1 + u_x)"])
    def test_remainder_is_divergence(self, text):
        remainder = green_remainder(parse(text), parse("q"), parse("p"))
        assert is_total_divergence(remainder, ("q", "p")).ok

    def test_zero_argument(self):
        assert green_remainder(parse("u*u_x"), parse("0"), parse("p")).is_zero()

    @pytest.mark.parametrize("text", ["u*u_x", "u_t*u_xx + x*u_y^2"])
    def test_bilinear(self, text):
        F = parse(text)
        q1, q2, p1, p2 = parse("q"), parse("x*q_y"), parse("p"), parse("t*p_x + p^2")
        c = parse("3 - 2*i")
        assert (green_remainder(F, q1 + c * q2, p1) - green_remainder(F, q1, p1) - c * green_remainder(F, q2, p1)).is_zero()
        assert (green_remainder(F, q1, p1 + c * p2) - green_remainder(F, q1, p1) - c * green_remainder(F, q1, p2)).is_zero()

    @pytest.mark.parametrize("variant", list(Variant))
    def test_equation(self, variant):
        remainder = green_remainder(builtin_F(variant), parse("q"), parse("p"))
        assert is_total_divergence(remainder, ("q", "p")).ok
