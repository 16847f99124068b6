import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from focsolve.expr import (
    Bin,
    Call,
    ExprDomainError,
    ExprSyntaxError,
    Neg,
    Num,
    UnknownIdentifierError,
    Var,
    compile_expr,
    diff_expr,
    eval_expr,
    parse_expr,
)


class TestParse:
    def test_objective_integrand(self):
        e = parse_expr("(u^2 - 4*x)^2")
        assert e == Bin("^", Bin("-", Bin("^", Var("u"), Num(2.0)), Bin("*", Num(4.0), Var("x"))), Num(2.0))

    def test_dynamics(self):
        e = parse_expr("u + 2/gamma(2.5) * t^1.5")
        expected = Bin(
            "+",
            Var("u"),
            Bin("*", Bin("/", Num(2.0), Call("gamma", Num(2.5))), Bin("^", Var("t"), Num(1.5))),
        )
        assert e == expected

    def test_power_right_associative(self):
        assert eval_expr(parse_expr("2^3^2")) == 512.0

    def test_unary_minus_below_power(self):
        assert eval_expr(parse_expr("-2^2")) == -4.0
        assert eval_expr(parse_expr("2^-1")) == 0.5

    def test_precedence(self):
        assert eval_expr(parse_expr("1 + 2*3 - 4/2")) == 5.0

    def test_whitespace_insensitive(self):
        assert parse_expr("  u+ 2 * x ") == parse_expr("u+2*x")

    def test_double_star(self):
        assert parse_expr("x**2") == parse_expr("x^2")

    def test_scientific_literal(self):
        assert eval_expr(parse_expr("1.5e-3*2")) == pytest.approx(3e-3)

    def test_trailing_operator_position(self):
        with pytest.raises(ExprSyntaxError) as info:
            parse_expr("x +")
        assert info.value.position == 3

    @pytest.mark.parametrize("text", ["y + 1", "foo(x)", "sinh(x)"])
    def test_unknown_identifier(self, text):
        with pytest.raises(UnknownIdentifierError):
            parse_expr(text)

    @pytest.mark.parametrize("text", ["", "(x", "x)", "2 3", "sin x", "x $ 2"])
    def test_malformed(self, text):
        with pytest.raises(ExprSyntaxError):
            parse_expr(text)


class TestEval:
    def test_zero_on_optimal_pair(self):
        assert eval_expr(parse_expr("(u^2 - 4*x)^2"), t=0.3, x=1.0, u=2.0) == 0.0

    def test_gamma(self):
        assert eval_expr(parse_expr("gamma(2.5)")) == pytest.approx(1.3293403881791355, rel=1e-13)

    @pytest.mark.parametrize("text", ["x/0", "ln(-1)", "sqrt(x - 2)", "ln(0)", "gamma(0)"])
    def test_domain_errors(self, text):
        with pytest.raises(ExprDomainError):
            eval_expr(parse_expr(text), x=1.0)

    def test_domain_error_names_subexpression(self):
        with pytest.raises(ExprDomainError) as info:
            eval_expr(parse_expr("u + ln(x)"), x=-1.0)
        assert "ln(x)" in str(info.value)

    def test_overflow_is_domain_error(self):
        with pytest.raises(ExprDomainError):
            eval_expr(parse_expr("exp(x)"), x=1000.0)


class TestDiff:
    def test_chain_rule_u(self):
        d = diff_expr(parse_expr("(u^2 - 4*x)^2"), "u")
        for x, u in [(0.3, 1.2), (1.0, -0.5)]:
            assert eval_expr(d, x=x, u=u) == pytest.approx(2 * (u * u - 4 * x) * 2 * u, rel=1e-14)

    def test_chain_rule_x(self):
        d = diff_expr(parse_expr("(u^2 - 4*x)^2"), "x")
        assert eval_expr(d, x=0.3, u=1.2) == pytest.approx(-8 * (1.44 - 1.2), rel=1e-14)

    def test_no_dependence(self):
        d = diff_expr(parse_expr("u + 2/gamma(2.5)*t^1.5"), "x")
        assert d == Num(0.0)

    def test_abs_subgradient_at_zero(self):
        assert eval_expr(diff_expr(parse_expr("abs(x)"), "x"), x=0.0) == 0.0
        assert eval_expr(diff_expr(parse_expr("abs(x)"), "x"), x=-2.0) == -1.0

    def test_rejects_bad_variable(self):
        with pytest.raises(ValueError):
            diff_expr(parse_expr("x"), "q")

    @pytest.mark.parametrize(
        "text",
        [
            "sin(x*u) + cos(t)*x^3",
            "exp(-x^2)*u",
            "ln(1 + x^2) - sqrt(2 + u^2)",
            "x^u",
            "(x + 2)^(-1.5) / (1 + u^2)",
            "abs(x - 0.3) * u",
        ],
    )
    def test_corpus_against_finite_differences(self, text, rng):
        e = parse_expr(text)
        for var in ("x", "u"):
            d = diff_expr(e, var)
            for _ in range(100):
                t, x, u = rng.uniform(0.2, 1.5, 3)
                env = {"t": t, "x": x, "u": u}
                h = 1e-6 * max(1.0, abs(env[var]))
                lo, hi = dict(env), dict(env)
                lo[var] -= h
                hi[var] += h
                fd = (eval_expr(e, **hi) - eval_expr(e, **lo)) / (2 * h)
                got = eval_expr(d, **env)
                assert abs(got - fd) <= 1e-6 * max(1.0, abs(fd))


class TestCompile:
    def test_vector_and_scalar_agree(self, rng):
        e = parse_expr("(u^2 - 4*x)^2 + sin(t)")
        f = compile_expr(e)
        t, x, u = rng.uniform(-1, 1, (3, 50))
        vec = f(t, x, u)
        assert vec.shape == (50,)
        for k in range(50):
            assert f.scalar(t[k], x[k], u[k]) == pytest.approx(vec[k], rel=1e-15)
            assert eval_expr(e, t[k], x[k], u[k]) == pytest.approx(vec[k], rel=1e-14)

    def test_constant_broadcasts(self):
        f = compile_expr(parse_expr("2"))
        assert f(np.zeros(4), 0.0, 0.0).shape == (4,)
        assert f(0.0, 0.0, 0.0) == 2.0

    @pytest.mark.parametrize("text", ["x/0", "ln(x - 2)", "sqrt(-x)"])
    def test_domain_errors(self, text):
        f = compile_expr(parse_expr(text))
        with pytest.raises(ExprDomainError):
            f(np.array([1.0, 2.0]), np.array([1.0, 1.0]), 0.0)
        with pytest.raises(ExprDomainError):
            f(0.0, 1.0, 0.0)


# -- generated expressions ---------------------------------------------------

leaves = st.one_of(
    st.sampled_from([Var("t"), Var("x"), Var("u")]),
    st.floats(-5, 5, allow_nan=False).map(lambda v: Num(round(v, 3))),
)


def _extend(children):
    return st.one_of(
        st.builds(Bin, st.sampled_from(["+", "-", "*"]), children, children),
        st.builds(Neg, children),
        st.builds(Call, st.sampled_from(["sin", "cos"]), children),
        st.builds(lambda e: Bin("^", e, Num(2.0)), children),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)
points = st.tuples(*(st.floats(-2, 2) for _ in range(3)))


@given(trees, points)
@settings(max_examples=200)
def test_print_parse_round_trip(e, pt):
    again = parse_expr(str(e))
    a, b = eval_expr(e, *pt), eval_expr(again, *pt)
    assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


@given(trees, points)
@settings(max_examples=100)
def test_generated_derivatives(e, pt):
    t, x, u = pt
    d = diff_expr(e, "x")
    h = 1e-6 * max(1.0, abs(x))
    fd = (eval_expr(e, t, x + h, u) - eval_expr(e, t, x - h, u)) / (2 * h)
    got = eval_expr(d, t, x, u)
    scale = max(1.0, abs(fd), abs(eval_expr(e, t, x, u)))
    assume(math.isfinite(scale) and scale < 1e6)
    assert abs(got - fd) <= 1e-5 * scale
