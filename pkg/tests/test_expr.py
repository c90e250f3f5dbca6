import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from strmor.expr import (
    Const, EvalOverflowError, Exp, ExprError, Mul, Neg, Param, Pow, S,
    delay_factor, diff_expr, eval_expr, param, parse_expr, to_text,
)


def test_square_at_imaginary_point():
    assert eval_expr(S ** 2, 2j) == -4


def test_exp_at_zero():
    assert eval_expr(delay_factor(1.0), 0.0) == 1.0


def test_parametric_delay_product():
    e = param(0) * Exp(-1.0, S)
    assert eval_expr(e, math.log(2), [3.0]) == pytest.approx(1.5, rel=1e-15)


def test_arity_mismatch_raises():
    with pytest.raises(ExprError):
        eval_expr(param(1), 1.0, [2.0])


def test_exp_overflow_reported():
    with pytest.raises(EvalOverflowError):
        eval_expr(Exp(1.0, S), 1e6)


def test_fractional_power_rejects_negative_real_axis():
    e = Pow(S, -0.5)
    assert eval_expr(e, 4.0) == pytest.approx(0.5)
    with pytest.raises(ExprError):
        eval_expr(e, -1.0)
    # principal branch just off the axis is fine
    assert np.isfinite(eval_expr(e, -1.0 + 1e-9j))


def test_diff_power_rule():
    assert eval_expr(diff_expr(S ** 2, "s"), 3.0) == 6.0


def test_diff_delay_chain_rule():
    assert eval_expr(diff_expr(delay_factor(1.0), "s"), 0.0) == -1.0


def test_diff_parameter():
    e = param(0) * Exp(-1.0, S)
    d = diff_expr(e, "p0")
    assert eval_expr(d, 1.0, [5.0]) == pytest.approx(math.exp(-1.0), rel=1e-12)


def _fd(e, s, p, var, h):
    if var == "s":
        return (eval_expr(e, s + h, p) - eval_expr(e, s - h, p)) / (2 * h)
    j = int(var[1:])
    p_hi = list(p)
    p_lo = list(p)
    p_hi[j] += h
    p_lo[j] -= h
    return (eval_expr(e, s, p_hi) - eval_expr(e, s, p_lo)) / (2 * h)


@pytest.mark.parametrize("text", [
    "s^2", "exp(-0.7*s)", "p0*exp(-s)+s^3", "s^-1", "(s+p0)^2*exp(-0.1*s)",
    "s^0.5*p0+2.5", "-s*p0^2+exp(0.3*s)",
])
def test_derivatives_match_finite_differences(text):
    e = parse_expr(text)
    rng = np.random.default_rng(42)
    for _ in range(200):
        s = complex(rng.uniform(0.3, 2.5), rng.uniform(-1.0, 1.0))
        p = [rng.uniform(0.5, 2.0)]
        for var in ("s", "p0"):
            d = diff_expr(e, var)
            h = 1e-6 * (1 + abs(s))
            exact = eval_expr(d, s, p)
            approx = _fd(e, s, p, var, h)
            assert abs(exact - approx) <= 1e-5 * (1 + abs(exact))


@pytest.mark.parametrize("text", [
    "s", "p0", "1.5", "2j", "(1.25+0.5j)", "s^2+p1*s", "exp(-2*s)*p0",
    "-(s+1)^3", "1e-3*s^-2",
])
def test_parse_serialize_round_trip(text):
    e = parse_expr(text)
    back = parse_expr(to_text(e))
    rng = np.random.default_rng(0)
    for _ in range(100):
        s = complex(rng.uniform(0.2, 3.0), rng.uniform(-2.0, 2.0))
        p = rng.uniform(0.1, 2.0, size=2)
        assert eval_expr(e, s, p) == eval_expr(back, s, p)


def test_constant_round_trip_bit_identical():
    for value in (0.1, -1.0 / 3.0, 2.0 ** -40, 1.2345678901234567e-8):
        e = Const(value)
        back = parse_expr(to_text(e))
        assert eval_expr(back, 0.0) == value


@given(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False))
@settings(max_examples=50, deadline=None)
def test_float_constants_round_trip(value):
    back = parse_expr(to_text(Const(value)))
    assert eval_expr(back, 1.0) == complex(value)


def _expr_trees():
    leaves = st.one_of(
        st.floats(min_value=-3, max_value=3, allow_nan=False).map(Const),
        st.just(S),
        st.integers(min_value=0, max_value=2).map(Param),
    )

    def extend(children):
        return st.one_of(
            st.tuples(children, children).map(lambda ab: ab[0] + ab[1]),
            st.tuples(children, children).map(lambda ab: ab[0] * ab[1]),
            children.map(Neg),
            st.tuples(children, st.integers(min_value=0, max_value=3)).map(
                lambda p: Pow(p[0], float(p[1]))
            ),
            st.tuples(st.floats(min_value=-1, max_value=1, allow_nan=False),
                      children).map(lambda p: Exp(p[0], p[1])),
        )

    return st.recursive(leaves, extend, max_leaves=8)


@given(_expr_trees())
@settings(max_examples=80, deadline=None)
def test_grammar_closed_under_differentiation(tree):
    # the derivative of any tree is again a tree of the same grammar, and it
    # evaluates (round-tripping through the text form) wherever finite
    for var in ("s", "p0", "p2"):
        d = diff_expr(tree, var)
        try:
            value = eval_expr(d, 0.7 + 0.4j, [1.1, 0.3, 2.0])
        except EvalOverflowError:
            continue
        back = eval_expr(parse_expr(to_text(d)), 0.7 + 0.4j, [1.1, 0.3, 2.0])
        assert value == back


def test_parser_rejects_garbage():
    for bad in ("s +* 2", "exp()", "p12", "q0", "1..2", "s^(s)"):
        with pytest.raises(ExprError):
            parse_expr(bad)


def test_operator_sugar_builds_expected_tree():
    e = 2.0 * S ** 2 - param(0)
    assert eval_expr(e, 3.0, [1.0]) == 17.0
    assert isinstance(-S, Neg)
    assert isinstance(S * S, Mul)
