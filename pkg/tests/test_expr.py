import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finslerdet.errors import ExpressionParseError
from finslerdet.expr import BinOp, Call, FieldExpression, Num, Var, evaluate, parse, to_source

VARS = ("x1", "x2", "x3")


def test_precedence_and_right_associative_power():
    assert parse("2^3^2", VARS) == parse("2^(3^2)", VARS)
    assert evaluate(parse("2^3^2", VARS), {}) == 512.0
    assert evaluate(parse("1 - 2 - 3", VARS), {}) == -4.0
    assert evaluate(parse("8 / 4 / 2", VARS), {}) == 1.0
    assert evaluate(parse("1 + 2*3^2", VARS), {}) == 19.0


def test_functions_and_variables():
    e = FieldExpression.parse("sin(x1)^2 + cos(x1)^2 + exp(0) * sqrt(x2)", VARS)
    assert e([0.7, 4.0, 0.0]) == pytest.approx(3.0)


def test_vectorized_evaluation():
    e = FieldExpression.parse("x1*x2 + 1", ("x1", "x2"))
    out = e([np.arange(3.0), np.full(3, 2.0)])
    assert out.tolist() == [1.0, 3.0, 5.0]


def test_number_forms():
    assert evaluate(parse("1.5e-3 + .5 + 2.", VARS), {}) == pytest.approx(2.5015)


@pytest.mark.parametrize("source,column", [
    ("x1 + y", 6),
    ("tan(x1)", 1),
    ("x4", 1),
    ("1 +", 4),
    ("(x1 + 2", 8),
    ("x1 2", 4),
    ("sin x1", 5),
    ("-x1", 1),
])
def test_errors_carry_position(source, column):
    with pytest.raises(ExpressionParseError) as info:
        parse(source, VARS, line=7)
    assert info.value.line == 7
    assert info.value.column == column


def test_unknown_identifier_rejected_at_parse_time():
    with pytest.raises(ExpressionParseError, match="unknown identifier"):
        FieldExpression.parse("x1 + x3", ("x1", "x2"))


def test_deterministic_evaluation():
    e = FieldExpression.parse("exp(sin(x1)) / (1 + x2^2)", VARS)
    a = [e([v, 2 * v, 0]) for v in np.linspace(-1, 1, 50)]
    b = [e([v, 2 * v, 0]) for v in np.linspace(-1, 1, 50)]
    assert a == b


numbers = st.one_of(st.integers(0, 1000).map(float),
                    st.floats(0, 1e6, allow_nan=False, allow_infinity=False))


def trees():
    leaves = st.one_of(numbers.map(Num), st.sampled_from(VARS).map(Var))

    def extend(children):
        return st.one_of(
            st.builds(BinOp, st.sampled_from("+-*/^"), children, children),
            st.builds(Call, st.sampled_from(["sin", "cos", "exp", "sqrt"]), children),
        )

    return st.recursive(leaves, extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees())
def test_pretty_print_round_trip(tree):
    text = to_source(tree)
    assert parse(text, VARS) == tree
    assert to_source(parse(text, VARS)) == text


@settings(max_examples=100, deadline=None)
@given(trees(), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_round_trip_preserves_value(tree, xs):
    env = dict(zip(VARS, xs))
    with np.errstate(all="ignore"):
        a = evaluate(tree, env)
        b = evaluate(parse(to_source(tree), VARS), env)
    assert (math.isnan(a) and math.isnan(b)) or a == b
