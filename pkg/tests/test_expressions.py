"""Arithmetic expression mini-language for spec fields."""

import numpy as np
import pytest

from obliquehj.expressions import ExpressionError, parse_expression


def ev(text, *coords):
    return float(parse_expression(text)(np.array([coords], dtype=float))[0])


def test_basic_values():
    assert ev("2 + 3 * 4", 0.0) == 14.0
    assert ev("(2 + 3) * 4", 0.0) == 20.0
    assert ev("7 / 2", 0.0) == 3.5
    assert ev("x - y", 1.25, 0.25, ) == 1.0
    assert ev("pi", 0.0) == pytest.approx(np.pi)
    assert ev("e", 0.0) == pytest.approx(np.e)


def test_power_is_right_associative():
    assert ev("2 ^ 3 ^ 2", 0.0) == 512.0          # 2^(3^2), not (2^3)^2
    assert ev("x ^ 2", 3.0) == 9.0


def test_unary_minus_precedence():
    assert ev("-2 ^ 2", 0.0) == -4.0              # -(2^2), as in Python
    assert ev("(-2) ^ 2", 0.0) == 4.0
    assert ev("3 - -2", 0.0) == 5.0
    assert ev("-x", 1.5) == -1.5


def test_functions():
    assert ev("sin(pi / 2)", 0.0) == pytest.approx(1.0)
    assert ev("cos(0)", 0.0) == pytest.approx(1.0)
    assert ev("exp(1)", 0.0) == pytest.approx(np.e)
    assert ev("abs(-3.5)", 0.0) == 3.5
    assert ev("sin(x) ^ 2 + cos(x) ^ 2", 0.7) == pytest.approx(1.0)


def test_vectorized_over_points():
    expr = parse_expression("x ^ 2 + y ^ 2")
    pts = np.array([[1.0, 2.0], [0.5, -0.5], [0.0, 0.0]])
    np.testing.assert_allclose(expr(pts), [5.0, 0.5, 0.0])


def test_errors_carry_position():
    with pytest.raises(ExpressionError, match="position 3"):
        parse_expression("x +")
    with pytest.raises(ExpressionError, match="unexpected token"):
        parse_expression("2 *** 3")
    with pytest.raises(ExpressionError, match="unknown name 'z'"):
        parse_expression("z + 1")
    with pytest.raises(ExpressionError, match="end of expression"):
        parse_expression("sin(x")


def test_y_rejected_on_one_dimensional_domain():
    expr = parse_expression("y + 1")
    with pytest.raises(ExpressionError, match="1-D"):
        expr(np.array([[0.5]]))
    # x works in 1-D
    assert float(parse_expression("x * 2")(np.array([[0.5]]))[0]) == 1.0
