import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cornerq.expressions import DataExpression, ParseError

PI = math.pi

GOLDEN = [
    # (text, x, expected)
    ("2+3*4^2", 0.0, 50.0),
    ("2*3+4", 0.0, 10.0),
    ("2+3*4", 0.0, 14.0),
    ("(2+3)*4", 0.0, 20.0),
    ("2^3^2", 0.0, 512.0),              # right-associative power
    ("-2^2", 0.0, 4.0),                 # unary binds inside the power base
    ("-(2^2)", 0.0, -4.0),
    ("--3", 0.0, 3.0),
    ("10/4", 0.0, 2.5),
    ("10/2/5", 0.0, 1.0),               # left-associative division
    ("8-3-2", 0.0, 3.0),                # left-associative subtraction
    ("pi", 0.0, PI),
    ("pi/4", 0.0, PI / 4),
    ("2*pi", 0.0, 2 * PI),
    ("sin(0)", 0.0, 0.0),
    ("cos(0)", 0.0, 1.0),
    ("tan(pi/4)", 0.0, 1.0),
    ("exp(0)", 0.0, 1.0),
    ("exp(1)", 0.0, math.e),
    ("log(exp(2))", 0.0, 2.0),
    ("sqrt(9)", 0.0, 3.0),
    ("sqrt(2)^2", 0.0, 2.0),
    ("sin(phi)", 0.6, math.sin(0.6)),
    ("pi/4*cos(phi)", 0.8, PI / 4 * math.cos(0.8)),
    ("-pi/4", 0.0, -PI / 4),
    ("1e2", 0.0, 100.0),
    ("2.5e-1", 0.0, 0.25),
    ("1.5*phi^2 - phi/2 + 1", 2.0, 1.5 * 4 - 1.0 + 1.0),
    ("cos(phi)^2 + sin(phi)^2", 1.1, 1.0),
    ("2/(1+phi^2)", 3.0, 0.2),
]


@pytest.mark.parametrize("text,x,expected", GOLDEN)
def test_golden_values(text, x, expected):
    expr = DataExpression.parse(text, "phi")
    assert_allclose(expr(x), expected, rtol=1e-14, atol=1e-15)


REJECTS = [
    "2+",
    "(1+2",
    "1+2)",
    "foo(3)",
    "sin 3",
    "2..5",
    "phi phi",
    "r",            # wrong variable on the round face
    "*3",
    "",
    "sin()",
    "2 3",
]


@pytest.mark.parametrize("text", REJECTS)
def test_rejections(text):
    with pytest.raises(ParseError):
        DataExpression.parse(text, "phi")


def test_variable_is_face_specific():
    expr = DataExpression.parse("2*r^2", "r")
    assert_allclose(expr(0.5), 0.5)
    with pytest.raises(ParseError):
        DataExpression.parse("2*phi", "r")


def test_unicode_minus_accepted():
    expr = DataExpression.parse("−2", "phi")
    assert_allclose(expr(0.0), -2.0)


def test_parse_print_parse_idempotent():
    for text, _, _ in GOLDEN:
        expr = DataExpression.parse(text, "phi")
        printed = expr.to_string()
        reparsed = DataExpression.parse(printed, "phi")
        assert reparsed.to_string() == printed
        assert_allclose(expr(0.37), reparsed(0.37), rtol=1e-15, atol=1e-15)


def test_vectorized_evaluation():
    expr = DataExpression.parse("sin(phi)*phi", "phi")
    xs = np.linspace(0, 1.5, 7)
    assert_allclose(expr(xs), np.sin(xs) * xs, rtol=1e-15)


def test_deterministic_evaluation():
    expr = DataExpression.parse("exp(cos(phi))/(1+phi^2)", "phi")
    xs = np.linspace(0, 1.5, 11)
    assert np.array_equal(expr(xs), expr(xs))
