import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relbohm.errors import ValidationError
from relbohm.expr import parse

leaves = st.sampled_from(["t", "x", "y", "z", "0.5", "2", "pi"])


def _combine(children):
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda a: f"({a[0]} {a[1]} {a[2]})")
    call = st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda a: f"{a[0]}({a[1]})")
    power = st.tuples(children, st.sampled_from([2, 3])).map(lambda a: f"({a[0]}) ** {a[1]}")
    neg = children.map(lambda a: f"-({a})")
    return binary | call | power | neg


expressions = st.recursive(leaves, _combine, max_leaves=8)
NAMESPACE = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "pi": np.pi}


def _reference(text, x):
    return eval(text, {"__builtins__": {}}, {**NAMESPACE, "t": x[0], "x": x[1], "y": x[2], "z": x[3]})


@given(expressions, st.lists(st.floats(-1.5, 1.5), min_size=4, max_size=4))
def test_value_matches_python_evaluation(text, point):
    x = np.array(point)
    assert parse(text)(x) == pytest.approx(_reference(text, x), rel=1e-12, abs=1e-12)


@given(expressions, st.lists(st.floats(-1.5, 1.5), min_size=4, max_size=4))
def test_gradient_matches_central_differences(text, point):
    x = np.array(point)
    e = parse(text)
    h = 1e-6
    fd = np.array([(_reference(text, x + h * np.eye(4)[m]) - _reference(text, x - h * np.eye(4)[m])) / (2 * h) for m in range(4)])
    assert np.allclose(e.gradient(x), fd, rtol=1e-5, atol=1e-5)


def test_broadcasts_over_leading_axes():
    e = parse("t + 0.15*sin(x)*cos(0.5*y) - 0.05*z")
    pts = np.random.default_rng(0).normal(size=(3, 5, 4))
    assert e(pts).shape == (3, 5)
    assert e.gradient(pts).shape == (3, 5, 4)
    assert np.allclose(e.gradient(pts)[..., 0], 1.0)


def test_division_and_exp():
    e = parse("exp(x) / (1 + t**2)")
    x = np.array([0.5, 0.3, 0.0, 0.0])
    assert e(x) == pytest.approx(np.exp(0.3) / 1.25)
    assert e.gradient(x)[0] == pytest.approx(-np.exp(0.3) * 2 * 0.5 / 1.25**2)


@pytest.mark.parametrize(
    "text",
    ["__import__('os')", "x.real", "q + 1", "x ** t", "sin(x, y)", "[x]", "x if t else y", "x +", "lambda: 1"],
)
def test_rejects_unsupported_input(text):
    with pytest.raises(ValidationError):
        parse(text)


def test_negative_constant_exponent():
    e = parse("x**-2")
    assert e([0.0, 2.0, 0, 0]) == pytest.approx(0.25)
    assert e.gradient([0.0, 2.0, 0, 0])[1] == pytest.approx(-0.25)
