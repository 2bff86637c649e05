import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbverify.exprlang import (
    Add,
    Const,
    DomainError,
    Func,
    Mul,
    ParseError,
    Pow,
    UndeclaredIdentifierError,
    Var,
    differentiate,
    evaluate,
    parse,
)
from gbverify.suites import random_expr


def ev(src, coords=("x", "y"), **point):
    return evaluate(parse(src, coords), point)


def test_parse_and_eval_examples():
    assert ev("2*x + sin(y)^2", x=1.0, y=0.0) == 2.0
    assert ev("cos(theta)", ("theta", "phi"), theta=0.0, phi=1.0) == 1.0
    assert ev("x^3", x=2.0) == 8.0
    assert ev("sin(theta)*cos(phi)", ("theta", "phi"), theta=math.pi / 2, phi=0.0) == pytest.approx(1.0, abs=1e-15)


def test_syntax_error_offset():
    with pytest.raises(ParseError) as info:
        parse("x + * y", ["x", "y"])
    assert info.value.offset == 4


@pytest.mark.parametrize("src", ["", "   ", "(x", "x)", "sin x", "x ^ y", "x ^ 1.5", "2 3", "x $ y"])
def test_malformed(src):
    with pytest.raises(ParseError):
        parse(src, ["x", "y"])


def test_undeclared_identifier_named():
    with pytest.raises(UndeclaredIdentifierError) as info:
        parse("x + zeta", ["x"])
    assert info.value.name == "zeta"
    assert info.value.offset == 4


def test_precedence_and_associativity():
    assert ev("2+3*4") == 14
    assert ev("(2+3)*4") == 20
    assert ev("8/4/2") == 1
    assert ev("7-2-1") == 4
    assert ev("-2^2") == -4
    assert ev("2*-x", x=3.0) == -6
    assert ev("-x^2+1", x=3.0) == -8


def test_grammar_structure():
    e = parse("a + b*c^2", ["a", "b", "c"])
    assert e == Add(Var("a"), Mul(Var("b"), Pow(Var("c"), 2)))


def test_parser_determinism():
    assert parse("sin(x)*y - 3/x", ["x", "y"]) == parse("sin(x)*y - 3/x", ["x", "y"])


def test_pi_constant_and_shadowing():
    assert ev("pi") == math.pi
    assert ev("pi", ("pi",), pi=2.0) == 2.0


@pytest.mark.parametrize("src,point", [("sqrt(x)", {"x": -1.0}), ("log(x)", {"x": 0.0}), ("1/x", {"x": 0.0}), ("x^-1", {"x": 0.0})])
def test_domain_errors(src, point):
    with pytest.raises((DomainError, ParseError)):
        evaluate(parse(src, ["x"]), point)


def test_domain_error_on_arrays():
    with pytest.raises(DomainError):
        evaluate(parse("log(x)", ["x"]), x=np.array([1.0, 2.0, -1.0]))


def test_vectorized_eval():
    out = evaluate(parse("x*y + 1", ["x", "y"]), x=np.arange(3.0), y=2.0)
    np.testing.assert_array_equal(out, [1.0, 3.0, 5.0])


def test_differentiate_examples():
    d = differentiate("x^2 + y", "x", ["x", "y"])
    xs = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(evaluate(d, x=xs, y=0.0), 2 * xs, rtol=0, atol=1e-14)
    d = differentiate("cos(theta)", "theta", ["theta"])
    assert evaluate(d, theta=math.pi / 2) == pytest.approx(-1.0, abs=1e-15)


def test_differentiate_sin_squared_against_finite_differences():
    src = "sin(y)^2"
    f = lambda y: evaluate(parse(src, ["y"]), y=y)  # noqa: E731
    h = 1e-5
    y0 = math.pi / 4
    fd = (f(y0 + h) - f(y0 - h)) / (2 * h)
    assert fd == pytest.approx(1.0, abs=1e-9)
    exact = evaluate(differentiate(src, "y", ["y"]), y=y0)
    assert exact == pytest.approx(fd, abs=1e-6)
    assert exact == pytest.approx(1.0, abs=1e-12)


def test_differentiate_undeclared():
    with pytest.raises(UndeclaredIdentifierError):
        differentiate("x", "q", ["x"])


@pytest.mark.parametrize("func", ["sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh"])
def test_function_derivatives(func):
    e = parse(f"{func}(x*y + 1)", ["x", "y"])
    for c in ("x", "y"):
        d = differentiate(e, c)
        x0, y0 = 0.3, 0.4
        h = 1e-5
        up = {"x": x0, "y": y0}
        dn = dict(up)
        up[c] += h
        dn[c] -= h
        fd = (evaluate(e, up) - evaluate(e, dn)) / (2 * h)
        assert evaluate(d, x=x0, y=y0) == pytest.approx(fd, abs=1e-6)


CATALOG_SOURCES = [
    ("cos(theta)", ("theta", "phi")),
    ("cos(theta) - 1", ("theta", "phi")),
    ("-sin(u)", ("u", "v")),
    ("1 - sin(u)", ("u", "v")),
    ("0.5 * (1 - cos(theta))", ("theta", "phi")),
    ("-0.5 * (1 + cos(theta))", ("theta", "phi")),
    ("cos(-phi)", ("theta", "phi")),
    ("-sin(-phi)", ("theta", "phi")),
    ("3*phi + sin(theta)", ("theta", "phi")),
    ("2*x + sin(y)^2", ("x", "y")),
]


@pytest.mark.parametrize("src,coords", CATALOG_SOURCES)
def test_derivative_round_trip_on_catalog_expressions(src, coords):
    rng = np.random.default_rng(7)
    e = parse(src, coords)
    pts = rng.uniform(0.1, 3.0, size=(100, len(coords)))
    h = 1e-5
    for k, c in enumerate(coords):
        d = differentiate(e, c)
        env = {n: pts[:, i] for i, n in enumerate(coords)}
        up, dn = dict(env), dict(env)
        step = h * np.maximum(1.0, np.abs(pts[:, k]))
        up[c] = pts[:, k] + step
        dn[c] = pts[:, k] - step
        fd = (evaluate(e, up) - evaluate(e, dn)) / (2 * step)
        np.testing.assert_allclose(np.broadcast_to(evaluate(d, env), fd.shape), fd, rtol=0, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_random_expression_derivatives_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    coords = ("x", "y", "z")
    e = random_expr(coords, rng)
    p = {c: float(v) for c, v in zip(coords, rng.uniform(0.2, 1.2, 3))}
    for c in coords:
        h = 1e-5
        up, dn = dict(p), dict(p)
        up[c] += h
        dn[c] -= h
        fd = (evaluate(e, up) - evaluate(e, dn)) / (2 * h)
        assert abs(evaluate(e.diff(c), p) - fd) < 1e-6 * max(1.0, abs(fd))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_str_round_trips_through_parser(seed):
    rng = np.random.default_rng(seed)
    coords = ("x", "y", "z")
    e = random_expr(coords, rng)
    again = parse(str(e), coords)
    p = {c: 0.5 for c in coords}
    assert evaluate(again, p) == pytest.approx(evaluate(e, p), rel=1e-12, abs=1e-12)


def test_expressions_are_hashable_values():
    a = parse("x*y", ["x", "y"])
    b = parse("x*y", ["x", "y"])
    assert hash(a) == hash(b) and {a: 1}[b] == 1
    assert isinstance(Func("sin", Var("x")), Func)


def test_negative_constant_prints_unambiguously():
    e = Pow(Const(-1.5), 2)
    assert evaluate(parse(str(e), [])) == 2.25
