import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from gchs import jets
from gchs.expr import (
    Binary,
    Const,
    ExprError,
    NumericDomainError,
    Var,
    compile_floats,
    eval as feval,
    eval_jet,
    parse,
)


def test_parse_tree_shape():
    f = parse("q1^2 + p1^2", 2)
    assert f.root == Binary("add", Binary("pow", Var(0), Const(2.0)), Binary("pow", Var(1), Const(2.0)))


def test_unary_minus_and_precedence():
    assert feval(parse("2*x1 - -x2", 2), (1, 3)) == 5
    assert feval(parse("-x1^2", 1), (3,)) == -9
    assert feval(parse("2^3^2", 1), (0,)) == 512
    assert feval(parse("8/4/2", 1), (0,)) == 1
    assert feval(parse("1 - 2 - 3", 1), (0,)) == -4


def test_constants_and_aliases():
    assert feval(parse("pi + e", 1), (0,)) == pytest.approx(math.pi + math.e)
    f = parse("q2 * p1", 4)
    assert feval(f, (0, 3, 5, 0)) == 15
    g = parse("a*b", 2, names=("a", "b"))
    assert feval(g, (2, 3)) == 6


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("sin(x3)", "unknown identifier"),
        ("foo(x1)", "unknown function"),
        ("x1 +", "column"),
        ("(x1", "column"),
        ("sin(x1, x2)", "column"),
        ("x1 $ 2", "column"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(ExprError) as info:
        parse(text, 2)
    assert fragment in str(info.value)


def test_error_position_points_at_offender():
    with pytest.raises(ExprError) as info:
        parse("x1 + x9", 2)
    assert info.value.pos == 5


def test_eval_examples():
    assert feval(parse("0.5*(q1^2+p1^2)", 2), (1, 2)) == 2.5
    assert feval(parse("exp(0)", 3), (1, 2, 3)) == 1
    with pytest.raises(NumericDomainError):
        feval(parse("log(x1)", 1), (-1,))
    with pytest.raises(NumericDomainError):
        feval(parse("1/x1", 1), (0,))
    with pytest.raises(NumericDomainError):
        feval(parse("x1^0.5", 1), (-4,))


def test_eval_batch():
    f = parse("x1*x2", 2)
    out = feval(f, np.array([[1, 2], [3, 4]]))
    np.testing.assert_array_equal(out, [2, 12])


def test_jet_examples():
    j = eval_jet(parse("x1*x2", 2), (3, 4), 1)
    assert j.value == 12
    np.testing.assert_array_equal(j.first, [4, 3])

    j = eval_jet(parse("sin(x1)", 1), (0,), 2)
    assert j.value == 0
    assert j.first[0] == 1
    assert j.second[0, 0] == 0


def test_third_derivative_against_fd():
    f = parse("x1^3", 1)
    j = eval_jet(f, (2,), 3)
    assert j.third[0, 0, 0] == pytest.approx(6.0, abs=1e-12)
    h = 1e-3
    fd = (feval(f, (2 + 2 * h,)) - 2 * feval(f, (2 + h,)) + 2 * feval(f, (2 - h,)) - feval(f, (2 - 2 * h,))) / (
        2 * h**3
    )
    assert abs(j.third[0, 0, 0] - fd) <= 1e-5


def test_third_order_mixed():
    f = parse("sin(x1)*x2^2 + exp(x1*x2)", 2)
    x = np.array([0.3, -0.7])
    j = eval_jet(f, x, 3)
    hess = lambda y: eval_jet(f, y, 2).second  # noqa: E731
    fd = oracles.jacobian(hess, x, 1e-5)
    np.testing.assert_allclose(j.third, fd, atol=1e-6)


def test_jet_domain_error():
    with pytest.raises(NumericDomainError):
        eval_jet(parse("sqrt(x1)", 1), (0,), 1)


def test_constant_expression_jet():
    j = eval_jet(parse("2*pi", 2), (1, 1), 2)
    assert j.value == pytest.approx(2 * math.pi)
    assert not j.first.any() and not j.second.any()


def test_order_validation():
    with pytest.raises(ValueError):
        eval_jet(parse("x1", 1), (0,), 4)


def test_symbolic_derivative_matches_jet(rng):
    f = parse("x1^3*x2 - sin(x1*x2) + x2/(1 + x1^2) + x1^x2", 2)
    for x in rng.uniform(0.2, 1.5, size=(20, 2)):
        j = eval_jet(f, x, 1)
        for a in range(2):
            assert feval(f.derivative(a), x) == pytest.approx(j.first[a], rel=1e-12, abs=1e-12)


def test_compiled_floats_match_eval(rng):
    exprs = [parse(s, 2) for s in ("x1*x2 + 3", "sin(x1)^2", "exp(-x2)/(2 + x1)", "x1^2.5")]
    fn = compile_floats(exprs, 2)
    for x in rng.uniform(0.1, 2, size=(10, 2)):
        np.testing.assert_allclose(fn(list(x)), [feval(e, x) for e in exprs], rtol=1e-14)
    with pytest.raises(NumericDomainError):
        compile_floats([parse("log(x1)", 2)], 2)([-1.0, 0.0])


def test_jets_interoperate_with_numpy():
    x = jets.variable(np.array([1.0, 2.0]), 0, 1, 1)
    y = np.array([3.0, 4.0]) * x
    assert isinstance(y, jets.Jet)
    np.testing.assert_array_equal(y.first[:, 0], [3, 4])


# -- random expression generation ------------------------------------------------------


def _poly(draw, n, depth):
    if depth == 0 or draw(st.booleans()):
        if draw(st.booleans()):
            return f"x{draw(st.integers(1, n))}"
        return repr(draw(st.floats(-2, 2, allow_nan=False).map(lambda v: round(v, 3))))
    op = draw(st.sampled_from(["+", "-", "*"]))
    return f"({_poly(draw, n, depth - 1)} {op} {_poly(draw, n, depth - 1)})"


@st.composite
def polynomials(draw, n=3):
    return _poly(draw, n, 3)


@st.composite
def smooth_fields(draw, n=3):
    base = _poly(draw, n, 2)
    wrap = draw(st.sampled_from(["sin({})", "cos({})", "exp(0.3*{})", "tanh({})", "{}", "sqrt(2 + ({})^2)"]))
    return wrap.format(base)


points = st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3)


@settings(max_examples=60, deadline=None)
@given(polynomials(), points)
def test_gradients_match_finite_differences(text, x):
    f = parse(text, 3)
    j = eval_jet(f, x, 2)
    np.testing.assert_allclose(j.first, oracles.grad(f, x), rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(j.second, oracles.hessian(f, x), rtol=1e-4, atol=1e-5)


@settings(max_examples=60, deadline=None)
@given(smooth_fields(), points)
def test_hessian_symmetric(text, x):
    H = eval_jet(parse(text, 3), x, 2).second
    assert np.all(np.abs(H - H.T) <= 1e-12 * (1 + np.abs(H)))


@settings(max_examples=60, deadline=None)
@given(smooth_fields(), st.lists(points, min_size=5, max_size=5))
def test_print_parse_round_trip(text, xs):
    f = parse(text, 3)
    g = parse(str(f), 3)
    xs = np.array(xs)
    np.testing.assert_allclose(feval(g, xs), feval(f, xs), rtol=1e-12, atol=1e-300)
