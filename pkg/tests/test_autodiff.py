import numpy as np
import pytest

from geam.autodiff import (
    add,
    concat,
    div,
    exp,
    log,
    log_softmax,
    matmul,
    minimum,
    mul,
    param,
    power_const,
    relu,
    reshape,
    sigmoid,
    softmax,
    softplus,
    sqrt0,
    straight_through,
    take,
    tensor,
    tmean,
    tsum,
)
from geam.errors import ShapeMismatch

from helpers import fd_gradient, max_rel_err

RNG = np.random.default_rng(123)
TOL = 1e-6


def check_gradient(build, x0: np.ndarray, tol: float = TOL) -> None:
    """Compare autodiff and central-difference gradients at x0."""
    leaf = param(x0.copy())
    out = build(leaf)
    out.backward()
    numeric = fd_gradient(lambda x: float(build(tensor(x)).data), x0.copy())
    assert max_rel_err(leaf.grad, numeric) < tol


def _rand(*shape):
    return RNG.normal(size=shape)


def test_add_broadcasting_gradients():
    b = tensor(_rand(3))
    for _ in range(20):
        check_gradient(lambda x: tsum(mul(add(x, b), add(x, b))), _rand(4, 3))


def test_mul_gradients():
    w = tensor(_rand(4, 3))
    for _ in range(20):
        check_gradient(lambda x: tsum(mul(x, w)), _rand(4, 3))


def test_matmul_gradients():
    b = tensor(_rand(5, 2))
    a = tensor(_rand(2, 3))
    for _ in range(20):
        check_gradient(lambda x: tsum(matmul(x, b)), _rand(3, 5))
        check_gradient(lambda x: tsum(matmul(a, x)), _rand(3, 4))


def test_unary_gradients():
    for _ in range(20):
        check_gradient(lambda x: tsum(sigmoid(x)), _rand(3, 3))
        check_gradient(lambda x: tsum(softplus(x)), _rand(3, 3))
        check_gradient(lambda x: tsum(exp(mul(x, 0.3))), _rand(3, 3))
        check_gradient(lambda x: tsum(log(add(mul(x, x), 1.0))), _rand(3, 3))
        check_gradient(lambda x: tsum(power_const(add(mul(x, x), 1.0), 1.5)),
                       _rand(3, 3))


def test_relu_gradient_away_from_kink():
    for _ in range(20):
        x0 = _rand(4, 4)
        x0[np.abs(x0) < 1e-3] = 0.5
        check_gradient(lambda x: tsum(relu(x)), x0)


def test_sqrt0_gradient_positive_side():
    x0 = np.abs(_rand(3, 3)) + 0.5
    check_gradient(lambda x: tsum(sqrt0(x)), x0)


def test_sqrt0_zero_region_has_zero_gradient():
    leaf = param(np.array([-1.0, 0.0, 4.0]))
    out = tsum(sqrt0(leaf))
    out.backward()
    assert leaf.grad[0] == 0.0
    assert leaf.grad[2] == pytest.approx(0.25)
    assert float(sqrt0(tensor(-3.0)).data) == 0.0


def test_softmax_rows_sum_to_one():
    x = tensor(_rand(5, 4))
    rows = softmax(x, axis=-1).data
    assert np.allclose(rows.sum(axis=-1), 1.0)
    assert np.all(rows > 0)


def test_softmax_gradient():
    w = tensor(_rand(3, 4))
    for _ in range(10):
        check_gradient(lambda x: tsum(mul(softmax(x, axis=-1), w)), _rand(3, 4))


def test_log_softmax_matches_log_of_softmax():
    x = _rand(2, 5)
    direct = log_softmax(tensor(x)).data
    composed = np.log(softmax(tensor(x)).data)
    assert np.allclose(direct, composed, atol=1e-12)
    w = tensor(_rand(2, 5))
    for _ in range(10):
        check_gradient(lambda t: tsum(mul(log_softmax(t), w)), _rand(2, 5))


def test_div_gradients():
    denom = np.abs(_rand(3, 3)) + 1.0
    check_gradient(lambda x: tsum(div(x, tensor(denom))), _rand(3, 3))
    check_gradient(lambda x: tsum(div(tensor(denom), add(mul(x, x), 1.0))),
                   _rand(3, 3))


def test_sum_mean_axis_gradients():
    check_gradient(lambda x: tsum(mul(tsum(x, axis=0), tsum(x, axis=0))),
                   _rand(4, 3))
    check_gradient(lambda x: tsum(mul(tmean(x, axis=1), 2.0)), _rand(4, 3))


def test_concat_take_reshape_gradients():
    w = tensor(_rand(6))
    check_gradient(
        lambda x: tsum(mul(concat([x, mul(x, 2.0)], axis=0), w)), _rand(3)
    )
    check_gradient(lambda x: mul(take(x, (1, 2)), 3.0), _rand(3, 4))
    check_gradient(
        lambda x: tsum(mul(reshape(x, (6,)), w)), _rand(2, 3)
    )


def test_minimum_gradient_routes_to_smaller():
    a = param(np.array(1.0))
    b = param(np.array(2.0))
    minimum(a, b).backward()
    assert float(a.grad) == 1.0
    assert b.grad is None or float(b.grad) == 0.0


def test_straight_through_passes_gradient():
    soft = param(np.array([0.2, 0.5, 0.3]))
    hard = np.array([0.0, 1.0, 0.0])
    out = straight_through(soft, hard)
    assert np.array_equal(out.data, hard)
    tsum(mul(out, np.array([1.0, 2.0, 3.0]))).backward()
    assert np.allclose(soft.grad, [1.0, 2.0, 3.0])


def test_backward_requires_scalar():
    with pytest.raises(ShapeMismatch):
        param(_rand(3)).backward()


def test_gradient_accumulates_across_uses():
    x = param(np.array(2.0))
    y = add(mul(x, x), mul(x, 3.0))  # x^2 + 3x, dy/dx = 2x + 3 = 7
    y.backward()
    assert float(x.grad) == pytest.approx(7.0)


def test_composed_expression():
    w1 = tensor(_rand(4, 5))
    w2 = tensor(_rand(5, 1))
    def network(x):
        h = relu(matmul(x, w1))
        return tsum(sigmoid(matmul(h, w2)))
    for _ in range(20):
        check_gradient(network, _rand(2, 4))
