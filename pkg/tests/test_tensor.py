import math

import numpy as np
import pytest

from uaafusion import tensor as T
from uaafusion.errors import ContractError, DomainError, ShapeError
from uaafusion.tensor import Tensor

from conftest import finite_difference, rel_err


def conv2d_loop_oracle(x, w, b, pad):
    """Direct six-nested-loop cross-correlation with zero padding."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, cout, h, wd))
    for nn in range(n):
        for oc in range(cout):
            for i in range(h):
                for j in range(wd):
                    acc = 0.0
                    for ic in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += x if False else xp[nn, ic, i + u, j + v] * w[oc, ic, u, v]
                    out[nn, oc, i, j] = acc + b[oc]
    return out


class TestConv2d:
    def test_dirac_identity(self, rng):
        x = Tensor(rng.uniform(-1, 1, (1, 1, 3, 3)))
        k = np.zeros((1, 1, 3, 3))
        k[0, 0, 1, 1] = 1.0
        out = T.conv2d(x, Tensor(k), Tensor(np.zeros(1)))
        assert np.array_equal(out.data, x.data)

    def test_zero_input_gives_bias(self, rng):
        x = Tensor(np.zeros((1, 2, 4, 4)))
        w = Tensor(rng.uniform(-1, 1, (3, 2, 3, 3)))
        beta = np.array([0.3, -1.2, 4.0])
        out = T.conv2d(x, w, Tensor(beta))
        for c in range(3):
            assert np.allclose(out.data[0, c], beta[c], atol=0)

    def test_matches_loop_oracle(self, rng):
        x = rng.uniform(-2, 2, (1, 2, 4, 4))
        w = rng.uniform(-2, 2, (3, 2, 3, 3))
        b = rng.uniform(-1, 1, 3)
        out = T.conv2d(Tensor(x), Tensor(w), Tensor(b))
        expected = conv2d_loop_oracle(x, w, b, pad=1)
        assert np.max(np.abs(out.data - expected)) <= 1e-12

    def test_channel_mismatch_raises(self, rng):
        x = Tensor(np.zeros((1, 2, 4, 4)))
        w = Tensor(np.zeros((3, 5, 3, 3)))
        with pytest.raises(ShapeError):
            T.conv2d(x, w, Tensor(np.zeros(3)))


class TestElementwise:
    def test_mul_by_one(self, rng):
        x = Tensor(rng.uniform(-2, 2, (2, 3)))
        assert np.array_equal(T.mul(x, 1.0).data, x.data)

    def test_max_tie_gradient_goes_to_first(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        b = Tensor(np.ones((2, 2)), requires_grad=True)
        T.backward(T.sum_(T.maximum(a, b)))
        assert np.array_equal(a.grad, np.ones((2, 2)))
        assert np.array_equal(b.grad, np.zeros((2, 2)))

    def test_random_vs_scalar_loop(self, rng):
        a = rng.uniform(-2, 2, (3, 4))
        scalar = 1.7
        for kind, ref in [("add", lambda x: x + scalar), ("sub", lambda x: x - scalar),
                          ("mul", lambda x: x * scalar), ("div", lambda x: x / scalar)]:
            got = getattr(T, kind if kind != "div" else "div")(Tensor(a), scalar).data
            expected = np.array([[ref(v) for v in row] for row in a])
            assert np.max(np.abs(got - expected)) <= 1e-12, kind

    def test_div_by_zero_raises(self):
        with pytest.raises(DomainError):
            T.div(Tensor(np.ones(3)), Tensor(np.array([1.0, 0.0, 2.0])))

    def test_sqrt_of_negative_raises(self):
        with pytest.raises(DomainError):
            T.sqrt(Tensor(np.array([-1.0])))

    def test_incompatible_broadcast_raises(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))

    def test_channel_broadcast(self, rng):
        a = rng.uniform(-1, 1, (1, 1, 4, 4))
        b = rng.uniform(-1, 1, (1, 3, 4, 4))
        assert np.array_equal(T.mul(Tensor(a), Tensor(b)).data, a * b)


class TestActivations:
    def test_sigmoid_zero(self):
        assert T.sigmoid(Tensor(np.zeros(1))).data[0] == 0.5

    def test_relu_negative_value_and_gradient(self):
        x = Tensor(np.array([-3.0]), requires_grad=True)
        y = T.relu(x)
        assert y.data[0] == 0.0
        T.backward(T.sum_(y))
        assert x.grad[0] == 0.0

    def test_tanh_vs_math_library(self, rng):
        x = rng.uniform(-2, 2, (5, 5))
        got = T.tanh(Tensor(x)).data
        expected = np.array([[math.tanh(v) for v in row] for row in x])
        assert np.max(np.abs(got - expected)) <= 1e-12


class TestReduce:
    def test_sum_of_ones(self):
        assert T.sum_(Tensor(np.ones((2, 3)))).data == 6.0

    def test_mean_of_constant(self):
        assert T.mean(Tensor(np.full((3, 4), 2.5))).data == 2.5

    def test_random_vs_sequential_accumulation(self, rng):
        x = rng.uniform(-2, 2, (4, 5))
        acc = 0.0
        for v in x.ravel():
            acc += v
        assert abs(T.sum_(Tensor(x)).data - acc) <= 1e-12

    def test_empty_reduction_raises(self):
        with pytest.raises(DomainError):
            T.sum_(Tensor(np.zeros((0, 3))))


class TestConcat:
    def test_single_identity(self, rng):
        x = Tensor(rng.uniform(-1, 1, (1, 2, 3, 3)))
        assert np.array_equal(T.concat([x], axis=1).data, x.data)

    def test_shape_arithmetic(self):
        a = Tensor(np.zeros((1, 2, 4, 4)))
        b = Tensor(np.zeros((1, 3, 4, 4)))
        assert T.concat([a, b], axis=1).shape == (1, 5, 4, 4)

    def test_mismatch_raises(self):
        with pytest.raises(ShapeError):
            T.concat([Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 2, 5, 4)))])

    def test_roundtrip_bitwise(self, rng):
        a = rng.uniform(-1, 1, (1, 2, 4, 4))
        b = rng.uniform(-1, 1, (1, 3, 4, 4))
        cat = T.concat([Tensor(a), Tensor(b)], axis=1)
        back_a = T.slice_axis(cat, 0, 2, axis=1)
        back_b = T.slice_axis(cat, 2, 5, axis=1)
        assert np.array_equal(back_a.data, a)
        assert np.array_equal(back_b.data, b)


class TestSoftmax:
    def test_uniform_logits(self):
        p = T.softmax(Tensor(np.zeros((1, 4, 2, 2))))
        assert np.array_equal(p.data, np.full((1, 4, 2, 2), 0.25))

    def test_shift_property_no_overflow(self):
        logits = np.zeros((1, 2, 1, 1))
        logits[0, 0] = 1000.0
        p = T.softmax(Tensor(logits))
        assert p.data[0, 0, 0, 0] == 1.0
        assert p.data[0, 1, 0, 0] == 0.0

    def test_channel_sums(self, rng):
        p = T.softmax(Tensor(rng.uniform(-5, 5, (2, 4, 3, 3))))
        sums = p.data.sum(axis=1)
        assert np.all(np.abs(sums - 1.0) <= 1e-12)

    def test_random_vs_direct_exp_oracle(self, rng):
        logits = rng.uniform(-2, 2, (1, 3, 4, 4))
        p = T.softmax(Tensor(logits)).data
        e = np.exp(logits)
        assert np.max(np.abs(p - e / e.sum(axis=1, keepdims=True))) <= 1e-12


class TestSobel:
    def test_constant_image_zero_everywhere(self):
        gx, gy = T.sobel(Tensor(np.full((1, 1, 5, 5), 0.7)))
        assert np.max(np.abs(gx.data)) <= 1e-12
        assert np.max(np.abs(gy.data)) <= 1e-12

    def test_horizontal_ramp(self):
        img = np.tile(np.arange(6, dtype=np.float64), (6, 1))[None, None]
        gx, gy = T.sobel(Tensor(img))
        assert np.all(gx.data[0, 0, 1:-1, 1:-1] == 8.0)
        assert np.all(gy.data[0, 0, 1:-1, 1:-1] == 0.0)

    def test_random_vs_loop_oracle(self, rng):
        x = rng.uniform(-1, 1, (1, 1, 6, 6))
        gx, gy = T.sobel(Tensor(x))
        kx = np.array([[-1.0, 0, 1], [-2, 0, 2], [-1, 0, 1]])
        xp = np.pad(x[0, 0], 1, mode="edge")
        expected = np.zeros((6, 6))
        expected_y = np.zeros((6, 6))
        for i in range(6):
            for j in range(6):
                for u in range(3):
                    for v in range(3):
                        expected[i, j] += kx[u, v] * xp[i + u, j + v]
                        expected_y[i, j] += kx.T[u, v] * xp[i + u, j + v]
        assert np.max(np.abs(gx.data[0, 0] - expected)) <= 1e-12
        assert np.max(np.abs(gy.data[0, 0] - expected_y)) <= 1e-12


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        x = Tensor(rng.uniform(-1, 1, (3, 3)), requires_grad=True)
        T.backward(T.sum_(x))
        assert np.array_equal(x.grad, np.ones((3, 3)))

    def test_square_sum_gradient(self, rng):
        x = Tensor(rng.uniform(-1, 1, (3, 3)), requires_grad=True)
        T.backward(T.sum_(T.mul(x, x)))
        assert np.max(np.abs(x.grad - 2 * x.data)) <= 1e-12

    def test_non_scalar_backward_raises(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(ContractError):
            T.backward(T.mul(x, 2.0))

    def test_double_backward_raises(self):
        x = Tensor(np.ones(2), requires_grad=True)
        loss = T.sum_(x)
        T.backward(loss)
        with pytest.raises(ContractError):
            T.backward(loss)

    def test_backward_outside_graph_raises(self):
        with pytest.raises(ContractError):
            T.backward(Tensor(np.zeros(())))

    def test_gradient_sums_over_paths(self, rng):
        x = Tensor(rng.uniform(0.5, 1.5, (2, 2)), requires_grad=True)
        y = T.add(T.mul(x, x), T.mul(x, 3.0))
        T.backward(T.sum_(y))
        assert np.max(np.abs(x.grad - (2 * x.data + 3.0))) <= 1e-12


def _fd_check(build, x0, tol=1e-6):
    x = Tensor(x0.copy(), requires_grad=True)
    T.backward(build(x))
    fd = finite_difference(lambda a: float(build(Tensor(a)).data), x0.copy())
    assert np.max(rel_err(x.grad, fd)) <= tol


COMPOSITES = {
    "add": lambda x: T.sum_(T.add(x, 0.7)),
    "sub": lambda x: T.sum_(T.sub(1.3, x)),
    "mul": lambda x: T.sum_(T.mul(x, x)),
    "div": lambda x: T.sum_(T.div(x, 1.7)),
    "div_denominator": lambda x: T.sum_(T.div(2.0, T.add(T.square(x), 1.0))),
    "max": lambda x: T.sum_(T.maximum(x, 0.123)),
    "abs": lambda x: T.sum_(T.absolute(T.add(x, 0.011))),
    "square": lambda x: T.sum_(T.square(x)),
    "sqrt": lambda x: T.sum_(T.sqrt(T.add(T.square(x), 0.5))),
    "relu": lambda x: T.sum_(T.relu(T.add(x, 0.013))),
    "sigmoid": lambda x: T.sum_(T.sigmoid(x)),
    "tanh": lambda x: T.sum_(T.tanh(x)),
    "mean": lambda x: T.mean(T.square(x)),
    "sum_axis": lambda x: T.sum_(T.square(T.sum_(x, axes=0, keepdims=True))),
}


@pytest.mark.parametrize("name", sorted(COMPOSITES))
def test_autodiff_matches_finite_differences(name, rng):
    _fd_check(COMPOSITES[name], rng.uniform(-2, 2, (3, 3)))


def test_conv2d_autodiff_matches_finite_differences(rng):
    x0 = rng.uniform(-2, 2, (1, 2, 3, 3))
    w0 = rng.uniform(-1, 1, (2, 2, 3, 3))
    b0 = rng.uniform(-1, 1, 2)

    x = Tensor(x0.copy(), requires_grad=True)
    w = Tensor(w0.copy(), requires_grad=True)
    b = Tensor(b0.copy(), requires_grad=True)
    T.backward(T.sum_(T.square(T.conv2d(x, w, b))))

    def loss_for(xa, wa, ba):
        return float(T.sum_(T.square(T.conv2d(Tensor(xa), Tensor(wa), Tensor(ba)))).data)

    for t, arr, fn in ((x, x0, lambda a: loss_for(a, w0, b0)),
                       (w, w0, lambda a: loss_for(x0, a, b0)),
                       (b, b0, lambda a: loss_for(x0, w0, a))):
        fd = finite_difference(fn, arr.copy())
        assert np.max(rel_err(t.grad, fd)) <= 1e-6


def test_softmax_logsumexp_concat_autodiff(rng):
    x0 = rng.uniform(-2, 2, (1, 2, 2, 2))

    def build(x):
        both = T.concat([x, T.mul(x, 0.5)], axis=1)
        return T.sum_(T.square(T.softmax(both))) + T.sum_(T.logsumexp(both))

    _fd_check(build, x0)


def test_sobel_autodiff(rng):
    def build(x):
        gx, gy = T.sobel(x)
        return T.sum_(T.add(T.square(gx), T.square(gy)))

    _fd_check(build, rng.uniform(-2, 2, (1, 1, 4, 4)))


def test_forward_determinism(rng):
    x = rng.uniform(-2, 2, (1, 3, 5, 5))
    w = rng.uniform(-1, 1, (4, 3, 3, 3))
    b = rng.uniform(-1, 1, 4)
    a = T.conv2d(Tensor(x), Tensor(w), Tensor(b)).data
    bres = T.conv2d(Tensor(x), Tensor(w), Tensor(b)).data
    assert np.array_equal(a, bres)
