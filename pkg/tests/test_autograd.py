import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from edgerank.autograd import Tensor, _unbroadcast, finite_difference_grad


def param(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def check_grad(build, x0, atol=1e-6, rtol=1e-4):
    """Compare analytic gradient of scalar-valued `build` against central
    finite differences at x0."""
    t = param(x0)
    out = build(t)
    out.backward()
    num = finite_difference_grad(lambda x: float(build(Tensor(x)).data), x0.copy())
    np.testing.assert_allclose(t.grad, num, atol=atol, rtol=rtol)


class TestForwardValues:
    def test_add_mul_broadcast(self):
        a = Tensor(np.ones((2, 3)))
        b = Tensor(np.arange(3.0))
        assert np.allclose((a + b).data, 1.0 + np.arange(3.0))
        assert np.allclose((a * 2.0).data, 2.0)

    def test_sigmoid_symmetry(self):
        x = Tensor(np.array([-3.0, 0.0, 3.0]))
        s = x.sigmoid().data
        assert s[1] == 0.5
        assert np.isclose(s[0] + s[2], 1.0)

    def test_softmax_rows_sum_to_one(self):
        x = Tensor(np.random.default_rng(0).normal(size=(4, 5)))
        s = x.softmax(axis=-1).data
        np.testing.assert_allclose(s.sum(axis=-1), 1.0)
        assert (s > 0).all()

    def test_masked_softmax_zeroes_masked_positions(self):
        x = Tensor(np.zeros((2, 4)))
        mask = np.array([[1, 1, 0, 0], [1, 1, 1, 1]], dtype=float)
        s = x.masked_softmax(mask).data
        np.testing.assert_allclose(s[0], [0.5, 0.5, 0.0, 0.0])
        np.testing.assert_allclose(s[1], 0.25)

    def test_masked_softmax_all_masked_row_is_zero(self):
        x = Tensor(np.random.default_rng(1).normal(size=(3, 4)))
        mask = np.zeros((3, 4))
        mask[0] = 1
        s = x.masked_softmax(mask).data
        assert np.isfinite(s).all()
        np.testing.assert_allclose(s[1:], 0.0)
        np.testing.assert_allclose(s[0].sum(), 1.0)

    def test_clip(self):
        x = Tensor(np.array([-1.0, 0.5, 2.0]))
        np.testing.assert_allclose(x.clip(0.0, 1.0).data, [0.0, 0.5, 1.0])

    def test_take_rows(self):
        table = Tensor(np.arange(12.0).reshape(4, 3))
        rows = table.take_rows(np.array([2, 0, 2]))
        np.testing.assert_allclose(rows.data[0], rows.data[2])
        np.testing.assert_allclose(rows.data[1], [0, 1, 2])


class TestGradients:
    rng = np.random.default_rng(42)

    def test_add_broadcast(self):
        b = param(self.rng.normal(size=3))
        x = Tensor(self.rng.normal(size=(4, 3)))
        (x + b).sum().backward()
        np.testing.assert_allclose(b.grad, np.full(3, 4.0))

    def test_mul(self):
        check_grad(lambda t: (t * t).sum(), self.rng.normal(size=(3, 2)))

    def test_div(self):
        check_grad(lambda t: (Tensor(np.ones((3,))) / t).sum(),
                   self.rng.uniform(1.0, 2.0, size=3))

    def test_matmul(self):
        w = self.rng.normal(size=(4, 3))
        check_grad(lambda t: (t @ Tensor(np.ones((3, 2)))).sum(), w)
        check_grad(lambda t: (Tensor(np.ones((2, 4))) @ t).sum(), w)

    def test_batched_matmul(self):
        x = self.rng.normal(size=(2, 3, 4))
        w = self.rng.normal(size=(4, 5))
        check_grad(lambda t: ((t @ Tensor(w)) * (t @ Tensor(w))).sum(), x)
        check_grad(lambda t: ((Tensor(x) @ t) * (Tensor(x) @ t)).sum(), w)

    def test_relu_sigmoid_exp_log(self):
        x = self.rng.normal(size=6) + 0.1
        check_grad(lambda t: t.relu().sum(), x)
        check_grad(lambda t: t.sigmoid().sum(), x)
        check_grad(lambda t: t.exp().sum(), x)
        check_grad(lambda t: t.clip(0.01, 10.0).log().sum(), np.abs(x) + 0.5)

    def test_softmax(self):
        x = self.rng.normal(size=(3, 4))
        check_grad(lambda t: (t.softmax(axis=-1) * Tensor(np.arange(4.0))).sum(), x)

    def test_masked_softmax(self):
        x = self.rng.normal(size=(3, 5))
        mask = np.array([[1, 1, 1, 0, 0], [1, 0, 1, 0, 1], [1, 1, 1, 1, 1]], float)
        weights = Tensor(self.rng.normal(size=(3, 5)))
        check_grad(lambda t: (t.masked_softmax(mask) * weights).sum(), x)

    def test_take_rows_accumulates_repeats(self):
        table = param(np.zeros((4, 2)))
        table.take_rows(np.array([1, 1, 3])).sum().backward()
        np.testing.assert_allclose(table.grad, [[0, 0], [2, 2], [0, 0], [1, 1]])

    def test_concat(self):
        a, b = param(self.rng.normal(size=(2, 3))), param(self.rng.normal(size=(2, 2)))
        out = Tensor.concat([a, b], axis=-1)
        (out * out).sum().backward()
        np.testing.assert_allclose(a.grad, 2 * a.data)
        np.testing.assert_allclose(b.grad, 2 * b.data)

    def test_reshape_swapaxes_mean(self):
        x = self.rng.normal(size=(2, 6))
        check_grad(lambda t: t.reshape(2, 3, 2).swapaxes(0, 1).mean(), x)

    def test_reused_node_accumulates(self):
        x = param(np.array([2.0]))
        y = x * x + x * 3.0
        y.backward()
        np.testing.assert_allclose(x.grad, [7.0])

    def test_grad_not_tracked_without_flag(self):
        x = Tensor(np.ones(3))
        y = (x * 2.0).sum()
        y.backward()
        assert x.grad is None

    def test_deep_chain_is_iterative(self):
        # would blow the recursion limit if backward() recursed
        x = param(np.array([1.0]))
        y = x
        for _ in range(5000):
            y = y + 0.001
        y.backward()
        np.testing.assert_allclose(x.grad, [1.0])


class TestUnbroadcast:
    @given(
        hnp.array_shapes(min_dims=1, max_dims=3, max_side=4),
        st.data(),
    )
    @settings(max_examples=50, deadline=None)
    def test_inverts_broadcast(self, shape, data):
        # collapse a random subset of axes to 1, broadcast back up, and check
        # the summed gradient lands in the collapsed shape
        small = tuple(
            1 if data.draw(st.booleans()) else s for s in shape
        )
        g = np.ones(shape)
        out = _unbroadcast(g, small)
        assert out.shape == small
        assert out.sum() == g.size

    def test_scalar_target(self):
        g = np.ones((2, 3))
        assert _unbroadcast(g, ()).shape == ()
        assert _unbroadcast(g, ()) == 6.0


class TestFiniteDifference:
    def test_quadratic(self):
        x = np.array([1.0, -2.0, 0.5])
        g = finite_difference_grad(lambda v: float((v ** 2).sum()), x)
        np.testing.assert_allclose(g, 2 * x, atol=1e-6)
