"""Core tape contracts: broadcasting, accumulation, linearity, determinism."""

import numpy as np
import pytest

from spikederain import autodiff as ad
from spikederain.testing import check_gradients


@pytest.fixture(autouse=True)
def fp64():
    with ad.precision(np.float64):
        yield


def test_singleton_broadcast_only():
    a = ad.Tensor(np.ones((2, 3)))
    b = ad.Tensor(np.ones((1, 3)))
    assert (a + b).shape == (2, 3)
    c = ad.Tensor(np.ones((2, 4)))
    with pytest.raises(ad.ShapeError, match="axis 1"):
        ad.add(a, c)


def test_grad_of_linear_is_input():
    rng = np.random.default_rng(0)
    x = ad.Tensor(rng.normal(size=(3, 4)))
    w = ad.parameter(rng.normal(size=(3, 4)))
    loss = (w * x).sum()
    loss.backward()
    np.testing.assert_array_equal(w.grad, x.data)


def test_repeated_backward_accumulates():
    w = ad.parameter([2.0, 3.0])
    x = ad.Tensor([1.0, 4.0])
    loss = (w * x).sum()
    loss.backward()
    first = w.grad.copy()
    loss2 = (w * x).sum()
    loss2.backward()
    np.testing.assert_allclose(w.grad, 2 * first)


def test_backward_linearity():
    rng = np.random.default_rng(1)
    w = ad.parameter(rng.normal(size=(5,)))
    x1 = ad.Tensor(rng.normal(size=(5,)))
    x2 = ad.Tensor(rng.normal(size=(5,)))

    loss_a = (w * x1).sum()
    loss_b = ad.sigmoid(w * x2).sum()
    (loss_a + loss_b).backward()
    combined = w.grad.copy()

    w.zero_grad()
    (w * x1).sum().backward()
    ga = w.grad.copy()
    w.zero_grad()
    ad.sigmoid(w * x2).sum().backward()
    gb = w.grad.copy()
    np.testing.assert_allclose(combined, ga + gb, rtol=1e-12)


def test_non_scalar_loss_rejected():
    w = ad.parameter(np.ones((2, 2)))
    with pytest.raises(ad.ContractError, match="scalar"):
        (w * 2.0).backward()


def test_empty_tape_backward_is_noop():
    t = ad.Tensor([1.0, 2.0])
    loss = ad.Tensor(3.0)
    loss.backward()  # nothing recorded, nothing raised
    assert t.grad is None


def test_detach_blocks_gradient():
    w = ad.parameter([1.0, 2.0])
    frozen = (w * 3.0).detach()
    loss = (frozen * w).sum()
    loss.backward()
    np.testing.assert_allclose(w.grad, frozen.data)


def test_no_grad_context():
    w = ad.parameter([1.0])
    with ad.no_grad():
        y = w * 2.0
    assert not y.requires_grad


@pytest.mark.parametrize(
    "fn",
    [
        lambda a, b: ad.mul(a, b).sum(),
        lambda a, b: ad.add(a, b).sum(),
        lambda a, b: ad.sub(a, b).sum(),
        lambda a, b: ad.div(a, ad.add_scalar(b, 3.0)).sum(),
        lambda a, b: ad.sigmoid(a * b).sum(),
        lambda a, b: ad.relu(a - b).mean(),
        lambda a, b: ad.one_minus(a).mean() + ad.scale(b, 0.7).sum(),
        lambda a, b: ad.sqrt(ad.add_scalar(ad.mul(a, a), 1.0)).sum() * b.mean(),
    ],
)
def test_elementwise_gradients_match_finite_differences(fn):
    rng = np.random.default_rng(7)
    a = ad.parameter(rng.normal(size=(2, 3)))
    b = ad.parameter(rng.normal(size=(1, 3)))
    worst = check_gradients(lambda: fn(a, b), [a, b], rtol=1e-5)
    assert worst < 1e-5


def test_mul_gradient_is_other_operand():
    rng = np.random.default_rng(2)
    a = ad.parameter(rng.normal(size=(4,)))
    b = ad.Tensor(rng.normal(size=(4,)))
    (a * b).sum().backward()
    np.testing.assert_allclose(a.grad, b.data, rtol=1e-12)
    check_gradients(lambda: (a * b).sum(), [a], rtol=1e-5)


def test_broadcast_gradient_reduces_correctly():
    rng = np.random.default_rng(3)
    a = ad.parameter(rng.normal(size=(2, 1, 3)))
    b = ad.parameter(rng.normal(size=(4, 1)))
    check_gradients(lambda: (a * b).sum(), [a, b], rtol=1e-5)
    check_gradients(lambda: (a + b).mean(), [a, b], rtol=1e-5)


def test_reductions_and_shape_ops():
    rng = np.random.default_rng(4)
    a = ad.parameter(rng.normal(size=(2, 3, 4)))
    check_gradients(lambda: a.sum(axis=(0, 2)).mean(), [a], rtol=1e-5)
    check_gradients(lambda: a.mean(axis=1, keepdims=True).sum(), [a], rtol=1e-5)
    check_gradients(lambda: a.reshape(6, 4).mean(), [a], rtol=1e-5)


def test_stack_index_concat_gradients():
    rng = np.random.default_rng(5)
    a = ad.parameter(rng.normal(size=(2, 3)))
    b = ad.parameter(rng.normal(size=(2, 3)))
    check_gradients(lambda: ad.stack([a, b]).sum(), [a, b], rtol=1e-5)
    check_gradients(lambda: ad.index_axis0(a, 1).sum(), [a], rtol=1e-5)
    check_gradients(lambda: ad.concat([a, b], axis=1).mean(), [a, b], rtol=1e-5)
    check_gradients(lambda: ad.repeat_axis0(a, 3).sum(), [a], rtol=1e-5)


def test_sigmoid_at_zero():
    assert ad.sigmoid(ad.Tensor(0.0)).item() == 0.5


def test_one_minus_of_ones_is_zeros():
    x = ad.Tensor(np.ones((3, 3)))
    np.testing.assert_array_equal(ad.one_minus(x).data, np.zeros((3, 3)))


def test_forward_determinism():
    def run():
        rng = np.random.default_rng(11)
        x = ad.Tensor(rng.normal(size=(4, 4)))
        w = ad.parameter(rng.normal(size=(4, 4)))
        loss = ad.sigmoid(x * w).sum()
        loss.backward()
        return loss.item(), w.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    np.testing.assert_array_equal(g1, g2)
