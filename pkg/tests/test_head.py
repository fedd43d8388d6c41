import math

import numpy as np
import pytest

from csmlgcn import autodiff as ad
from csmlgcn.autodiff import Value
from csmlgcn.head import HeadParams, bce_loss, head_forward, total_loss


def hand_params():
    return HeadParams(Value([[2.0]]), Value([[-1.0]]), Value([[3.0]]), Value([[0.5]]))


def sig(x):
    return 1 / (1 + math.exp(-x))


def test_hand_forward():
    psi = head_forward(Value(np.array([[1.0], [0.25]])), hand_params()).data
    # hidden = relu(2z - 1) = [1, 0]; logits = [3.5, 0.5]
    np.testing.assert_allclose(psi[:, 0], [sig(3.5), sig(0.5)], atol=1e-12)


def test_range_and_shape(rng):
    p = HeadParams(Value(rng.normal(size=(4, 6))), Value(rng.normal(size=(1, 6))),
                   Value(rng.normal(size=(6, 1))), Value(rng.normal(size=(1, 1))))
    psi = head_forward(Value(rng.normal(size=(9, 4))), p).data
    assert psi.shape == (9, 1)
    assert np.all((psi >= 0) & (psi <= 1))


def test_zero_weights_give_half():
    p = HeadParams(Value(np.zeros((3, 2))), Value(np.zeros((1, 2))), Value(np.zeros((2, 1))), Value(np.zeros((1, 1))))
    np.testing.assert_array_equal(head_forward(Value(np.ones((4, 3))), p).data, 0.5)


def test_nonfinite_raises():
    with pytest.raises(FloatingPointError):
        head_forward(Value(np.array([[np.inf]])), hand_params())


def test_loss_values():
    assert bce_loss(Value([[0.9], [0.2]]), [1, 0]).item() == pytest.approx(
        -(math.log(0.9) + math.log(0.8)) / 2, abs=1e-12)
    assert bce_loss(Value([[1.0], [0.0]]), [1, 0]).item() == pytest.approx(0.0, abs=1e-9)


def test_total_is_sum():
    assert total_loss([0.5, 0.25, 1.0]) == pytest.approx(1.75)
    t = total_loss([Value([[0.5]]), Value([[0.25]])])
    assert t.item() == pytest.approx(0.75)
    with pytest.raises(ValueError):
        total_loss([])


def test_head_gradient(rng):
    p = HeadParams(*(Value(rng.normal(size=s), requires_grad=True) for s in ((3, 4), (1, 4), (4, 1), (1, 1))))
    z = Value(rng.normal(size=(5, 3)), requires_grad=True)
    y = np.array([1, 0, 1, 1, 0])
    assert ad.grad_check(lambda: bce_loss(head_forward(z, p), y), [z, *p]) < 1e-5
