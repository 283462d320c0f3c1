import numpy as np
import pytest

from camulenet import autodiff as ad
from camulenet.autodiff import Tensor
from camulenet.errors import ConfigError, ShapeError
from camulenet.optim import Adam

from conftest import check_grads, param


def test_relu_forward_and_grad_mask():
    x = Tensor([-1.0, 0.0, 2.0], requires_grad=True, dtype=np.float64)
    y = ad.relu(x)
    assert np.allclose(y.data, [0.0, 0.0, 2.0])
    ad.backward(ad.sum_(y))
    assert np.allclose(x.grad, [0.0, 0.0, 1.0])


def test_softmax_uniform_logits():
    for c in (2, 5, 9):
        s = ad.softmax(Tensor(np.zeros((1, c))))
        assert np.allclose(s.data, 1.0 / c)


def test_softmax_rows_sum_to_one(rng):
    x = Tensor(rng.standard_normal((20, 7)) * 10)
    s = ad.softmax(x)
    assert np.abs(s.data.sum(axis=-1) - 1.0).max() < 1e-6


def test_layer_norm_hand_example():
    x = Tensor([[1.0, 2.0, 3.0]], dtype=np.float64)
    gain = Tensor(np.ones(3), dtype=np.float64)
    bias = Tensor(np.zeros(3), dtype=np.float64)
    y = ad.layer_norm(x, gain, bias)
    # mean 2, population var 2/3 -> (x-2)/sqrt(2/3)
    assert np.allclose(y.data, [[-1.2247, 0.0, 1.2247]], atol=1e-3)


def test_layer_norm_zero_mean(rng):
    x = Tensor(rng.standard_normal((6, 11)))
    y = ad.layer_norm(x, Tensor(np.ones(11)), Tensor(np.zeros(11)))
    assert np.abs(y.data.mean(axis=-1)).max() <= 1e-6


def test_backward_sum_of_squares():
    w = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    loss = ad.sum_(ad.mul(w, w))
    ad.backward(loss)
    assert np.allclose(w.grad, [2.0, 4.0])


def test_backward_accumulates_on_repeat():
    w = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    loss = ad.sum_(ad.mul(w, w))
    ad.backward(loss)
    ad.backward(loss)
    assert np.allclose(w.grad, [4.0, 8.0])


def test_detached_tensor_gets_no_grad():
    w = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    frozen = Tensor([3.0, 4.0], requires_grad=False, dtype=np.float64)
    loss = ad.sum_(ad.mul(w, frozen))
    ad.backward(loss)
    assert frozen.grad is None
    assert np.allclose(w.grad, [3.0, 4.0])


def test_backward_rejects_nonscalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        ad.backward(ad.mul(w, w))


def test_matmul_shape_error_mentions_shapes():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((4, 2)))
    with pytest.raises(ShapeError) as exc:
        ad.matmul(a, b)
    assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)


def test_dropout_eval_identity_and_train_scaling(rng):
    x = Tensor(np.ones((4, 1000)))
    assert ad.dropout(x, 0.4, None, train=False) is x
    y = ad.dropout(x, 0.4, ad.make_rng(0), train=True)
    kept = y.data[y.data > 0]
    assert np.allclose(kept, 1.0 / 0.6)
    # inverted scaling keeps the expectation close to 1
    assert abs(y.data.mean() - 1.0) < 0.05


def test_dropout_deterministic_under_seed():
    x = Tensor(np.ones((8, 64)))
    a = ad.dropout(x, 0.3, ad.make_rng(7, 1), train=True)
    b = ad.dropout(x, 0.3, ad.make_rng(7, 1), train=True)
    assert np.array_equal(a.data, b.data)


@pytest.mark.parametrize("op,shapes", [
    ("add", [(3, 4), (3, 4)]),
    ("add_broadcast", [(3, 4), (4,)]),
    ("mul", [(3, 4), (3, 4)]),
    ("div", [(3, 4), (3, 4)]),
    ("matmul", [(3, 4), (4, 5)]),
    ("bmm", [(2, 3, 4), (2, 4, 5)]),
])
def test_binary_op_gradients(rng, op, shapes):
    a, b = (param(rng, s) for s in shapes)
    if op == "div":
        b.data = b.data + 3.0  # keep away from zero
    fn = {"add": ad.add, "add_broadcast": ad.add, "mul": ad.mul,
          "div": ad.div, "matmul": ad.matmul, "bmm": ad.matmul}[op]
    check_grads(lambda: ad.sum_(ad.tanh(fn(a, b))), [a, b])


@pytest.mark.parametrize("name", ["relu", "sigmoid", "tanh", "exp", "softmax",
                                  "log_softmax", "sqrt_shift"])
def test_unary_op_gradients(rng, name):
    x = param(rng, (4, 6))
    ops = {
        "relu": lambda: ad.sum_(ad.mul(ad.relu(x), x)),
        "sigmoid": lambda: ad.sum_(ad.sigmoid(x)),
        "tanh": lambda: ad.sum_(ad.tanh(x)),
        "exp": lambda: ad.mean(ad.exp(x)),
        "softmax": lambda: ad.sum_(ad.mul(ad.softmax(x), x)),
        "log_softmax": lambda: ad.sum_(ad.mul(ad.log_softmax(x), x)),
        "sqrt_shift": lambda: ad.sum_(ad.sqrt(ad.add(ad.mul(x, x), x.__class__(np.ones((4, 6)), dtype=np.float64)))),
    }
    check_grads(ops[name], [x])


def test_reduction_and_shape_op_gradients(rng):
    x = param(rng, (3, 4, 5))

    def fn():
        a = ad.mean(x, axis=1)
        b = ad.sum_(x, axis=(0, 2))
        c = ad.transpose(ad.reshape(x, (12, 5)), (1, 0))
        return ad.sum_(ad.tanh(a)) + ad.sum_(ad.tanh(b)) + ad.sum_(ad.tanh(ad.mean(c, axis=1)))
    check_grads(fn, [x])


def test_concat_slice_take_gradients(rng):
    a = param(rng, (3, 4))
    b = param(rng, (3, 2))

    def fn():
        joined = ad.concat([a, b], axis=1)
        sliced = joined[:, 1:5]
        taken = ad.take(joined, np.array([0, 2, 2]), axis=0)
        picked = ad.gather_rows(joined, np.array([0, 3, 5]))
        return ad.sum_(ad.tanh(sliced)) + ad.sum_(ad.tanh(taken)) + ad.sum_(picked)
    check_grads(fn, [a, b])


def test_layer_norm_gradients(rng):
    x = param(rng, (4, 6))
    gain = param(rng, (6,))
    bias = param(rng, (6,))
    check_grads(lambda: ad.sum_(ad.tanh(ad.layer_norm(x, gain, bias))), [x, gain, bias])


def test_conv2d_gradients(rng):
    x = param(rng, (2, 3, 6, 7))
    w = param(rng, (4, 3, 3, 3))
    b = param(rng, (4,))
    check_grads(lambda: ad.sum_(ad.tanh(ad.conv2d(x, w, b, stride=2, padding=1))),
                [x, w, b])


def test_maxpool2d_gradients(rng):
    x = param(rng, (2, 2, 7, 7))
    check_grads(lambda: ad.sum_(ad.tanh(ad.maxpool2d(x, 3, 2))), [x])


def test_conv1d_maxpool1d_gradients(rng):
    x = param(rng, (2, 3, 12))
    w = param(rng, (5, 3, 4))
    b = param(rng, (5,))
    check_grads(lambda: ad.sum_(ad.tanh(ad.maxpool1d(ad.conv1d(x, w, b), 2))),
                [x, w, b])


def test_loss_op_gradients(rng):
    logits = param(rng, (6, 4))
    labels = np.array([0, 1, 2, 3, 1, 0])
    glogit = param(rng, (6, 1))
    gtargets = np.array([0, 1, 1, 0, 1, 0])
    check_grads(lambda: ad.cross_entropy_mean(logits, labels), [logits])
    check_grads(lambda: ad.bce_with_logits_mean(glogit, gtargets), [glogit])


def test_finite_check_trips_on_nan():
    x = Tensor([1.0, -1.0])
    with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError):
        ad.log(x)


def test_adam_first_step_is_signed_lr():
    p = Tensor([1.0, -2.0, 3.0], requires_grad=True, dtype=np.float64)
    p.grad = np.array([0.5, -0.1, 2.0])
    opt = Adam({"p": p}, lr=0.01)
    before = p.data.copy()
    opt.step()
    # bias correction makes m_hat/sqrt(v_hat) = sign(g) at t=1 (up to eps)
    assert np.allclose(p.data, before - 0.01 * np.sign([0.5, -0.1, 2.0]), atol=1e-6)


def test_adam_zero_grad_keeps_params():
    p = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    p.grad = np.zeros(2)
    opt = Adam({"p": p}, lr=0.1)
    opt.step()
    assert np.allclose(p.data, [1.0, 2.0])


def test_adam_two_steps_match_hand_unrolled_recurrence():
    g = 0.3
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    p = Tensor([1.0], requires_grad=True, dtype=np.float64)
    opt = Adam({"p": p}, lr=lr, beta1=b1, beta2=b2, eps=eps)
    # hand unroll two steps on constant gradient
    theta, m, v = 1.0, 0.0, 0.0
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    for _ in range(2):
        p.grad = np.array([g])
        opt.step()
    assert np.allclose(p.data, [theta], atol=1e-12)


def test_adam_rejects_nonpositive_lr():
    p = Tensor([1.0], requires_grad=True)
    with pytest.raises(ConfigError):
        Adam({"p": p}, lr=0.0)
