import numpy as np
import pytest

from camulenet import autodiff as ad
from camulenet.autodiff import Tensor


def numeric_grad(func, params, eps=1e-6):
    """Central finite differences of a scalar-valued func w.r.t. each param.

    params are float64 Tensors; func() must recompute from their current data.
    """
    grads = []
    for p in params:
        num = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = func().item()
            flat[i] = orig - eps
            lm = func().item()
            flat[i] = orig
            nflat[i] = (lp - lm) / (2 * eps)
        grads.append(num)
    return grads


def check_grads(func, params, eps=1e-6, rtol=1e-3):
    """Backprop func() once and compare against numeric_grad."""
    for p in params:
        p.grad = None
    loss = func()
    ad.backward(loss)
    numeric = numeric_grad(func, params, eps=eps)
    for p, num in zip(params, numeric):
        got = p.grad if p.grad is not None else np.zeros_like(p.data)
        scale = max(np.abs(num).max(), np.abs(got).max(), 1e-8)
        rel = np.abs(got - num).max() / scale
        assert rel <= rtol, f"gradient mismatch: rel err {rel}"


def param(rng, shape, dtype=np.float64):
    return Tensor(rng.standard_normal(shape), requires_grad=True, dtype=dtype)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
