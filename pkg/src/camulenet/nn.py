"""Parameterized layers built on the autodiff ops.

All layers are batch-first. Parameters live in per-layer dicts so a model can
collect them by name for the optimizer and for checkpointing. Weight init is
uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) everywhere; LayerNorm starts at
gain 1, bias 0.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptySequence


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, dtype=dtype)


class Layer:
    """Base: children register parameters into self.params."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def named_params(self, prefix: str = "") -> dict[str, Tensor]:
        return {prefix + k: v for k, v in self.params.items()}


class Linear(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng, dtype=np.float32):
        super().__init__()
        self.params["weight"] = uniform_init(rng, (in_dim, out_dim), in_dim, dtype)
        self.params["bias"] = uniform_init(rng, (out_dim,), in_dim, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.params["weight"], self.params["bias"])


class LayerNorm(Layer):
    def __init__(self, dim: int, dtype=np.float32, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.params["gain"] = Tensor(np.ones(dim), requires_grad=True, dtype=dtype)
        self.params["bias"] = Tensor(np.zeros(dim), requires_grad=True, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.params["gain"], self.params["bias"], self.eps)


class Conv2d(Layer):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng,
                 stride: int = 1, padding: int = 0, dtype=np.float32):
        super().__init__()
        fan_in = in_ch * kernel * kernel
        self.stride, self.padding = stride, padding
        self.params["weight"] = uniform_init(rng, (out_ch, in_ch, kernel, kernel), fan_in, dtype)
        self.params["bias"] = uniform_init(rng, (out_ch,), fan_in, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.params["weight"], self.params["bias"],
                         stride=self.stride, padding=self.padding)


class Conv1d(Layer):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng, dtype=np.float32):
        super().__init__()
        fan_in = in_ch * kernel
        self.params["weight"] = uniform_init(rng, (out_ch, in_ch, kernel), fan_in, dtype)
        self.params["bias"] = uniform_init(rng, (out_ch,), fan_in, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv1d(x, self.params["weight"], self.params["bias"])


class BatchNorm1d(Layer):
    """Channel-wise batch norm over (B, C, L); running stats for eval mode."""

    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = Tensor(np.ones(channels), requires_grad=True, dtype=dtype)
        self.params["beta"] = Tensor(np.zeros(channels), requires_grad=True, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        gamma = ad.reshape(self.params["gamma"], (1, -1, 1))
        beta = ad.reshape(self.params["beta"], (1, -1, 1))
        if train:
            mu = ad.mean(x, axis=(0, 2), keepdims=True)
            centered = ad.sub(x, mu)
            var = ad.mean(ad.mul(centered, centered), axis=(0, 2), keepdims=True)
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mu.data.reshape(-1)
            self.running_var = (1 - m) * self.running_var + m * var.data.reshape(-1)
            inv = ad.pow_(ad.add(var, Tensor(np.full(var.shape, self.eps), dtype=x.dtype)), -0.5)
            return ad.add(ad.mul(ad.mul(centered, inv), gamma), beta)
        mu = self.running_mean.reshape(1, -1, 1)
        inv = 1.0 / np.sqrt(self.running_var.reshape(1, -1, 1) + self.eps)
        scaled = ad.mul(ad.sub(x, Tensor(mu, dtype=x.dtype)), Tensor(inv, dtype=x.dtype))
        return ad.add(ad.mul(scaled, gamma), beta)


class _GruDirection(Layer):
    """One direction of one GRU layer. Gate order in fused matrices: r, z, n."""

    def __init__(self, in_dim: int, hidden: int, rng, dtype=np.float32):
        super().__init__()
        self.hidden = hidden
        self.params["w_ih"] = uniform_init(rng, (in_dim, 3 * hidden), in_dim, dtype)
        self.params["w_hh"] = uniform_init(rng, (hidden, 3 * hidden), hidden, dtype)
        self.params["b_ih"] = uniform_init(rng, (3 * hidden,), in_dim, dtype)
        self.params["b_hh"] = uniform_init(rng, (3 * hidden,), hidden, dtype)

    def step(self, x_t: Tensor, h: Tensor) -> Tensor:
        H = self.hidden
        gi = ad.add(ad.matmul(x_t, self.params["w_ih"]), self.params["b_ih"])
        gh = ad.add(ad.matmul(h, self.params["w_hh"]), self.params["b_hh"])
        r = ad.sigmoid(ad.add(gi[:, 0:H], gh[:, 0:H]))
        z = ad.sigmoid(ad.add(gi[:, H:2 * H], gh[:, H:2 * H]))
        n = ad.tanh(ad.add(gi[:, 2 * H:3 * H], ad.mul(r, gh[:, 2 * H:3 * H])))
        one = Tensor(np.ones(1), dtype=x_t.dtype)
        return ad.add(ad.mul(ad.sub(one, z), n), ad.mul(z, h))

    def run(self, steps: list[Tensor], reverse: bool) -> list[Tensor]:
        B = steps[0].shape[0]
        h = Tensor(np.zeros((B, self.hidden)), dtype=steps[0].dtype)
        order = range(len(steps) - 1, -1, -1) if reverse else range(len(steps))
        out: list[Optional[Tensor]] = [None] * len(steps)
        for t in order:
            h = self.step(steps[t], h)
            out[t] = h
        return out  # type: ignore[return-value]


class BiGru(Layer):
    """Stacked bidirectional GRU; per-step output concat(fwd, bwd) = 2*hidden."""

    def __init__(self, in_dim: int, hidden: int = 256, layers: int = 2,
                 dropout: float = 0.2, rng=None, dtype=np.float32):
        super().__init__()
        self.hidden, self.layers, self.dropout = hidden, layers, dropout
        self.dirs: list[tuple[_GruDirection, _GruDirection]] = []
        dim = in_dim
        for layer in range(layers):
            fwd = _GruDirection(dim, hidden, rng, dtype)
            bwd = _GruDirection(dim, hidden, rng, dtype)
            self.dirs.append((fwd, bwd))
            for name, p in fwd.params.items():
                self.params[f"l{layer}.fwd.{name}"] = p
            for name, p in bwd.params.items():
                self.params[f"l{layer}.bwd.{name}"] = p
            dim = 2 * hidden

    def __call__(self, x: Tensor, train: bool = False,
                 rng: Optional[np.random.Generator] = None) -> tuple[Tensor, Tensor]:
        """x: (B, S, D) -> (sequence (B, S, 2H), final states (B, 2H))."""
        if x.ndim != 3 or x.shape[1] < 1:
            raise EmptySequence(f"BiGru needs (B, S>=1, D) input, got {x.shape}")
        S = x.shape[1]
        steps = [x[:, t] for t in range(S)]
        final_fwd = final_bwd = None
        for layer, (fwd, bwd) in enumerate(self.dirs):
            out_f = fwd.run(steps, reverse=False)
            out_b = bwd.run(steps, reverse=True)
            final_fwd, final_bwd = out_f[-1], out_b[0]
            steps = [ad.concat([f, b], axis=-1) for f, b in zip(out_f, out_b)]
            if train and self.dropout > 0 and layer < self.layers - 1:
                steps = [ad.dropout(s, self.dropout, rng, train) for s in steps]
        seq = ad.concat([ad.reshape(s, (s.shape[0], 1, s.shape[1])) for s in steps], axis=1)
        final = ad.concat([final_fwd, final_bwd], axis=-1)
        return seq, final
