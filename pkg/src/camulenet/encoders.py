"""The three embedding providers feeding the fusion block.

* CNN over the spectrogram image -> 4096-d vector ("alexnet" and "tiny"
  presets share the output contract, so downstream code is preset-agnostic).
* Bi-GRU over the MFCC sequence -> (seq_len x 512) plus a 512-d final state.
* Frozen pretrained embeddings, either loaded from tensor files produced by
  an exporter or synthesized by a deterministic tiny self-attention encoder
  so the whole pipeline runs with no external models.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .dsp import AudioClip, MfccMatrix, Spectrogram, mel_filterbank, power_spectrum
from .errors import ConfigError, EmptyInput
from .tensorfile import read_embedding


@dataclass
class PretrainedEmbedding:
    matrix: np.ndarray           # (L, W), never pooled over time
    source_tag: str


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a 2-D array (align-corners sampling)."""
    in_h, in_w = image.shape
    ys = np.linspace(0, in_h - 1, out_h)
    xs = np.linspace(0, in_w - 1, out_w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = image[np.ix_(y0, x0)] * (1 - wx) + image[np.ix_(y0, x1)] * wx
    bot = image[np.ix_(y1, x0)] * (1 - wx) + image[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


_PRESETS = {
    # (input_size, conv stack [(out_ch, kernel, stride, padding, pool_k, pool_s)])
    "alexnet": (224, [(64, 11, 4, 2, 3, 2),
                      (192, 5, 1, 2, 3, 2),
                      (384, 3, 1, 1, 0, 0),
                      (256, 3, 1, 1, 0, 0),
                      (256, 3, 1, 1, 3, 2)]),
    "tiny": (32, [(8, 3, 1, 1, 2, 2),
                  (16, 3, 1, 1, 2, 2)]),
}

EMBED_DIM = 4096

PRESET_INPUT_SIZE = {name: size for name, (size, _) in _PRESETS.items()}


def prepare_spectrogram(spec: Spectrogram, input_size: int) -> np.ndarray:
    """Resize a spectrogram to a square CNN input plane and standardize it."""
    if spec.values.size == 0:
        raise EmptyInput("empty spectrogram")
    img = resize_bilinear(spec.values, input_size, input_size)
    std = img.std()
    return (img - img.mean()) / (std if std > 0 else 1.0)


class CnnSpectrogramEncoder(nn.Layer):
    """Conv stack + first 4096-unit FC (ReLU applied), single-channel input."""

    def __init__(self, preset: str, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if preset not in _PRESETS:
            raise ConfigError(f"unknown CNN preset {preset!r}")
        self.preset = preset
        self.input_size, stack = _PRESETS[preset]
        self.convs: list[tuple[nn.Conv2d, int, int]] = []
        ch = 1
        size = self.input_size
        for i, (out_ch, k, s, p, pk, ps) in enumerate(stack):
            conv = nn.Conv2d(ch, out_ch, k, rng, stride=s, padding=p, dtype=dtype)
            self.convs.append((conv, pk, ps))
            for name, t in conv.params.items():
                self.params[f"conv{i}.{name}"] = t
            size = (size + 2 * p - k) // s + 1
            if pk:
                size = (size - pk) // ps + 1
            ch = out_ch
        self.flat_dim = ch * size * size
        self.fc = nn.Linear(self.flat_dim, EMBED_DIM, rng, dtype=dtype)
        for name, t in self.fc.params.items():
            self.params[f"fc.{name}"] = t

    def prepare(self, spec: Spectrogram) -> np.ndarray:
        return prepare_spectrogram(spec, self.input_size)

    def __call__(self, images: Tensor) -> Tensor:
        """images: (B, H, W) prepared planes -> (B, 4096) embedding."""
        x = ad.reshape(images, (images.shape[0], 1, images.shape[1], images.shape[2]))
        for conv, pk, ps in self.convs:
            x = ad.relu(conv(x))
            if pk:
                x = ad.maxpool2d(x, pk, ps)
        x = ad.reshape(x, (x.shape[0], self.flat_dim))
        return ad.relu(self.fc(x))


class MfccSequenceEncoder(nn.Layer):
    """Bi-GRU over MFCC frames: (B, S, n_mfcc) -> (B, S, 512) + 512-d state."""

    def __init__(self, n_mfcc: int, rng: np.random.Generator, hidden: int = 256,
                 layers: int = 2, dropout: float = 0.2, dtype=np.float32):
        super().__init__()
        self.gru = nn.BiGru(n_mfcc, hidden=hidden, layers=layers,
                            dropout=dropout, rng=rng, dtype=dtype)
        self.params = self.gru.params
        self.width = 2 * hidden

    def __call__(self, frames: Tensor, train: bool = False,
                 rng: Optional[np.random.Generator] = None) -> tuple[Tensor, Tensor]:
        return self.gru(frames, train=train, rng=rng)


def encode_mfcc(encoder: MfccSequenceEncoder, m: MfccMatrix) -> tuple[Tensor, Tensor]:
    """Single-clip convenience wrapper (adds and keeps batch dim of 1)."""
    x = Tensor(m.values[None, :, :])
    return encoder(x, train=False)


def load_pretrained_embedding(path, expected_clip_id: str) -> PretrainedEmbedding:
    matrix, meta = read_embedding(path, expected_clip_id=expected_clip_id)
    return PretrainedEmbedding(matrix=matrix, source_tag=meta.get("source_tag", "unknown"))


def reference_tiny_encoder(clip: AudioClip, L: int, W: int, seed: int) -> PretrainedEmbedding:
    """Deterministic frozen stand-in for an external pretrained encoder.

    Log-mel frames are average-pooled to L steps, projected to width W with
    frozen random weights, and passed through one self-attention layer.
    """
    if L < 1 or W < 1:
        raise ConfigError(f"tiny encoder needs L, W >= 1, got L={L}, W={W}")
    rng = ad.make_rng(seed, 0xE17C)
    n_mels = 40
    win = min(400, len(clip.samples))
    n_fft = 512
    power = power_spectrum(clip.samples, win, max(win // 2, 1), n_fft)
    bank = mel_filterbank(n_mels, n_fft, clip.sample_rate)
    feats = np.log(power @ bank.T + 1e-10)          # (frames, n_mels)
    # average-pool frames into exactly L contiguous buckets
    edges = np.linspace(0, feats.shape[0], L + 1).round().astype(int)
    pooled = np.stack([
        feats[edges[i]:max(edges[i + 1], edges[i] + 1)].mean(axis=0) for i in range(L)])
    proj = rng.standard_normal((n_mels, W)) / np.sqrt(n_mels)
    x = pooled @ proj                                # (L, W)
    wq, wk, wv = (rng.standard_normal((W, W)) / np.sqrt(W) for _ in range(3))
    scores = (x @ wq) @ (x @ wk).T / np.sqrt(W)
    scores -= scores.max(axis=1, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=1, keepdims=True)
    out = x + attn @ (x @ wv)
    out = (out - out.mean(axis=1, keepdims=True)) / (out.std(axis=1, keepdims=True) + 1e-6)
    return PretrainedEmbedding(matrix=out, source_tag=f"tiny-L{L}-W{W}-s{seed}")
