"""Classification heads, the weighted multitask loss, and the 1-D CNN
baseline classifier for benchmarking frozen pretrained embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ConfigError, LabelError, ShapeError


@dataclass
class MultitaskLossConfig:
    alpha: float = 0.4           # emotion cross-entropy weight
    beta: float = 0.1            # gender binary cross-entropy weight
    gamma: float = 0.2           # additive constant (no gradient effect)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")


@dataclass
class HeadOutputs:
    emotion_logits: Tensor       # (B, C)
    gender_logit: Optional[Tensor]  # (B, 1) or None in single-task mode


class MultitaskHeads(nn.Layer):
    """One FC per task on top of the fused embedding."""

    def __init__(self, in_dim: int, n_classes: int, rng: np.random.Generator,
                 with_gender: bool = True, dtype=np.float32):
        super().__init__()
        if n_classes < 2:
            raise ConfigError(f"need at least 2 emotion classes, got {n_classes}")
        self.n_classes = n_classes
        self.emotion = nn.Linear(in_dim, n_classes, rng, dtype)
        for name, t in self.emotion.params.items():
            self.params[f"emotion.{name}"] = t
        self.gender = None
        if with_gender:
            self.gender = nn.Linear(in_dim, 1, rng, dtype)
            for name, t in self.gender.params.items():
                self.params[f"gender.{name}"] = t

    def __call__(self, fused: Tensor) -> HeadOutputs:
        return HeadOutputs(
            emotion_logits=self.emotion(fused),
            gender_logit=self.gender(fused) if self.gender is not None else None)


def multitask_loss(out: HeadOutputs, emotion_labels, gender_labels,
                   cfg: MultitaskLossConfig) -> Tensor:
    """alpha * CCE(emotion) + beta * BCE(gender) + gamma, batch-averaged."""
    emotion_labels = np.asarray(emotion_labels)
    C = out.emotion_logits.shape[-1]
    if emotion_labels.min() < 0 or emotion_labels.max() >= C:
        raise LabelError(f"emotion labels outside [0,{C}): {emotion_labels}")
    loss = cfg.alpha * ad.cross_entropy_mean(out.emotion_logits, emotion_labels)
    if cfg.beta > 0 and out.gender_logit is not None:
        gender_labels = np.asarray(gender_labels)
        if np.any((gender_labels != 0) & (gender_labels != 1)):
            raise LabelError(f"gender labels must be 0/1: {gender_labels}")
        loss = loss + cfg.beta * ad.bce_with_logits_mean(out.gender_logit, gender_labels)
    return loss + cfg.gamma


@dataclass
class BaselineHeadConfig:
    conv_channels: int = 64
    kernel: int = 5
    dropout: float = 0.3
    pool: int = 2
    fc_hidden: int = 128

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0,1), got {self.dropout}")


class BaselineClassifier(nn.Layer):
    """conv1d -> batch norm -> ReLU -> dropout -> max pool -> flatten -> 2 FC.

    Input is the time-mean-pooled pretrained embedding, one vector per clip.
    """

    def __init__(self, in_dim: int, n_classes: int, cfg: BaselineHeadConfig,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if in_dim < cfg.kernel:
            raise ShapeError(f"input width {in_dim} smaller than kernel {cfg.kernel}")
        self.cfg = cfg
        self.conv = nn.Conv1d(1, cfg.conv_channels, cfg.kernel, rng, dtype)
        self.bn = nn.BatchNorm1d(cfg.conv_channels, dtype)
        conv_len = (in_dim - cfg.kernel + 1) // cfg.pool
        self.fc1 = nn.Linear(cfg.conv_channels * conv_len, cfg.fc_hidden, rng, dtype)
        self.fc2 = nn.Linear(cfg.fc_hidden, n_classes, rng, dtype)
        self.flat_dim = cfg.conv_channels * conv_len
        for prefix, layer in [("conv", self.conv), ("bn", self.bn),
                              ("fc1", self.fc1), ("fc2", self.fc2)]:
            for name, t in layer.params.items():
                self.params[f"{prefix}.{name}"] = t

    def __call__(self, x: Tensor, train: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
        """x: (B, D) mean-pooled embeddings -> (B, C) emotion logits."""
        h = ad.reshape(x, (x.shape[0], 1, x.shape[1]))
        h = ad.relu(self.bn(self.conv(h), train))
        h = ad.dropout(h, self.cfg.dropout, rng, train)
        h = ad.maxpool1d(h, self.cfg.pool)
        h = ad.reshape(h, (h.shape[0], self.flat_dim))
        return self.fc2(ad.relu(self.fc1(h)))
