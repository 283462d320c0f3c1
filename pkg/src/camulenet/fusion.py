"""Co-attention fusion of the frequency-domain embeddings with frozen
pretrained-encoder frames.

Data flow (batch-first):
  project:  4096-d CNN vector and 512-d Bi-GRU state -> two T-d vectors
  combine:  concat -> FC -> ReLU -> LayerNorm -> per-frame weights (length L)
  attend:   weights (1 x L) times frames (L x W) -> W-d attended vector
  process:  3 FC layers (width D) with dropout before each, ReLU, LayerNorm
  output:   processed vector concatenated with the skip-connected weights
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ConfigError, ShapeError


@dataclass
class FusionConfig:
    L: int                       # pretrained-frame count
    W: int                       # pretrained-frame width
    T: int = 1024                # projection width
    D_hidden: int = 512          # post-attention net width
    dropout: float = 0.15

    def __post_init__(self):
        if min(self.T, self.L, self.W, self.D_hidden) < 1:
            raise ConfigError(f"fusion dims must be >= 1: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0,1), got {self.dropout}")

    @property
    def fused_dim(self) -> int:
        return self.D_hidden + self.L


class CoAttentionFusion(nn.Layer):
    def __init__(self, cfg: FusionConfig, spec_dim: int, mfcc_dim: int,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.fc_s = nn.Linear(spec_dim, cfg.T, rng, dtype)
        self.fc_m = nn.Linear(mfcc_dim, cfg.T, rng, dtype)
        self.fc_ms = nn.Linear(2 * cfg.T, cfg.L, rng, dtype)
        self.ln_ms = nn.LayerNorm(cfg.L, dtype)
        self.fc1 = nn.Linear(cfg.W, cfg.D_hidden, rng, dtype)
        self.fc2 = nn.Linear(cfg.D_hidden, cfg.D_hidden, rng, dtype)
        self.fc3 = nn.Linear(cfg.D_hidden, cfg.D_hidden, rng, dtype)
        self.ln_out = nn.LayerNorm(cfg.D_hidden, dtype)
        for prefix, layer in [("fc_s", self.fc_s), ("fc_m", self.fc_m),
                              ("fc_ms", self.fc_ms), ("ln_ms", self.ln_ms),
                              ("fc1", self.fc1), ("fc2", self.fc2),
                              ("fc3", self.fc3), ("ln_out", self.ln_out)]:
            for name, t in layer.params.items():
                self.params[f"{prefix}.{name}"] = t

    def project_branches(self, x_s_emb: Tensor, x_m_state: Tensor) -> tuple[Tensor, Tensor]:
        """FC projections of both branches to the shared width T."""
        return self.fc_s(x_s_emb), self.fc_m(x_m_state)

    def concat_project(self, x_m_att: Tensor, x_s_att: Tensor) -> Tensor:
        """LayerNorm(ReLU(FC(x_m_att ++ x_s_att))) -> per-frame weights (B, L)."""
        T = self.cfg.T
        if x_m_att.shape[-1] != T or x_s_att.shape[-1] != T:
            raise ShapeError(
                f"projected widths {x_m_att.shape[-1]}/{x_s_att.shape[-1]} != T={T}")
        return self.ln_ms(ad.relu(self.fc_ms(ad.concat([x_m_att, x_s_att], axis=-1))))

    def attend(self, x_sm_att: Tensor, x_w: Tensor) -> Tensor:
        """Weights (B, L) times frames (B, L, W) -> attended vector (B, W).

        A literal matrix product: no softmax over the weights.
        """
        if x_w.shape[-2] != x_sm_att.shape[-1]:
            raise ShapeError(
                f"frame count mismatch: weights L={x_sm_att.shape[-1]}, "
                f"frames L={x_w.shape[-2]}")
        B = x_sm_att.shape[0]
        out = ad.matmul(ad.reshape(x_sm_att, (B, 1, x_sm_att.shape[-1])), x_w)
        return ad.reshape(out, (B, x_w.shape[-1]))

    def process(self, x_w_att: Tensor, train: bool,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        """3-layer net with dropout before each FC, then ReLU and LayerNorm."""
        p = self.cfg.dropout
        h = self.fc1(ad.dropout(x_w_att, p, rng, train))
        h = self.fc2(ad.dropout(h, p, rng, train))
        h = self.fc3(ad.dropout(h, p, rng, train))
        return self.ln_out(ad.relu(h))

    def fuse(self, x_w_att: Tensor, x_sm_att: Tensor, train: bool = False,
             rng: Optional[np.random.Generator] = None) -> Tensor:
        """Processed attention output concatenated with the skip connection."""
        return ad.concat([self.process(x_w_att, train, rng), x_sm_att], axis=-1)

    def __call__(self, x_s_emb: Tensor, x_m_state: Tensor, x_w: Tensor,
                 train: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
        x_s_att, x_m_att = self.project_branches(x_s_emb, x_m_state)
        x_sm_att = self.concat_project(x_m_att, x_s_att)
        x_w_att = self.attend(x_sm_att, x_w)
        return self.fuse(x_w_att, x_sm_att, train=train, rng=rng)
