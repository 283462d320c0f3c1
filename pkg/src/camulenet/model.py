"""Model assembly for every training mode.

Modes:
  baseline                  1-D CNN classifier over mean-pooled pretrained
                            embeddings (the transfer-learning benchmark).
  camulenet                 co-attention fusion + emotion/gender multitask.
  camulenet_single_task     co-attention fusion, emotion head only (beta=0).
  camulenet_no_coattention  plain concatenation of the three embeddings into
                            a single emotion head (also single-task, matching
                            the ablation that removes both mechanisms).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import EMBED_DIM, CnnSpectrogramEncoder, MfccSequenceEncoder
from .errors import ConfigError
from .fusion import CoAttentionFusion, FusionConfig
from .heads import (BaselineClassifier, BaselineHeadConfig, HeadOutputs,
                    MultitaskHeads, MultitaskLossConfig, multitask_loss)
from .tensorfile import load_checkpoint, save_checkpoint

MODES = ("baseline", "camulenet", "camulenet_single_task", "camulenet_no_coattention")


@dataclass
class FeatureBundle:
    """Per-clip model inputs plus labels; arrays are plain numpy."""
    clip_id: str
    speaker_id: str
    emotion: int
    gender: int                  # 0 = male, 1 = female
    spec_image: Optional[np.ndarray]   # prepared (H, W) plane, camulenet modes
    mfcc: Optional[np.ndarray]         # (S, n_mfcc)
    x_w: np.ndarray                    # (L, W) frozen pretrained frames


@dataclass
class Batch:
    emotion: np.ndarray
    gender: np.ndarray
    x_w: np.ndarray                    # (B, L, W)
    spec_image: Optional[np.ndarray] = None   # (B, H, W)
    mfcc: Optional[np.ndarray] = None         # (B, S, n_mfcc)


def stack_batch(bundles: list[FeatureBundle]) -> Batch:
    return Batch(
        emotion=np.array([b.emotion for b in bundles]),
        gender=np.array([b.gender for b in bundles]),
        x_w=np.stack([b.x_w for b in bundles]),
        spec_image=(np.stack([b.spec_image for b in bundles])
                    if bundles[0].spec_image is not None else None),
        mfcc=(np.stack([b.mfcc for b in bundles])
              if bundles[0].mfcc is not None else None))


@dataclass
class ModelConfig:
    mode: str
    n_classes: int
    L: int
    W: int
    preset: str = "tiny"
    n_mfcc: int = 40
    gru_hidden: int = 256
    gru_layers: int = 2
    gru_dropout: float = 0.2
    T: int = 1024
    D_hidden: int = 512
    dropout: float = 0.15
    alpha: float = 0.4
    beta: float = 0.1
    gamma: float = 0.2
    baseline: BaselineHeadConfig = field(default_factory=BaselineHeadConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if isinstance(self.baseline, dict):
            self.baseline = BaselineHeadConfig(**self.baseline)

    @property
    def multitask(self) -> bool:
        return self.mode == "camulenet"

    @property
    def coattention(self) -> bool:
        return self.mode in ("camulenet", "camulenet_single_task")

    def loss_config(self) -> MultitaskLossConfig:
        beta = self.beta if self.multitask else 0.0
        return MultitaskLossConfig(alpha=self.alpha, beta=beta, gamma=self.gamma)


@dataclass
class StepResult:
    loss: Tensor
    emotion_pred: np.ndarray
    gender_pred: Optional[np.ndarray]
    fused: Optional[Tensor] = None


class CamuleNetModel:
    """Full pipeline model for the camulenet modes."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.cnn = CnnSpectrogramEncoder(cfg.preset, rng, dtype)
        self.mfcc_enc = MfccSequenceEncoder(cfg.n_mfcc, rng, hidden=cfg.gru_hidden,
                                            layers=cfg.gru_layers,
                                            dropout=cfg.gru_dropout, dtype=dtype)
        self.loss_cfg = cfg.loss_config()
        if cfg.coattention:
            fusion_cfg = FusionConfig(L=cfg.L, W=cfg.W, T=cfg.T,
                                      D_hidden=cfg.D_hidden, dropout=cfg.dropout)
            self.fusion = CoAttentionFusion(fusion_cfg, EMBED_DIM,
                                            self.mfcc_enc.width, rng, dtype)
            head_dim = fusion_cfg.fused_dim
        else:
            self.fusion = None
            head_dim = EMBED_DIM + self.mfcc_enc.width + cfg.W
        self.heads = MultitaskHeads(head_dim, cfg.n_classes, rng,
                                    with_gender=cfg.multitask, dtype=dtype)

    def params(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.cnn.named_params("cnn."))
        out.update(self.mfcc_enc.named_params("mfcc."))
        if self.fusion is not None:
            out.update(self.fusion.named_params("fusion."))
        out.update(self.heads.named_params("heads."))
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def set_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        pass

    def forward(self, batch: Batch, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> tuple[HeadOutputs, Tensor]:
        x_s_emb = self.cnn(Tensor(batch.spec_image, dtype=self.dtype))
        _, x_m_state = self.mfcc_enc(Tensor(batch.mfcc, dtype=self.dtype),
                                     train=train, rng=rng)
        x_w = Tensor(batch.x_w, dtype=self.dtype)
        if self.fusion is not None:
            fused = self.fusion(x_s_emb, x_m_state, x_w, train=train, rng=rng)
        else:
            fused = ad.concat([x_s_emb, x_m_state, ad.mean(x_w, axis=1)], axis=-1)
        return self.heads(fused), fused

    def compute(self, batch: Batch, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> StepResult:
        out, fused = self.forward(batch, train=train, rng=rng)
        loss = multitask_loss(out, batch.emotion, batch.gender, self.loss_cfg)
        gender_pred = None
        if out.gender_logit is not None:
            gender_pred = (out.gender_logit.data.reshape(-1) > 0).astype(int)
        return StepResult(loss=loss,
                          emotion_pred=out.emotion_logits.data.argmax(axis=-1),
                          gender_pred=gender_pred, fused=fused)


class BaselineModel:
    """Mean-pooled pretrained embedding into the 1-D CNN classifier."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.classifier = BaselineClassifier(cfg.W, cfg.n_classes, cfg.baseline, rng, dtype)

    def params(self) -> dict[str, Tensor]:
        return self.classifier.named_params("baseline.")

    def buffers(self) -> dict[str, np.ndarray]:
        return {"baseline.bn.running_mean": self.classifier.bn.running_mean,
                "baseline.bn.running_var": self.classifier.bn.running_var}

    def set_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        self.classifier.bn.running_mean = buffers["baseline.bn.running_mean"].copy()
        self.classifier.bn.running_var = buffers["baseline.bn.running_var"].copy()

    def compute(self, batch: Batch, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> StepResult:
        pooled = batch.x_w.mean(axis=1)        # time pooling: (B, L, W) -> (B, W)
        logits = self.classifier(Tensor(pooled, dtype=self.dtype), train=train, rng=rng)
        loss = ad.cross_entropy_mean(logits, batch.emotion)
        return StepResult(loss=loss, emotion_pred=logits.data.argmax(axis=-1),
                          gender_pred=None, fused=None)


def build_model(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
    if cfg.mode == "baseline":
        return BaselineModel(cfg, rng, dtype)
    return CamuleNetModel(cfg, rng, dtype)


def save_model(path, model) -> None:
    arrays = {name: p.data for name, p in model.params().items()}
    for name, buf in model.buffers().items():
        arrays["_buffer." + name] = buf
    save_checkpoint(path, arrays, extra={"model_config": asdict(model.cfg)})


def load_model(path, dtype=np.float32):
    arrays, extra = load_checkpoint(path)
    cfg = ModelConfig(**extra["model_config"])
    model = build_model(cfg, ad.make_rng(0), dtype)
    params = model.params()
    for name, p in params.items():
        p.data = arrays[name].astype(dtype)
    buffers = {name[len("_buffer."):]: arr for name, arr in arrays.items()
               if name.startswith("_buffer.")}
    if buffers:
        model.set_buffers(buffers)
    return model
