"""Run configuration: config-file values merged with flag overrides.

Defaults mirror the published training setup (batch 64, lr 5e-5 for the
fusion model / 1e-4 for the baseline, 20 epochs with early stopping, dropout
0.15, loss weights 0.4/0.1/0.2), so a bare invocation reproduces it.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .features import DspConfig
from .heads import BaselineHeadConfig
from .model import MODES, ModelConfig
from .training import MODE_LR, TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class RunConfig:
    seed: int = 42
    mode: str = "camulenet"
    preset: str = "tiny"
    n_folds: int = 10
    jobs: int = 1
    balanced_wa: bool = True
    # pretrained-frame source: directory of exported tensors, or tiny encoder
    embeddings_dir: Optional[str] = None
    tiny_L: int = 64
    tiny_W: int = 32
    # model dims
    T: int = 1024
    D_hidden: int = 512
    dropout: float = 0.15
    gru_hidden: int = 256
    gru_layers: int = 2
    gru_dropout: float = 0.2
    n_mfcc: int = 40
    alpha: float = 0.4
    beta: float = 0.1
    gamma: float = 0.2
    # training
    batch_size: int = 64
    lr: Optional[float] = None   # None -> mode default
    max_epochs: int = 20
    patience: int = 3
    dsp: DspConfig = field(default_factory=DspConfig)
    baseline: BaselineHeadConfig = field(default_factory=BaselineHeadConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if isinstance(self.dsp, dict):
            if self.dsp.get("n_mfcc", self.n_mfcc) != self.n_mfcc:
                raise ConfigError(
                    f"dsp.n_mfcc {self.dsp['n_mfcc']} conflicts with n_mfcc "
                    f"{self.n_mfcc}; set the top-level n_mfcc only")
            self.dsp = DspConfig(**self.dsp)
        # the model and the feature frontend must agree on the MFCC width
        self.dsp.n_mfcc = self.n_mfcc
        if isinstance(self.baseline, dict):
            self.baseline = BaselineHeadConfig(**self.baseline)

    def resolved_lr(self) -> float:
        return self.lr if self.lr is not None else MODE_LR[self.mode]

    def model_config(self, n_classes: int, L: int, W: int) -> ModelConfig:
        return ModelConfig(
            mode=self.mode, n_classes=n_classes, L=L, W=W, preset=self.preset,
            n_mfcc=self.n_mfcc, gru_hidden=self.gru_hidden,
            gru_layers=self.gru_layers, gru_dropout=self.gru_dropout,
            T=self.T, D_hidden=self.D_hidden, dropout=self.dropout,
            alpha=self.alpha, beta=self.beta, gamma=self.gamma,
            baseline=self.baseline)

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, lr=self.resolved_lr(),
                           max_epochs=self.max_epochs, patience=self.patience,
                           seed=self.seed)

    def fingerprint(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def load_run_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Read TOML or JSON config file, then apply non-None flag overrides."""
    values: dict = {}
    if path is not None:
        path = Path(path)
        if path.suffix.lower() == ".json":
            values = json.loads(path.read_text())
        else:
            with open(path, "rb") as fh:
                values = tomllib.load(fh)
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**values)
