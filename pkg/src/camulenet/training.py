"""Deterministic mini-batch training with early stopping on validation loss.

All randomness (shuffles, dropout masks, init) derives from the config seed
through counter-based streams, so identical config + data reproduce the run
bit-for-bit.  Wall-clock timing is kept out of the per-epoch records so logs
from equal runs compare equal.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DivergedError, EmptySplit
from .metrics import plain_accuracy, weighted_metrics
from .model import FeatureBundle, stack_batch
from .optim import Adam


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 5e-5
    max_epochs: int = 20
    patience: int = 3
    min_delta: float = 1e-4
    seed: int = 42

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError(f"batch_size and max_epochs must be >= 1: {self}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")


# mode-specific defaults: the baseline benchmark trains at 1e-4, the fusion
# model at 5e-5 with batches of 64
MODE_LR = {"baseline": 1e-4, "camulenet": 5e-5,
           "camulenet_single_task": 5e-5, "camulenet_no_coattention": 5e-5}


@dataclass
class TrainLog:
    records: list[dict] = field(default_factory=list)   # one per epoch, deterministic
    stopped_epoch: int = 0
    best_epoch: int = 0
    wall_s: float = 0.0          # excluded from determinism comparisons

    def to_jsonl(self) -> str:
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        lines.append(json.dumps({"summary": {"stopped_epoch": self.stopped_epoch,
                                             "best_epoch": self.best_epoch,
                                             "wall_s": self.wall_s}}, sort_keys=True))
        return "\n".join(lines) + "\n"


def early_stop_scan(val_losses: list[float], patience: int,
                    min_delta: float = 1e-4) -> int:
    """Index (1-based epoch) at which training stops for a given loss history.

    Stops after `patience` consecutive epochs without an improvement of at
    least min_delta over the best seen; returns len(val_losses) if it never
    trips.
    """
    best = np.inf
    stale = 0
    for i, v in enumerate(val_losses, start=1):
        if v < best - min_delta:
            best = v
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                return i
    return len(val_losses)


def _batches(n: int, batch_size: int, order=None):
    idx = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield idx[start:start + batch_size]


def evaluate(model, items: list[FeatureBundle], batch_size: int = 64,
             balanced_wa: bool = True) -> dict:
    """Eval-mode loss and metrics over a clip list."""
    if not items:
        raise EmptySplit("cannot evaluate an empty split")
    losses = []
    preds, truth = [], []
    gender_preds, gender_truth = [], []
    with ad.no_grad():
        for sel in _batches(len(items), batch_size):
            batch = stack_batch([items[i] for i in sel])
            res = model.compute(batch, train=False)
            losses.append(res.loss.item() * len(sel))
            preds.append(res.emotion_pred)
            truth.append(batch.emotion)
            if res.gender_pred is not None:
                gender_preds.append(res.gender_pred)
                gender_truth.append(batch.gender)
    preds = np.concatenate(preds)
    truth = np.concatenate(truth)
    wa, wf1 = weighted_metrics(preds, truth, model.cfg.n_classes, balanced=balanced_wa)
    out = {"loss": float(sum(losses) / len(items)), "wa": wa, "wf1": wf1,
           "preds": preds, "truth": truth}
    if gender_preds:
        out["gender_accuracy"] = plain_accuracy(
            np.concatenate(gender_preds), np.concatenate(gender_truth))
    return out


def train(model, train_items: list[FeatureBundle], val_items: list[FeatureBundle],
          cfg: TrainConfig, balanced_wa: bool = True) -> TrainLog:
    """Train in place; on return the model holds the best-val-loss weights."""
    if not train_items:
        raise EmptySplit("empty training split")
    if not val_items:
        raise EmptySplit("empty validation split")
    t0 = time.monotonic()
    params = model.params()
    opt = Adam(params, lr=cfg.lr)
    log = TrainLog()
    best_val = np.inf
    best_state = None
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        shuffle_rng = ad.make_rng(cfg.seed, 1, epoch)
        drop_rng = ad.make_rng(cfg.seed, 2, epoch)
        order = shuffle_rng.permutation(len(train_items))
        total = 0.0
        for sel in _batches(len(train_items), cfg.batch_size, order):
            batch = stack_batch([train_items[i] for i in sel])
            res = model.compute(batch, train=True, rng=drop_rng)
            loss_val = res.loss.item()
            if not np.isfinite(loss_val):
                raise DivergedError(epoch)
            ad.backward(res.loss)
            opt.step()
            opt.zero_grad()
            total += loss_val * len(sel)
        val = evaluate(model, val_items, cfg.batch_size, balanced_wa)
        record = {"epoch": epoch,
                  "train_loss": round(total / len(train_items), 10),
                  "val_loss": round(val["loss"], 10),
                  "val_wa": round(val["wa"], 10),
                  "val_wf1": round(val["wf1"], 10)}
        log.records.append(record)
        if val["loss"] < best_val - cfg.min_delta:
            best_val = val["loss"]
            best_state = ({k: p.data.copy() for k, p in params.items()},
                          {k: b.copy() for k, b in model.buffers().items()})
            log.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    log.stopped_epoch = log.records[-1]["epoch"]
    if best_state is not None:
        state, buffers = best_state
        for k, p in params.items():
            p.data = state[k]
        model.set_buffers(buffers)
    log.wall_s = time.monotonic() - t0
    return log
