"""Speaker-disjoint 10-fold cross-validation with a runtime leak check.

Each fold's evaluation speakers never appear in its training stream; a slice
of training speakers is held out inside each fold for early stopping so the
test fold itself never steers training.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, InsufficientSpeakers, SpeakerLeakError
from .metrics import confusion_matrix
from .model import FeatureBundle, ModelConfig, build_model
from .training import TrainConfig, TrainLog, evaluate, train


@dataclass
class FoldPlan:
    folds: list[list[str]]       # speaker ids per fold
    dataset_id: str = ""
    construction_seed: int = 0

    def all_speakers(self) -> set[str]:
        return set().union(*map(set, self.folds))


def build_fold_plan(speakers: list[str], k: int = 10, dataset_id: str = "",
                    construction_seed: int = 0) -> FoldPlan:
    """Sort speakers lexicographically, deal round-robin into k folds."""
    unique = sorted(set(speakers))
    if len(unique) < k:
        raise InsufficientSpeakers(f"{len(unique)} speakers < {k} folds")
    folds: list[list[str]] = [[] for _ in range(k)]
    for i, spk in enumerate(unique):
        folds[i % k].append(spk)
    return FoldPlan(folds=folds, dataset_id=dataset_id,
                    construction_seed=construction_seed)


@dataclass
class EvalReport:
    fold_results: list[dict]     # per fold: wa, wf1, gender_accuracy, sizes
    mean: dict
    confusions: list[list[list[int]]]   # per-fold confusion matrices
    config_fingerprint: str
    mode: str
    n_classes: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def config_fingerprint(model_cfg: ModelConfig, train_cfg: TrainConfig,
                       plan: FoldPlan) -> str:
    payload = json.dumps({"model": asdict(model_cfg), "train": asdict(train_cfg),
                          "plan": asdict(plan)}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _split_validation_speakers(train_speakers: list[str], seed: int, fold: int) -> set[str]:
    """Hold out ~10% of training speakers (at least one) for early stopping."""
    ordered = sorted(train_speakers)
    rng = ad.make_rng(seed, 3, fold)
    n_val = max(1, round(0.1 * len(ordered)))
    picks = rng.choice(len(ordered), size=n_val, replace=False)
    return {ordered[i] for i in picks}


def run_fold(fold_idx: int, plan: FoldPlan, bundles: list[FeatureBundle],
             model_cfg: ModelConfig, train_cfg: TrainConfig,
             balanced_wa: bool = True) -> tuple[dict, np.ndarray, TrainLog, object]:
    """Train on all other folds' speakers, evaluate on this fold's."""
    eval_speakers = set(plan.folds[fold_idx])
    train_speakers = set()
    for j, fold in enumerate(plan.folds):
        if j != fold_idx:
            train_speakers.update(fold)
    train_pool = [b for b in bundles if b.speaker_id in train_speakers]
    # runtime leak check: no clip of an eval speaker may enter the training
    # stream, whatever the plan claims
    for b in train_pool:
        if b.speaker_id in eval_speakers:
            raise SpeakerLeakError(
                f"speaker {b.speaker_id!r} is in fold {fold_idx} and its training stream")
    val_speakers = _split_validation_speakers(sorted({b.speaker_id for b in train_pool}),
                                              train_cfg.seed, fold_idx)
    train_items = [b for b in train_pool if b.speaker_id not in val_speakers]
    val_items = [b for b in train_pool if b.speaker_id in val_speakers]
    eval_items = [b for b in bundles if b.speaker_id in eval_speakers]

    model = build_model(model_cfg, ad.make_rng(train_cfg.seed, 4, fold_idx))
    fold_cfg = TrainConfig(batch_size=train_cfg.batch_size, lr=train_cfg.lr,
                           max_epochs=train_cfg.max_epochs, patience=train_cfg.patience,
                           min_delta=train_cfg.min_delta,
                           seed=int(ad.make_rng(train_cfg.seed, 5, fold_idx).integers(2 ** 31)))
    log = train(model, train_items, val_items, fold_cfg, balanced_wa)
    result = evaluate(model, eval_items, train_cfg.batch_size, balanced_wa)
    cm = confusion_matrix(result["preds"], result["truth"], model_cfg.n_classes)
    record = {"fold": fold_idx, "wa": result["wa"], "wf1": result["wf1"],
              "n_eval_clips": len(eval_items), "n_train_clips": len(train_items),
              "n_val_clips": len(val_items), "stopped_epoch": log.stopped_epoch}
    if "gender_accuracy" in result:
        record["gender_accuracy"] = result["gender_accuracy"]
    return record, cm, log, model


def export_embeddings(model, bundles: list[FeatureBundle], out_dir,
                      fingerprint: str = "", batch_size: int = 64) -> list[dict]:
    """Write one fused-embedding tensor file per clip plus a label CSV for
    external projection tooling (e.g. t-SNE)."""
    import csv

    from pathlib import Path

    from .model import stack_batch
    from .tensorfile import write_tensor

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = []
    for start in range(0, len(bundles), batch_size):
        chunk = bundles[start:start + batch_size]
        with ad.no_grad():
            res = model.compute(stack_batch(chunk), train=False)
        if res.fused is None:
            raise ConfigError("model mode has no fused embedding to export")
        fused = res.fused.data
        for i, b in enumerate(chunk):
            path = out_dir / f"{b.clip_id}.cmlt"
            # stored as a (1, width) matrix so the embedding reader accepts it
            write_tensor(path, fused[i][None, :], metadata={
                "clip_id": b.clip_id, "kind": "fused_embedding",
                "fingerprint": fingerprint})
            index.append({"clip_id": b.clip_id, "emotion": b.emotion,
                          "gender": b.gender, "speaker": b.speaker_id})
    with open(out_dir / "labels.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["clip_id", "emotion", "gender", "speaker"])
        writer.writeheader()
        writer.writerows(index)
    return index


def run_crossval(bundles: list[FeatureBundle], model_cfg: ModelConfig,
                 train_cfg: TrainConfig, plan: FoldPlan | None = None,
                 k: int = 10, balanced_wa: bool = True, jobs: int = 1,
                 dataset_id: str = "") -> tuple[EvalReport, list[TrainLog]]:
    if plan is None:
        plan = build_fold_plan(sorted({b.speaker_id for b in bundles}), k=k,
                               dataset_id=dataset_id,
                               construction_seed=train_cfg.seed)
    n_folds = len(plan.folds)

    def work(i):
        record, cm, log, _ = run_fold(i, plan, bundles, model_cfg, train_cfg, balanced_wa)
        return record, cm, log

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(work, range(n_folds)))
    else:
        outcomes = [work(i) for i in range(n_folds)]

    records = [o[0] for o in outcomes]
    confusions = [o[1].tolist() for o in outcomes]
    logs = [o[2] for o in outcomes]
    mean = {}
    for key in ("wa", "wf1", "gender_accuracy"):
        vals = [r[key] for r in records if key in r]
        if len(vals) == n_folds:
            mean[key] = float(np.mean(vals))
    report = EvalReport(
        fold_results=records, mean=mean, confusions=confusions,
        config_fingerprint=config_fingerprint(model_cfg, train_cfg, plan),
        mode=model_cfg.mode, n_classes=model_cfg.n_classes)
    return report, logs
