"""Command-line entry point.

Subcommands: featurize, train, crossval, kappa, stats, export-embeddings.
Exit codes: 0 success, 1 input/processing failure, 2 speaker-leak abort,
3 training divergence.  The feature cache root can be set with the
CAMULENET_CACHE environment variable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import RunConfig, load_run_config
from .crossval import export_embeddings, run_crossval
from .dataset import corpus_stats, fleiss_kappa, load_manifest
from .dsp import mfcc, stft_spectrogram
from .errors import CamulenetError, DivergedError, SpeakerLeakError
from .features import (DirectorySource, TinyEncoderSource, build_bundles,
                       load_clip)
from .model import build_model, load_model, save_model
from .reporting import format_report_table, write_eval_report, write_stats_report
from .tensorfile import read_tensor, write_tensor
from .training import train as train_loop, evaluate


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", default=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--folds", dest="n_folds", type=int, default=None)
    p.add_argument("--embeddings", dest="embeddings_dir", default=None,
                   help="directory of exported pretrained-frame tensor files")
    p.add_argument("--tiny-encoder", nargs="*", metavar="K=V", default=None,
                   help="use the built-in frozen encoder, e.g. --tiny-encoder L=64 W=32")


def _build_config(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in
                 ("seed", "mode", "preset", "jobs", "batch_size", "lr",
                  "max_epochs", "patience", "n_folds", "embeddings_dir")}
    if getattr(args, "tiny_encoder", None) is not None:
        for kv in args.tiny_encoder:
            key, _, val = kv.partition("=")
            if key not in ("L", "W"):
                raise CamulenetError(f"--tiny-encoder accepts L=.. W=.., got {kv!r}")
            overrides[f"tiny_{key}"] = int(val)
        overrides["embeddings_dir"] = None
    return load_run_config(getattr(args, "config", None), overrides)


def _xw_source(cfg: RunConfig):
    if cfg.embeddings_dir:
        return DirectorySource(cfg.embeddings_dir)
    return TinyEncoderSource(cfg.tiny_L, cfg.tiny_W, cfg.seed)


def _load_bundles(cfg: RunConfig, manifest_path, need_frequency: bool = True):
    manifest = load_manifest(manifest_path)
    source = _xw_source(cfg)
    preset = cfg.preset if (need_frequency and cfg.mode != "baseline") else None
    bundles = build_bundles(manifest, cfg.dsp, source, preset)
    return manifest, bundles


def _write_resolved_config(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"config": asdict(cfg), "fingerprint": cfg.fingerprint()}
    (out_dir / "resolved_config.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n")


def cmd_featurize(args) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out or os.environ.get("CAMULENET_CACHE", "feature_cache"))
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(args.manifest)
    dsp_fp = hashlib.sha256(
        json.dumps(asdict(cfg.dsp), sort_keys=True).encode()).hexdigest()[:16]
    failures = []
    written = skipped = 0
    for row in manifest.rows:
        try:
            content = hashlib.sha256(
                Path(row.clip_path).read_bytes() + dsp_fp.encode()).hexdigest()[:16]
            targets = {"spec": out_dir / f"{row.clip_id}.spec.cmlt",
                       "mfcc": out_dir / f"{row.clip_id}.mfcc.cmlt"}
            if all(_cached_ok(p, content) for p in targets.values()):
                skipped += len(targets)
                continue
            clip = load_clip(row, cfg.dsp)
            spec = stft_spectrogram(clip, window_ms=cfg.dsp.window_ms,
                                    hop_ms=cfg.dsp.hop_ms, n_fft=cfg.dsp.n_fft)
            m = mfcc(clip, n_mfcc=cfg.dsp.n_mfcc, hop_samples=cfg.dsp.mfcc_hop,
                     n_mels=cfg.dsp.n_mels, win_samples=cfg.dsp.mfcc_win,
                     n_fft=cfg.dsp.mfcc_n_fft)
            meta = {"clip_id": row.clip_id, "content_hash": content,
                    "fingerprint": cfg.fingerprint()}
            write_tensor(targets["spec"], spec.values.astype(np.float32),
                         {**meta, "kind": "spectrogram"})
            write_tensor(targets["mfcc"], m.values.astype(np.float32),
                         {**meta, "kind": "mfcc"})
            written += len(targets)
        except CamulenetError as exc:
            failures.append(f"{row.clip_id}: {exc}")
    print(f"featurize: wrote {written} files, skipped {skipped} up-to-date")
    if failures:
        for f in failures:
            print(f"FAILED {f}", file=sys.stderr)
        return 1
    return 0


def _cached_ok(path: Path, content_hash: str) -> bool:
    if not path.exists():
        return False
    try:
        _, meta = read_tensor(path)
    except CamulenetError:
        return False
    return meta.get("content_hash") == content_hash


def cmd_train(args) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out)
    manifest, bundles = _load_bundles(cfg, args.manifest)
    _write_resolved_config(cfg, out_dir)
    speakers = sorted({b.speaker_id for b in bundles})
    rng = ad.make_rng(cfg.seed, 6)
    n_val = max(1, round(0.1 * len(speakers)))
    val_speakers = {speakers[i] for i in rng.choice(len(speakers), n_val, replace=False)}
    train_items = [b for b in bundles if b.speaker_id not in val_speakers]
    val_items = [b for b in bundles if b.speaker_id in val_speakers]
    L, W = bundles[0].x_w.shape
    model = build_model(cfg.model_config(len(manifest.emotion_vocab), L, W),
                        ad.make_rng(cfg.seed, 7))
    try:
        log = train_loop(model, train_items, val_items, cfg.train_config(),
                         cfg.balanced_wa)
    except DivergedError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 3
    save_model(out_dir / "checkpoint.cmck", model)
    (out_dir / "trainlog.jsonl").write_text(log.to_jsonl())
    val = evaluate(model, val_items, cfg.batch_size, cfg.balanced_wa)
    print(f"train: stopped at epoch {log.stopped_epoch}, "
          f"val WA {val['wa']:.3f} WF1 {val['wf1']:.3f}")
    return 0


def cmd_crossval(args) -> int:
    cfg = _build_config(args)
    out_dir = Path(args.out)
    manifest, bundles = _load_bundles(cfg, args.manifest)
    _write_resolved_config(cfg, out_dir)
    L, W = bundles[0].x_w.shape
    model_cfg = cfg.model_config(len(manifest.emotion_vocab), L, W)
    try:
        report, logs = run_crossval(bundles, model_cfg, cfg.train_config(),
                                    k=cfg.n_folds, balanced_wa=cfg.balanced_wa,
                                    jobs=cfg.jobs, dataset_id=str(args.manifest))
    except SpeakerLeakError as exc:
        print(f"speaker leak: {exc}", file=sys.stderr)
        return 2
    except DivergedError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 3
    write_eval_report(report, logs, out_dir)
    print(format_report_table(report))
    return 0


def cmd_kappa(args) -> int:
    with open(args.annotations, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    drop_first = bool(header) and header[0].lower() in ("item", "item_id", "clip_id")
    matrix = [[int(x) for x in (row[1:] if drop_first else row)] for row in data]
    kappa = fleiss_kappa(np.array(matrix))
    payload = {"fleiss_kappa": kappa, "n_items": len(matrix)}
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_stats(args) -> int:
    manifest = load_manifest(args.manifest)
    stats = corpus_stats(manifest, others_threshold=args.others_threshold)
    if args.out:
        write_stats_report(stats, Path(args.out))
    print(json.dumps(stats.to_dict(), sort_keys=True, indent=2))
    return 0


def cmd_export_embeddings(args) -> int:
    cfg = _build_config(args)
    model = load_model(args.checkpoint)
    cfg.mode = model.cfg.mode
    manifest, bundles = _load_bundles(cfg, args.manifest)
    index = export_embeddings(model, bundles, Path(args.out),
                              fingerprint=cfg.fingerprint(),
                              batch_size=cfg.batch_size)
    print(f"export-embeddings: wrote {len(index)} files to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="camulenet",
        description="Speech emotion recognition with co-attention fusion and "
                    "speaker-disjoint cross-validation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="cache spectrogram + MFCC tensors per clip")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="cache dir (default $CAMULENET_CACHE)")
    _add_common(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="single train/val split training run")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("crossval", help="speaker-disjoint k-fold cross-validation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("kappa", help="Fleiss kappa from an annotation-count CSV")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("stats", help="corpus statistics from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--others-threshold", type=int, default=41)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export-embeddings", help="dump fused embeddings per clip")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_export_embeddings)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CamulenetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
