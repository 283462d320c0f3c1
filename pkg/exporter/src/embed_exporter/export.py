"""Batch export of encoder hidden states for every clip in a manifest."""

from __future__ import annotations

import csv
import json
import os
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import MODEL_TAGS, UnknownModelTag, load_encoder
from .tensorfile import write_tensor


class ManifestError(Exception):
    pass


@dataclass(frozen=True)
class ExportJob:
    manifest: str
    model_tag: str
    out_dir: str
    pooling: str = "none"  # none -> rank-2 (frames, width); mean -> rank-1 (width,)
    prefer: str = "auto"   # encoder source: auto | huggingface | reference

    def __post_init__(self):
        if self.model_tag not in MODEL_TAGS:
            raise UnknownModelTag(
                f"unknown model tag {self.model_tag!r}; "
                f"known: {sorted(MODEL_TAGS)}")
        if self.pooling not in ("none", "mean"):
            raise ValueError(f"pooling must be 'none' or 'mean', got {self.pooling!r}")


def read_manifest(path) -> list[dict]:
    """Read clip rows (clip_id, clip_path) from a CSV manifest."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"clip_id", "clip_path"} <= set(
                reader.fieldnames):
            raise ManifestError(
                f"{path}: manifest needs clip_id and clip_path columns")
        rows = list(reader)
    if not rows:
        raise ManifestError(f"{path}: empty manifest")
    return rows


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono 16-bit PCM WAV as float32 in [-1, 1]."""
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2 or fh.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono 16-bit PCM")
        sr = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    return samples, sr


def run_export(job: ExportJob) -> dict:
    """Export one tensor file per clip; write and return the index JSON.

    Per-clip failures do not abort the batch: they are collected under the
    index's `failed` section and the partial index is still written.
    """
    rows = read_manifest(job.manifest)
    encoder = load_encoder(job.model_tag, prefer=job.prefer)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    spec = MODEL_TAGS[job.model_tag]
    index = {"model_tag": job.model_tag, "width": spec.width,
             "layer": spec.layer, "pooling": job.pooling,
             "encoder_impl": encoder.impl, "clips": {}, "failed": {}}
    for row in rows:
        clip_id = row["clip_id"]
        try:
            samples, sr = read_wav(row["clip_path"])
            hidden = encoder.encode(samples, sr)
            if job.pooling == "mean":
                hidden = hidden.mean(axis=0)
            meta = {"clip_id": clip_id, "source_tag": job.model_tag,
                    "layer": spec.layer, "pooling": job.pooling,
                    "encoder_impl": encoder.impl}
            fname = f"{clip_id}.cmlt"
            write_tensor(out_dir / fname, hidden, meta)
            index["clips"][clip_id] = {"file": fname,
                                       "shape": list(hidden.shape)}
        except Exception as exc:
            index["failed"][clip_id] = str(exc)

    tmp = out_dir / "index.json.tmp"
    with open(tmp, "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
    os.replace(tmp, out_dir / "index.json")
    return index
