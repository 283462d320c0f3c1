"""Dataset manifests, corpus statistics, and Fleiss-kappa agreement.

Manifest CSV header: clip_path,clip_id,speaker_id,gender,emotion,language,duration_s
JSON-lines manifests use the same field names, one object per line.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError, UndefinedKappa

MANIFEST_FIELDS = ("clip_path", "clip_id", "speaker_id", "gender",
                   "emotion", "language", "duration_s")
GENDERS = ("male", "female")


@dataclass
class ManifestRow:
    clip_path: str
    clip_id: str
    speaker_id: str
    gender: str
    emotion: str
    language: str
    duration_s: float


@dataclass
class Manifest:
    rows: list[ManifestRow]
    emotion_vocab: list[str]     # ordered; labels index into this

    def emotion_index(self, row: ManifestRow) -> int:
        return self.emotion_vocab.index(row.emotion)

    def speakers(self) -> list[str]:
        return sorted({r.speaker_id for r in self.rows})


def load_manifest(path, emotion_vocab: list[str] | None = None) -> Manifest:
    """Load and validate a CSV or JSON-lines manifest; all row problems are
    collected and reported together."""
    path = Path(path)
    raw: list[dict] = []
    if path.suffix.lower() in (".jsonl", ".json"):
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    raw.append(json.loads(line))
    else:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or [])
            if missing:
                raise ManifestError([f"missing columns: {sorted(missing)}"])
            raw = list(reader)

    problems: list[str] = []
    rows: list[ManifestRow] = []
    seen_ids: set[str] = set()
    for i, rec in enumerate(raw, start=1):
        try:
            row = ManifestRow(
                clip_path=str(rec["clip_path"]),
                clip_id=str(rec["clip_id"]),
                speaker_id=str(rec["speaker_id"]),
                gender=str(rec["gender"]).lower(),
                emotion=str(rec["emotion"]),
                language=str(rec.get("language", "")),
                duration_s=float(rec["duration_s"]))
        except (KeyError, ValueError) as exc:
            problems.append(f"row {i}: {exc}")
            continue
        if row.clip_id in seen_ids:
            problems.append(f"row {i}: duplicate clip_id {row.clip_id!r}")
        seen_ids.add(row.clip_id)
        if row.gender not in GENDERS:
            problems.append(f"row {i}: gender must be male/female, got {row.gender!r}")
        if emotion_vocab is not None and row.emotion not in emotion_vocab:
            problems.append(f"row {i}: unknown emotion {row.emotion!r}")
        rows.append(row)
    if problems:
        raise ManifestError(problems)
    vocab = emotion_vocab or sorted({r.emotion for r in rows})
    return Manifest(rows=rows, emotion_vocab=list(vocab))


def fleiss_kappa(matrix) -> float:
    """Chance-corrected agreement for a fixed number of raters per item.

    matrix: (n_items, k_categories) integer counts; every row sums to the
    same ratings_per_item n >= 2.
    """
    m = np.asarray(matrix, dtype=np.int64)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ManifestError([f"annotation matrix needs >=2 items, got shape {m.shape}"])
    n = int(m[0].sum())
    if n < 2 or not np.all(m.sum(axis=1) == n):
        raise ManifestError(["every item needs the same >=2 rating count"])
    p_item = (np.sum(m.astype(np.float64) ** 2, axis=1) - n) / (n * (n - 1))
    p_bar = p_item.mean()
    p_cat = m.sum(axis=0) / m.sum()
    p_e = float(np.sum(p_cat ** 2))
    if p_e >= 1.0:
        raise UndefinedKappa("all rating mass in one category")
    return float((p_bar - p_e) / (1.0 - p_e))


@dataclass
class StatsReport:
    n_clips: int
    total_duration_s: float
    mean_duration_s: float
    emotion_counts: dict[str, int]
    gender_counts: dict[str, int]
    speaker_counts: dict[str, int]   # speakers below threshold grouped as Others
    others_threshold: int
    n_speakers: int

    def to_dict(self) -> dict:
        return {
            "n_clips": self.n_clips,
            "total_duration_s": self.total_duration_s,
            "mean_duration_s": self.mean_duration_s,
            "emotion_counts": self.emotion_counts,
            "gender_counts": self.gender_counts,
            "speaker_counts": self.speaker_counts,
            "others_threshold": self.others_threshold,
            "n_speakers": self.n_speakers,
        }


def corpus_stats(manifest: Manifest, others_threshold: int = 41) -> StatsReport:
    """Histograms and duration stats; rare speakers pool under 'Others'."""
    rows = manifest.rows
    emotion_counts = {e: 0 for e in manifest.emotion_vocab}
    gender_counts = {g: 0 for g in GENDERS}
    per_speaker: dict[str, int] = {}
    total = 0.0
    for r in rows:
        emotion_counts[r.emotion] = emotion_counts.get(r.emotion, 0) + 1
        gender_counts[r.gender] += 1
        per_speaker[r.speaker_id] = per_speaker.get(r.speaker_id, 0) + 1
        total += r.duration_s
    speaker_counts: dict[str, int] = {}
    others = 0
    for spk in sorted(per_speaker):
        if per_speaker[spk] > others_threshold:
            speaker_counts[spk] = per_speaker[spk]
        else:
            others += per_speaker[spk]
    if others:
        speaker_counts["Others"] = others
    return StatsReport(
        n_clips=len(rows),
        total_duration_s=total,
        mean_duration_s=total / len(rows) if rows else 0.0,
        emotion_counts=emotion_counts,
        gender_counts=gender_counts,
        speaker_counts=speaker_counts,
        others_threshold=others_threshold,
        n_speakers=len(per_speaker))
