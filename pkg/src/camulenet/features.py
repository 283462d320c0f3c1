"""Turns manifest rows into model-ready feature bundles.

The pretrained-frame source is pluggable: a directory of exporter-produced
tensor files, or the built-in frozen tiny encoder so the pipeline runs fully
self-contained.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import Manifest, ManifestRow
from .dsp import AudioClip, mfcc, preprocess, read_wav, stft_spectrogram
from .encoders import (PRESET_INPUT_SIZE, load_pretrained_embedding,
                       prepare_spectrogram, reference_tiny_encoder)
from .errors import ConfigError
from .model import FeatureBundle

GENDER_INDEX = {"male": 0, "female": 1}


@dataclass
class DspConfig:
    target_sr: int = 16000
    target_len_s: float = 10.0
    window_ms: float = 40.0
    hop_ms: float = 10.0
    n_fft: int = 800
    n_mfcc: int = 40
    mfcc_hop: int = 160
    n_mels: int = 64
    mfcc_win: int = 400
    mfcc_n_fft: int = 512


class TinyEncoderSource:
    """Frozen deterministic stand-in for external pretrained frames."""

    def __init__(self, L: int, W: int, seed: int):
        self.L, self.W, self.seed = L, W, seed
        self.source_tag = f"tiny-L{L}-W{W}"

    def frames(self, clip: AudioClip, row: ManifestRow) -> np.ndarray:
        return reference_tiny_encoder(clip, self.L, self.W, self.seed).matrix


class DirectorySource:
    """Reads `<root>/<clip_id>.cmlt` files written by an exporter."""

    def __init__(self, root):
        self.root = Path(root)
        self.source_tag = self.root.name

    def frames(self, clip: AudioClip, row: ManifestRow) -> np.ndarray:
        path = self.root / f"{row.clip_id}.cmlt"
        return load_pretrained_embedding(path, expected_clip_id=row.clip_id).matrix


def load_clip(row: ManifestRow, dsp_cfg: DspConfig, audio_root=None) -> AudioClip:
    path = Path(row.clip_path)
    if audio_root is not None and not path.is_absolute():
        path = Path(audio_root) / path
    samples, rate = read_wav(path)
    raw = AudioClip(samples=samples, sample_rate=rate, clip_id=row.clip_id,
                    speaker_id=row.speaker_id, gender=row.gender,
                    emotion=-1, language=row.language)
    return preprocess(raw, target_sr=dsp_cfg.target_sr, target_len_s=dsp_cfg.target_len_s)


def bundle_for_clip(clip: AudioClip, row: ManifestRow, manifest: Manifest,
                    dsp_cfg: DspConfig, xw_source, preset: Optional[str]) -> FeatureBundle:
    """Compute one clip's features; preset None skips the frequency branch
    (baseline mode needs only the pretrained frames)."""
    x_w = xw_source.frames(clip, row).astype(np.float32)
    spec_image = None
    mfcc_values = None
    if preset is not None:
        if preset not in PRESET_INPUT_SIZE:
            raise ConfigError(f"unknown CNN preset {preset!r}")
        spec = stft_spectrogram(clip, window_ms=dsp_cfg.window_ms,
                                hop_ms=dsp_cfg.hop_ms, n_fft=dsp_cfg.n_fft)
        spec_image = prepare_spectrogram(spec, PRESET_INPUT_SIZE[preset]).astype(np.float32)
        m = mfcc(clip, n_mfcc=dsp_cfg.n_mfcc, hop_samples=dsp_cfg.mfcc_hop,
                 n_mels=dsp_cfg.n_mels, win_samples=dsp_cfg.mfcc_win,
                 n_fft=dsp_cfg.mfcc_n_fft)
        mfcc_values = m.values.astype(np.float32)
    return FeatureBundle(
        clip_id=row.clip_id, speaker_id=row.speaker_id,
        emotion=manifest.emotion_index(row), gender=GENDER_INDEX[row.gender],
        spec_image=spec_image, mfcc=mfcc_values, x_w=x_w)


def build_bundles(manifest: Manifest, dsp_cfg: DspConfig, xw_source,
                  preset: Optional[str], audio_root=None) -> list[FeatureBundle]:
    bundles = []
    for row in manifest.rows:
        clip = load_clip(row, dsp_cfg, audio_root)
        bundles.append(bundle_for_clip(clip, row, manifest, dsp_cfg, xw_source, preset))
    return bundles
