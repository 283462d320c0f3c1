"""Frozen speech-encoder registry.

Each model tag maps to a declared embedding width, an output frame rate,
and a Hugging Face checkpoint id. `load_encoder` prefers the real
checkpoint via `transformers`; when torch/transformers are unavailable or
the weights cannot be fetched, it falls back to a deterministic local
reference encoder with the same tensor contract (frames x width at the
declared frame rate), so format and pipeline behavior stay testable
offline. The fallback is clearly labelled in file metadata via
`encoder_impl`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelSpec:
    tag: str
    width: int
    frame_hz: float
    hf_id: str
    layer: str  # which hidden states are exported


MODEL_TAGS = {
    "whisper-base": ModelSpec("whisper-base", 512, 50.0,
                              "openai/whisper-base", "encoder.final"),
    "whisper-medium": ModelSpec("whisper-medium", 1024, 50.0,
                                "openai/whisper-medium", "encoder.final"),
    "wav2vec2": ModelSpec("wav2vec2", 768, 49.9,
                          "facebook/wav2vec2-base-960h", "encoder.final"),
    "hubert": ModelSpec("hubert", 768, 49.9,
                        "facebook/hubert-base-ls960", "encoder.final"),
    "wavlm": ModelSpec("wavlm", 768, 49.9,
                       "microsoft/wavlm-base", "encoder.final"),
}

SAMPLE_RATE = 16000


class UnknownModelTag(Exception):
    pass


class EncoderLoadError(Exception):
    pass


class ReferenceEncoder:
    """Deterministic offline stand-in for a pretrained encoder.

    Log-power frames (25 ms window / frame_hz hop) pass through a fixed
    random projection and tanh, both seeded from the model tag, yielding
    (frames, width) float32 hidden states. Weights are constants: repeated
    calls on the same audio produce identical tensors.
    """

    impl = "reference"

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        seed = int.from_bytes(hashlib.sha256(spec.tag.encode()).digest()[:8],
                              "little")
        rng = np.random.default_rng(seed)
        self._n_fft = 512
        n_freq = self._n_fft // 2 + 1
        self._proj = (rng.standard_normal((n_freq, spec.width))
                      / np.sqrt(n_freq)).astype(np.float32)
        self._bias = rng.standard_normal(spec.width).astype(np.float32) * 0.1

    def encode(self, samples: np.ndarray, sr: int) -> np.ndarray:
        if sr != SAMPLE_RATE:
            raise EncoderLoadError(f"expected {SAMPLE_RATE} Hz audio, got {sr}")
        win = int(0.025 * sr)
        hop = max(1, int(round(sr / self.spec.frame_hz)))
        x = np.asarray(samples, dtype=np.float32)
        if len(x) < win:
            x = np.pad(x, (0, win - len(x)))
        n_frames = 1 + (len(x) - win) // hop
        window = np.hamming(win).astype(np.float32)
        frames = np.stack([x[i * hop:i * hop + win] * window
                           for i in range(n_frames)])
        power = np.abs(np.fft.rfft(frames, n=self._n_fft, axis=1)) ** 2
        feats = np.log(power + 1e-10).astype(np.float32)
        return np.tanh(feats @ self._proj + self._bias)


class HfEncoder:
    """Frozen Hugging Face encoder; exports final encoder hidden states."""

    impl = "huggingface"

    def __init__(self, spec: ModelSpec, model, processor):
        self.spec = spec
        self._model = model.eval()
        self._processor = processor

    def encode(self, samples: np.ndarray, sr: int) -> np.ndarray:
        import torch

        if sr != SAMPLE_RATE:
            raise EncoderLoadError(f"expected {SAMPLE_RATE} Hz audio, got {sr}")
        inputs = self._processor(np.asarray(samples, dtype=np.float32),
                                 sampling_rate=sr, return_tensors="pt")
        with torch.no_grad():
            if self.spec.tag.startswith("whisper"):
                hidden = self._model.encoder(
                    inputs["input_features"]).last_hidden_state
            else:
                hidden = self._model(inputs["input_values"]).last_hidden_state
        out = hidden[0].cpu().numpy().astype(np.float32)
        if out.shape[1] != self.spec.width:
            raise EncoderLoadError(
                f"{self.spec.tag}: loaded width {out.shape[1]} != "
                f"declared {self.spec.width}")
        return out


def _try_load_hf(spec: ModelSpec):
    import torch  # noqa: F401 -- fail fast if torch is absent
    from transformers import AutoModel, AutoProcessor

    if spec.tag.startswith("whisper"):
        from transformers import WhisperModel

        model = WhisperModel.from_pretrained(spec.hf_id)
        processor = AutoProcessor.from_pretrained(spec.hf_id)
        return HfEncoder(spec, model, processor)
    model = AutoModel.from_pretrained(spec.hf_id)
    processor = AutoProcessor.from_pretrained(spec.hf_id)
    return HfEncoder(spec, model, processor)


def load_encoder(tag: str, prefer: str = "auto"):
    """Return an encoder for `tag`.

    prefer="auto" tries the pretrained checkpoint then falls back to the
    reference encoder; "huggingface" requires the checkpoint (raises
    EncoderLoadError otherwise); "reference" skips the download entirely.
    """
    spec = MODEL_TAGS.get(tag)
    if spec is None:
        raise UnknownModelTag(
            f"unknown model tag {tag!r}; known: {sorted(MODEL_TAGS)}")
    if prefer == "reference":
        return ReferenceEncoder(spec)
    try:
        return _try_load_hf(spec)
    except Exception as exc:  # import error, download failure, bad cache
        if prefer == "huggingface":
            raise EncoderLoadError(f"could not load {spec.hf_id}: {exc}") from exc
        return ReferenceEncoder(spec)
