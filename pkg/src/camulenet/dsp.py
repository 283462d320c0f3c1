"""Frequency-domain frontend: WAV ingest, preprocessing, STFT spectrogram,
HTK-style MFCCs.

All functions are pure; the same clip and config always produce bit-identical
output.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import ConfigError, CorruptAudio, EmptyAudio

SUPPORTED_RATES = (8000, 16000, 22050, 44100)
LOG_EPS = 1e-10


@dataclass
class AudioClip:
    samples: np.ndarray          # float64 mono, peak <= 1 after preprocess
    sample_rate: int
    clip_id: str = ""
    speaker_id: str = ""
    gender: str = ""             # "male" | "female"
    emotion: int = -1
    language: str = ""


@dataclass
class Spectrogram:
    values: np.ndarray           # (frames, n_fft//2 + 1) log10 power
    frame_hop_s: float
    window_s: float
    n_fft: int


@dataclass
class MfccMatrix:
    values: np.ndarray           # (frames, n_mfcc)
    hop_samples: int


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read 16/32-bit PCM WAV; stereo is downmixed by channel averaging."""
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise CorruptAudio(f"{path}: unreadable WAV ({exc})") from exc
    if width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 4:
        data = np.frombuffer(raw, dtype="<i4").astype(np.float64) / 2147483648.0
    else:
        raise CorruptAudio(f"{path}: unsupported sample width {width} bytes")
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    return data, rate


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """16-bit PCM writer (synthetic corpora and round-trip tests)."""
    pcm = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = (pcm * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def _resample_linear(samples: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    if src_rate == dst_rate:
        return samples
    n_out = int(round(len(samples) * dst_rate / src_rate))
    t_src = np.arange(len(samples)) / src_rate
    t_dst = np.arange(n_out) / dst_rate
    return np.interp(t_dst, t_src, samples)


def preprocess(raw: AudioClip, target_sr: int = 16000, target_len_s: float = 10.0) -> AudioClip:
    """Resample, remove DC offset, peak-normalize, fix length by pad/truncate."""
    samples = np.asarray(raw.samples, dtype=np.float64)
    if samples.size == 0:
        raise EmptyAudio(f"clip {raw.clip_id!r} has no samples")
    if not np.all(np.isfinite(samples)):
        raise CorruptAudio(f"clip {raw.clip_id!r} contains non-finite samples")
    if target_sr not in SUPPORTED_RATES:
        raise ConfigError(f"unsupported target sample rate {target_sr}")
    samples = _resample_linear(samples, raw.sample_rate, target_sr)
    samples = samples - samples.mean()
    peak = np.abs(samples).max()
    if peak > 0:
        samples = samples / peak
    n_target = int(round(target_sr * target_len_s))
    if len(samples) >= n_target:
        samples = samples[:n_target]
    else:
        samples = np.pad(samples, (0, n_target - len(samples)))
    return AudioClip(samples=samples, sample_rate=target_sr, clip_id=raw.clip_id,
                     speaker_id=raw.speaker_id, gender=raw.gender,
                     emotion=raw.emotion, language=raw.language)


def hamming(n: int) -> np.ndarray:
    """w[k] = 0.54 - 0.46 cos(2 pi k / (n-1))."""
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


def _frame(samples: np.ndarray, win_len: int, hop_len: int) -> np.ndarray:
    n_frames = 1 + (len(samples) - win_len) // hop_len
    if n_frames < 1:
        raise ConfigError(f"clip of {len(samples)} samples shorter than window {win_len}")
    idx = np.arange(win_len)[None, :] + hop_len * np.arange(n_frames)[:, None]
    return samples[idx]


def power_spectrum(samples: np.ndarray, win_len: int, hop_len: int, n_fft: int) -> np.ndarray:
    """(frames, n_fft//2+1) magnitude-squared spectrum of Hamming-windowed frames."""
    if n_fft < win_len:
        raise ConfigError(f"n_fft {n_fft} smaller than window length {win_len}")
    frames = _frame(samples, win_len, hop_len) * hamming(win_len)
    return np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2


def stft_spectrogram(clip: AudioClip, window_ms: float = 40.0, hop_ms: float = 10.0,
                     n_fft: int = 800) -> Spectrogram:
    """Log-power Hamming-window spectrogram; frames zero-padded to n_fft."""
    win_len = int(round(clip.sample_rate * window_ms / 1000.0))
    hop_len = int(round(clip.sample_rate * hop_ms / 1000.0))
    power = power_spectrum(clip.samples, win_len, hop_len, n_fft)
    return Spectrogram(values=np.log10(power + LOG_EPS),
                       frame_hop_s=hop_ms / 1000.0,
                       window_s=window_ms / 1000.0,
                       n_fft=n_fft)


def hz_to_mel(f):
    """HTK convention: mel(f) = 2595 log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """(n_mels, n_fft//2+1) triangular filters, mel-spaced from 0 Hz to sr/2."""
    edges_mel = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2)
    edges_hz = mel_to_hz(edges_mel)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    bank = np.zeros((n_mels, len(bin_freqs)))
    for i in range(n_mels):
        lo, center, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        up = (bin_freqs - lo) / (center - lo)
        down = (hi - bin_freqs) / (hi - center)
        bank[i] = np.maximum(0.0, np.minimum(up, down))
    return bank


def mfcc(clip: AudioClip, n_mfcc: int = 40, hop_samples: int = 160,
         n_mels: int = 64, win_samples: int = 400, n_fft: int = 512) -> MfccMatrix:
    """Power spectrum -> HTK mel filterbank -> log -> orthonormal DCT-II."""
    if n_mfcc > n_mels:
        raise ConfigError(f"n_mfcc {n_mfcc} > n_mels {n_mels}")
    power = power_spectrum(clip.samples, win_samples, hop_samples, n_fft)
    bank = mel_filterbank(n_mels, n_fft, clip.sample_rate)
    mel_energy = power @ bank.T
    log_mel = np.log(mel_energy + LOG_EPS)
    coeffs = scipy.fft.dct(log_mel, type=2, norm="ortho", axis=1)[:, :n_mfcc]
    return MfccMatrix(values=coeffs, hop_samples=hop_samples)
