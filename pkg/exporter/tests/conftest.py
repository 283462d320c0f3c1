import csv
import math
import struct
import wave

import pytest


def write_wav(path, samples, sr=16000):
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sr)
        frames = b"".join(
            struct.pack("<h", max(-32768, min(32767, int(s * 32767))))
            for s in samples)
        fh.writeframes(frames)


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """Three 0.3 s tone clips plus a CSV manifest."""
    root = tmp_path_factory.mktemp("clips")
    rows = []
    sr = 16000
    for i, freq in enumerate((220.0, 440.0, 660.0)):
        clip_id = f"clip{i}"
        path = root / f"{clip_id}.wav"
        samples = [0.5 * math.sin(2 * math.pi * freq * t / sr)
                   for t in range(int(0.3 * sr))]
        write_wav(path, samples, sr)
        rows.append({"clip_id": clip_id, "clip_path": str(path)})
    manifest = root / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["clip_id", "clip_path"])
        writer.writeheader()
        writer.writerows(rows)
    return manifest, rows
