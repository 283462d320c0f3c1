"""Exporter unit tests: format, determinism, pooling, failure handling."""

import json

import numpy as np
import pytest

from embed_exporter.export import (ExportJob, ManifestError, read_manifest,
                                   read_wav, run_export)
from embed_exporter.models import (MODEL_TAGS, ReferenceEncoder,
                                   UnknownModelTag, load_encoder)
from embed_exporter.tensorfile import CorruptFile, read_tensor, write_tensor


def test_tensorfile_round_trip(tmp_path):
    arr = np.arange(12, dtype=np.float32).reshape(3, 4)
    write_tensor(tmp_path / "t.cmlt", arr, {"clip_id": "c0"})
    back, meta = read_tensor(tmp_path / "t.cmlt")
    np.testing.assert_array_equal(back, arr)
    assert meta == {"clip_id": "c0"}


def test_tensorfile_crc_detects_flip(tmp_path):
    write_tensor(tmp_path / "t.cmlt", np.ones(4, dtype=np.float32))
    blob = bytearray((tmp_path / "t.cmlt").read_bytes())
    blob[-6] ^= 0x01
    (tmp_path / "t.cmlt").write_bytes(bytes(blob))
    with pytest.raises(CorruptFile):
        read_tensor(tmp_path / "t.cmlt")


def test_unknown_tag_rejected(tmp_path):
    with pytest.raises(UnknownModelTag):
        ExportJob(manifest="m.csv", model_tag="nope", out_dir=str(tmp_path))
    with pytest.raises(UnknownModelTag):
        load_encoder("nope")


def test_bad_pooling_rejected(tmp_path):
    with pytest.raises(ValueError):
        ExportJob(manifest="m.csv", model_tag="wavlm",
                  out_dir=str(tmp_path), pooling="max")


def test_manifest_requires_columns(tmp_path):
    bad = tmp_path / "m.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ManifestError):
        read_manifest(bad)


def test_read_wav_matches_written(tiny_manifest):
    _, rows = tiny_manifest
    samples, sr = read_wav(rows[0]["clip_path"])
    assert sr == 16000
    assert samples.dtype == np.float32
    assert len(samples) == int(0.3 * 16000)
    assert np.abs(samples).max() <= 1.0


def test_reference_encoder_shapes_and_determinism():
    rng = np.random.default_rng(5)
    audio = rng.standard_normal(8000).astype(np.float32)
    for tag, spec in MODEL_TAGS.items():
        enc = ReferenceEncoder(spec)
        out = enc.encode(audio, 16000)
        assert out.ndim == 2 and out.shape[1] == spec.width
        assert out.dtype == np.float32
        np.testing.assert_array_equal(out, enc.encode(audio, 16000))


def test_reference_encoders_differ_across_tags():
    audio = np.random.default_rng(6).standard_normal(8000).astype(np.float32)
    a = load_encoder("hubert", prefer="reference").encode(audio, 16000)
    b = load_encoder("wavlm", prefer="reference").encode(audio, 16000)
    assert a.shape == b.shape
    assert not np.allclose(a, b)


def test_export_writes_index_and_files(tiny_manifest, tmp_path):
    manifest, rows = tiny_manifest
    job = ExportJob(manifest=str(manifest), model_tag="whisper-base",
                    out_dir=str(tmp_path / "out"), prefer="reference")
    index = run_export(job)
    assert index["failed"] == {}
    assert set(index["clips"]) == {r["clip_id"] for r in rows}
    on_disk = json.loads((tmp_path / "out" / "index.json").read_text())
    assert on_disk == index
    for clip_id, entry in index["clips"].items():
        arr, meta = read_tensor(tmp_path / "out" / entry["file"])
        assert list(arr.shape) == entry["shape"]
        assert arr.shape[1] == 512  # declared whisper-base width
        assert meta["clip_id"] == clip_id
        assert meta["source_tag"] == "whisper-base"


def test_export_mean_pooling_rank_and_consistency(tiny_manifest, tmp_path):
    manifest, rows = tiny_manifest
    full = run_export(ExportJob(manifest=str(manifest), model_tag="hubert",
                                out_dir=str(tmp_path / "full"),
                                pooling="none", prefer="reference"))
    pooled = run_export(ExportJob(manifest=str(manifest), model_tag="hubert",
                                  out_dir=str(tmp_path / "mean"),
                                  pooling="mean", prefer="reference"))
    for clip_id in full["clips"]:
        mat, _ = read_tensor(tmp_path / "full" / f"{clip_id}.cmlt")
        vec, meta = read_tensor(tmp_path / "mean" / f"{clip_id}.cmlt")
        assert mat.ndim == 2 and vec.ndim == 1
        assert meta["pooling"] == "mean"
        np.testing.assert_allclose(vec, mat.mean(axis=0), atol=1e-5)
    assert pooled["failed"] == {}


def test_export_collects_per_clip_failures(tiny_manifest, tmp_path):
    manifest, rows = tiny_manifest
    broken = tmp_path / "broken.csv"
    lines = ["clip_id,clip_path", f"{rows[0]['clip_id']},{rows[0]['clip_path']}",
             "missing,/nonexistent/clip.wav"]
    broken.write_text("\n".join(lines) + "\n")
    index = run_export(ExportJob(manifest=str(broken), model_tag="wavlm",
                                 out_dir=str(tmp_path / "out"),
                                 prefer="reference"))
    assert set(index["clips"]) == {rows[0]["clip_id"]}
    assert set(index["failed"]) == {"missing"}
    # partial index still written
    assert (tmp_path / "out" / "index.json").exists()


def test_repeated_export_identical_bytes(tiny_manifest, tmp_path):
    manifest, rows = tiny_manifest
    for d in ("a", "b"):
        run_export(ExportJob(manifest=str(manifest), model_tag="wav2vec2",
                             out_dir=str(tmp_path / d), prefer="reference"))
    for row in rows:
        fname = f"{row['clip_id']}.cmlt"
        assert (tmp_path / "a" / fname).read_bytes() == \
            (tmp_path / "b" / fname).read_bytes()
