"""CLI behavior: exit codes, index on disk, failure reporting."""

import json

from embed_exporter.cli import main


def test_cli_export_success(tiny_manifest, tmp_path, capsys):
    manifest, rows = tiny_manifest
    rc = main(["export", "--manifest", str(manifest), "--model",
               "whisper-base", "--pooling", "mean", "--out",
               str(tmp_path / "out"), "--encoder-impl", "reference"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "exported 3 clips" in out
    index = json.loads((tmp_path / "out" / "index.json").read_text())
    assert index["pooling"] == "mean"
    assert index["width"] == 512


def test_cli_missing_manifest_exits_1(tmp_path, capsys):
    rc = main(["export", "--manifest", str(tmp_path / "nope.csv"),
               "--model", "wavlm", "--out", str(tmp_path / "out")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_cli_partial_failure_exits_2(tiny_manifest, tmp_path, capsys):
    manifest, rows = tiny_manifest
    broken = tmp_path / "broken.csv"
    broken.write_text("clip_id,clip_path\n"
                      f"{rows[0]['clip_id']},{rows[0]['clip_path']}\n"
                      "missing,/nonexistent.wav\n")
    rc = main(["export", "--manifest", str(broken), "--model", "hubert",
               "--out", str(tmp_path / "out"), "--encoder-impl", "reference"])
    assert rc == 2
    assert "failed missing" in capsys.readouterr().err
