"""Report emission: deterministic JSON/CSV artifacts plus rendered figures.

The JSON and CSV outputs are byte-stable for a given config fingerprint;
figures are a convenience layer on top and carry no additional data.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .crossval import EvalReport
from .dataset import StatsReport


def format_report_table(report: EvalReport) -> str:
    """Mean-metric row in the style of a benchmark comparison table."""
    cols = [f"mode={report.mode}"]
    cols.append(f"WA {report.mean.get('wa', float('nan')):.3f}")
    cols.append(f"WF1 {report.mean.get('wf1', float('nan')):.3f}")
    if "gender_accuracy" in report.mean:
        cols.append(f"GenderAcc {report.mean['gender_accuracy']:.3f}")
    header = f"{'fold':>4} {'WA':>7} {'WF1':>7}"
    lines = [" | ".join(cols), header, "-" * len(header)]
    for r in report.fold_results:
        lines.append(f"{r['fold']:>4} {r['wa']:>7.3f} {r['wf1']:>7.3f}")
    return "\n".join(lines)


def _write_confusion_csv(path, cm) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["truth\\pred"] + list(range(len(cm))))
        for i, row in enumerate(cm):
            writer.writerow([i] + list(row))


def write_eval_report(report: EvalReport, logs, out_dir, figures: bool = True) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(report.to_json())
    for i, cm in enumerate(report.confusions):
        _write_confusion_csv(out_dir / f"confusion_fold{i}.csv", cm)
    for i, log in enumerate(logs):
        (out_dir / f"trainlog_fold{i}.jsonl").write_text(log.to_jsonl())
    if figures:
        _render_eval_figures(report, out_dir)
    return report_path


def _render_eval_figures(report: EvalReport, out_dir: Path) -> None:
    folds = [r["fold"] for r in report.fold_results]
    wa = [r["wa"] for r in report.fold_results]
    wf1 = [r["wf1"] for r in report.fold_results]
    fig, ax = plt.subplots(figsize=(8, 4))
    x = np.arange(len(folds))
    ax.bar(x - 0.2, wa, width=0.4, label="WA")
    ax.bar(x + 0.2, wf1, width=0.4, label="WF1")
    ax.axhline(report.mean.get("wa", np.nan), ls="--", lw=1, color="C0")
    ax.axhline(report.mean.get("wf1", np.nan), ls="--", lw=1, color="C1")
    ax.set_xticks(x, [str(f) for f in folds])
    ax.set_xlabel("fold")
    ax.set_ylabel("score")
    ax.set_ylim(0, 1)
    ax.legend()
    ax.set_title(f"per-fold metrics ({report.mode})")
    fig.tight_layout()
    fig.savefig(out_dir / "fold_metrics.png", dpi=120)
    plt.close(fig)

    total = np.sum(np.array(report.confusions), axis=0)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(total, cmap="Blues")
    for i in range(total.shape[0]):
        for j in range(total.shape[1]):
            ax.text(j, i, str(total[i, j]), ha="center", va="center", fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("truth")
    ax.set_title("confusion (all folds)")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(out_dir / "confusion_total.png", dpi=120)
    plt.close(fig)


def write_stats_report(stats: StatsReport, out_dir, figures: bool = True) -> Path:
    import json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats_path = out_dir / "stats.json"
    stats_path.write_text(json.dumps(stats.to_dict(), sort_keys=True, indent=2) + "\n")
    for name, counts in [("emotion_counts", stats.emotion_counts),
                         ("gender_counts", stats.gender_counts),
                         ("speaker_counts", stats.speaker_counts)]:
        with open(out_dir / f"{name}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "count"])
            for k, v in counts.items():
                writer.writerow([k, v])
    if figures:
        _render_stats_figures(stats, out_dir)
    return stats_path


def _render_stats_figures(stats: StatsReport, out_dir: Path) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(14, 4.5))
    for ax, (title, counts) in zip(axes, [("emotions", stats.emotion_counts),
                                          ("gender", stats.gender_counts),
                                          ("speakers", stats.speaker_counts)]):
        labels = [k for k, v in counts.items() if v > 0]
        values = [counts[k] for k in labels]
        if values:
            ax.pie(values, labels=labels, autopct="%1.0f%%", textprops={"fontsize": 8})
        ax.set_title(title)
    fig.suptitle(f"{stats.n_clips} clips, {stats.total_duration_s / 3600.0:.2f} h total, "
                 f"mean {stats.mean_duration_s:.2f} s")
    fig.tight_layout()
    fig.savefig(out_dir / "corpus_stats.png", dpi=120)
    plt.close(fig)
