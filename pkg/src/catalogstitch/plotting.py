"""Static matplotlib figures for batch reports."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .pipeline import WRAPPER_STAGES, RunResult  # noqa: E402

# no software/date stamps so repeated runs write identical files
_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_ar_error(results: Sequence[RunResult], path) -> Path:
    rows = [(r.example_id, r.metrics.ar_error_pct) for r in results if r.ok and r.metrics.ar_error_pct is not None]
    fig, ax = plt.subplots(figsize=(8, 3))
    if rows:
        ids, vals = zip(*rows)
        ax.bar(range(len(vals)), vals, color="#4c72b0")
        ax.set_xticks(range(len(ids)))
        ax.set_xticklabels(ids, rotation=90, fontsize=6)
    ax.set_ylabel("AR error (%)")
    ax.set_title("Aspect-ratio error per example")
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_psnr(results: Sequence[RunResult], path) -> Path:
    rows = [(r.example_id, r.metrics.occluder_psnr_db) for r in results if r.ok and r.metrics.occluder_psnr_db is not None]
    fig, ax = plt.subplots(figsize=(8, 3))
    if rows:
        ids, vals = zip(*rows)
        ax.bar(range(len(vals)), vals, color="#55a868")
        ax.set_xticks(range(len(ids)))
        ax.set_xticklabels(ids, rotation=90, fontsize=6)
    ax.set_ylabel("PSNR (dB)")
    ax.set_title("Occluder PSNR per example")
    fig.tight_layout()
    return _save(fig, Path(path))


def mean_stage_timings(results: Sequence[RunResult]) -> Dict[str, float]:
    sums: Dict[str, List[float]] = {}
    for r in results:
        if not r.ok:
            continue
        for stage, ms in r.timings_ms.items():
            sums.setdefault(stage, []).append(ms)
    return {stage: sum(v) / len(v) for stage, v in sums.items()}


def plot_stage_timings(results: Sequence[RunResult], path) -> Path:
    means = mean_stage_timings(results)
    fig, ax = plt.subplots(figsize=(6, 3))
    if means:
        stages = list(means)
        colors = ["#c44e52" if s in WRAPPER_STAGES else "#8c8c8c" for s in stages]
        ax.barh(stages, [means[s] for s in stages], color=colors)
        ax.invert_yaxis()
    else:
        ax.text(0.5, 0.5, "timings not recorded", ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("mean ms per example (red: wrapper stages)")
    fig.tight_layout()
    return _save(fig, Path(path))


def write_figures(results: Sequence[RunResult], out_dir) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return {
        "ar_error": plot_ar_error(results, out_dir / "ar_error.png"),
        "psnr": plot_psnr(results, out_dir / "occluder_psnr.png"),
        "timings": plot_stage_timings(results, out_dir / "stage_timings.png"),
    }
