"""results.json, metrics.csv and the static HTML report."""

from __future__ import annotations

import csv
import html
import json
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .pipeline import WRAPPER_STAGES, RunResult, aggregate

RESULTS_NAME = "results.json"
CSV_NAME = "metrics.csv"
FIGURE_DIR = "figures"
THUMB_ROLES = (
    ("background", "background"),
    ("product", "product"),
    ("mask_overlay", "mask"),
    ("composited", "before"),
    ("final", "after"),
)
CSV_COLUMNS = (
    "example_id", "category", "ok", "ar_error_pct", "occluder_psnr_db",
    "adapted", "clipped", "n_occluders", "wrapper_ms", "error",
)


def _rebase(results: Sequence[RunResult], artifact_root: Optional[Path], dest_dir: Path) -> List[RunResult]:
    if artifact_root is None or Path(artifact_root).resolve() == dest_dir.resolve():
        return list(results)
    rebased = []
    for r in results:
        arts = {
            role: Path(os.path.relpath(Path(artifact_root) / rel, dest_dir)).as_posix()
            for role, rel in r.artifacts.items()
        }
        rebased.append(RunResult.from_dict({**r.to_dict(), "artifacts": arts}))
    return rebased


def write_results(results: Sequence[RunResult], path) -> Path:
    path = Path(path)
    doc = [r.to_dict() for r in results]
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def read_results(path) -> List[RunResult]:
    """Load a results.json file, or the one inside a run directory."""
    path = Path(path)
    if path.is_dir():
        path = path / RESULTS_NAME
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ValueError(f"{path}: expected a JSON array of results")
    return [RunResult.from_dict(d) for d in raw]


def write_metrics_csv(results: Sequence[RunResult], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in results:
            wrapper = r.wrapper_ms
            w.writerow([
                r.example_id,
                r.category,
                int(r.ok),
                "" if r.metrics.ar_error_pct is None else repr(r.metrics.ar_error_pct),
                "" if r.metrics.occluder_psnr_db is None else repr(r.metrics.occluder_psnr_db),
                int(bool(r.flags.get("adapted", False))),
                int(bool(r.flags.get("clipped", False))),
                r.flags.get("n_occluders", 0),
                "" if wrapper is None else f"{wrapper:.3f}",
                r.error or "",
            ])
    return path


def _fmt(value, spec: str = ".2f") -> str:
    return "n/a" if value is None else format(value, spec)


def aggregate_row(method: str, results: Sequence[RunResult]) -> Dict[str, str]:
    agg = aggregate(results)
    return {
        "Method": method,
        "AR Error (%)": _fmt(agg["ar_error_pct_mean"]),
        "Occluder PSNR (dB)": _fmt(agg["occluder_psnr_db_mean"]),
        "FID": "n/a",
        "CLIP-score": "n/a",
        "DINO-score": "n/a",
        "Examples (ok/total)": f"{agg['n_ok']}/{agg['n_examples']}",
    }


_CSS = """
body { font-family: sans-serif; margin: 1.5em; color: #222; }
table { border-collapse: collapse; margin-bottom: 1.5em; }
th, td { border: 1px solid #ccc; padding: 4px 8px; font-size: 13px; vertical-align: top; }
th { background: #f0f0f0; }
td.img img { width: 128px; height: auto; display: block; }
tr.failed td { background: #fde8e8; }
.small { color: #666; font-size: 11px; }
"""


def _table(header: Sequence[str], rows: Sequence[Sequence[str]], raw_cols=()) -> str:
    out = ["<table>", "<tr>" + "".join(f"<th>{html.escape(h)}</th>" for h in header) + "</tr>"]
    for row in rows:
        cells = []
        for i, cell in enumerate(row):
            cells.append(f"<td>{cell}</td>" if i in raw_cols else f"<td>{html.escape(str(cell))}</td>")
        out.append("<tr>" + "".join(cells) + "</tr>")
    out.append("</table>")
    return "\n".join(out)


def _example_row(r: RunResult) -> str:
    cls = f' id="{html.escape(r.example_id, quote=True)}"' + ("" if r.ok else ' class="failed"')
    cells = [f"<td><b>{html.escape(r.example_id)}</b><br><span class=\"small\">{html.escape(r.category)}</span></td>"]
    for role, _ in THUMB_ROLES:
        rel = r.artifacts.get(role)
        if rel:
            src = html.escape(rel, quote=True)
            cells.append(f'<td class="img"><a href="{src}"><img src="{src}" alt="{role}"></a></td>')
        else:
            cells.append("<td>n/a</td>")
    m = r.metrics
    info = [
        f"AR error: {_fmt(m.ar_error_pct, '.3f')}%",
        f"occluder PSNR: {_fmt(m.occluder_psnr_db)} dB",
        f"adapted: {r.flags.get('adapted', 'n/a')}, clipped: {r.flags.get('clipped', 'n/a')}",
        f"occluders: {r.flags.get('n_occluders', 'n/a')}",
        f"wrapper: {_fmt(r.wrapper_ms, '.3f')} ms",
    ]
    if m.notes:
        info.append("notes: " + "; ".join(m.notes))
    if r.error:
        info.append("error: " + r.error)
    cells.append("<td>" + "<br>".join(html.escape(s) for s in info) + "</td>")
    return f"<tr{cls}>" + "".join(cells) + "</tr>"


def _stage_table(results: Sequence[RunResult]) -> str:
    from .plotting import mean_stage_timings

    means = mean_stage_timings(results)
    if not means:
        return "<p>Stage timings were not recorded for this run.</p>"
    rows = [(s, "wrapper" if s in WRAPPER_STAGES else "", f"{ms:.3f}") for s, ms in means.items()]
    wrapper_total = sum(means.get(s, 0.0) for s in WRAPPER_STAGES)
    rows.append(("wrapper total", "", f"{wrapper_total:.3f}"))
    return _table(("Stage", "", "Mean ms"), rows)


def emit_report(
    results: Sequence[RunResult],
    out,
    method: Optional[str] = None,
    artifact_root=None,
    comparisons: Sequence[Tuple[str, Sequence[RunResult]]] = (),
    figures: bool = True,
    title: str = "Compositing benchmark report",
) -> Path:
    """Write ``out`` (HTML) plus results.json, metrics.csv and figures beside it.

    Artifact paths in ``results`` are relative to ``artifact_root`` (the
    HTML's folder when unset); they are rewritten relative to that folder.
    ``comparisons`` adds extra (label, results) rows to the aggregate table.
    """
    if not results:
        raise ValueError("emit_report needs at least one result")
    out = Path(out)
    dest = out.parent
    dest.mkdir(parents=True, exist_ok=True)
    results = _rebase(results, Path(artifact_root) if artifact_root is not None else None, dest)
    write_results(results, dest / RESULTS_NAME)
    write_metrics_csv(results, dest / CSV_NAME)

    method = method or "run"
    agg_rows = [aggregate_row(method, results)] + [aggregate_row(lbl, res) for lbl, res in comparisons]
    header = list(agg_rows[0])

    parts = [
        "<!DOCTYPE html>",
        '<html lang="en"><head><meta charset="utf-8">',
        f"<title>{html.escape(title)}</title>",
        f"<style>{_CSS}</style></head><body>",
        f"<h1>{html.escape(title)}</h1>",
        "<h2>Aggregate</h2>",
        _table(header, [[row[h] for h in header] for row in agg_rows]),
        '<p class="small">FID, CLIP-score and DINO-score need pretrained networks and are not computed here.</p>',
        "<h2>Stage timings</h2>",
        _stage_table(results),
    ]
    if figures:
        from .plotting import write_figures

        figs = write_figures(results, dest / FIGURE_DIR)
        parts.append("<h2>Figures</h2>")
        for path in figs.values():
            rel = html.escape(Path(os.path.relpath(path, dest)).as_posix(), quote=True)
            parts.append(f'<p><img src="{rel}" alt="{rel}"></p>')
    parts.append("<h2>Examples</h2>")
    parts.append(
        "<table><tr><th>Example</th>"
        + "".join(f"<th>{label}</th>" for _, label in THUMB_ROLES)
        + "<th>Metrics</th></tr>"
    )
    parts.extend(_example_row(r) for r in results)
    parts.append("</table>")
    parts.append(f'<p class="small">Per-example values: <a href="{RESULTS_NAME}">{RESULTS_NAME}</a>, '
                 f'<a href="{CSV_NAME}">{CSV_NAME}</a></p>')
    parts.append("</body></html>")
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out
