"""Command-line entry point: fixtures, run, report, mock-backend."""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path

from .backends import MOCK_VARIANTS, BackendSpec, serve_manifest
from .dataset import load_dataset
from .errors import CatalogStitchError
from .fixtures import generate_fixtures
from .pipeline import PipelineConfig, aggregate, run_batch
from .report import emit_report, read_results

log = logging.getLogger("catalogstitch")

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2

_MASK_MODES = {"freeform": "freeform", "bbox": "bbox", "dim-aware": "dim_aware", "dim_aware": "dim_aware"}
_COMPOSITORS = {"stretch-fill": "stretch_fill_compositor", "fit-inside": "fit_inside_compositor"}


def _fraction_arg(text: str) -> float:
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catalogstitch", description="Product-swap compositing wrappers and benchmark harness.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    fx = sub.add_parser("fixtures", help="generate a synthetic benchmark dataset")
    fx.add_argument("--out", required=True, type=Path)
    fx.add_argument("--seed", type=int, default=7)
    fx.add_argument("--dimension", type=int, default=35, help="number of dimension-mismatch scenes")
    fx.add_argument("--occlusion", type=int, default=23, help="number of occlusion scenes")
    fx.add_argument("--size", type=_positive_int, default=512, help="square scene size in pixels")

    run = sub.add_parser("run", help="run the pipeline over a dataset and write a report")
    run.add_argument("--dataset", required=True, type=Path)
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--mask-mode", choices=["freeform", "bbox", "dim-aware"], default="dim-aware")
    run.add_argument("--restore", action=argparse.BooleanOptionalAction, default=True,
                     help="cache and restore occluders (default on)")
    run.add_argument("--tau", type=_fraction_arg, default=0.06)
    run.add_argument("--tau-occ", type=_fraction_arg, default=0.01)
    run.add_argument("--backend-segment", metavar="CMD", help="external segmenter command")
    run.add_argument("--backend-inpaint", metavar="CMD", help="external inpainter command")
    run.add_argument("--backend-composite", metavar="CMD", help="external compositor command")
    run.add_argument("--mock", action="store_true",
                     help="use built-in mocks for every stage (the default when no command is given)")
    run.add_argument("--mock-compositor", choices=sorted(_COMPOSITORS), default="stretch-fill")
    run.add_argument("--jobs", type=_positive_int, default=1)
    run.add_argument("--detect-against", choices=["adapted", "original"], default="adapted")
    run.add_argument("--no-timings", action="store_true", help="omit stage timings so reruns are byte-identical")
    run.add_argument("--no-figures", action="store_true")
    run.add_argument("--work-root", type=Path, help="parent folder for external backend working dirs")

    rep = sub.add_parser("report", help="re-render a report from a run directory")
    rep.add_argument("--results", required=True, type=Path, help="run directory or results.json")
    rep.add_argument("--out", required=True, type=Path)
    rep.add_argument("--compare", action="append", default=[], type=Path,
                     help="extra run directory to add to the aggregate table (repeatable)")
    rep.add_argument("--no-figures", action="store_true")

    mb = sub.add_parser("mock-backend", help="answer one backend manifest with a built-in mock")
    mb.add_argument("--variant", required=True, choices=sorted(MOCK_VARIANTS))
    mb.add_argument("manifest", type=Path)
    return parser


def _backends_from_args(args) -> dict:
    commands = {
        "segment": args.backend_segment,
        "inpaint": args.backend_inpaint,
        "composite": args.backend_composite,
    }
    if args.mock and any(commands.values()):
        raise ValueError("--mock cannot be combined with --backend-* commands")
    work_root = str(args.work_root) if args.work_root else None
    backends = {"composite": BackendSpec.mock(_COMPOSITORS[args.mock_compositor])}
    for stage, cmd in commands.items():
        if cmd:
            backends[stage] = BackendSpec.external(shlex.split(cmd), work_root=work_root)
    return backends


def cmd_fixtures(args) -> int:
    records = generate_fixtures(args.out, seed=args.seed, n_dimension=args.dimension, n_occlusion=args.occlusion, size=args.size)
    print(f"wrote {len(records)} examples to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = PipelineConfig(
        tau=args.tau,
        tau_occ=args.tau_occ,
        mask_mode=_MASK_MODES[args.mask_mode],
        restore_occluders=args.restore,
        backends=_backends_from_args(args),
        output_dir=args.out,
        parallelism=args.jobs,
        detect_against=args.detect_against,
        record_timings=not args.no_timings,
    )
    cfg.validate()
    records = load_dataset(args.dataset)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    results = run_batch(records, cfg)
    if results:
        emit_report(results, args.out / "report.html", method=cfg.label(), figures=not args.no_figures)
    agg = aggregate(results)
    print(f"{agg['n_ok']}/{agg['n_examples']} examples ok; "
          f"mean AR error {agg['ar_error_pct_mean']}; mean occluder PSNR {agg['occluder_psnr_db_mean']}")
    for r in results:
        if not r.ok:
            print(f"FAILED {r.example_id}: {r.error}", file=sys.stderr)
    return EXIT_OK if agg["n_failed"] == 0 else EXIT_PARTIAL


def _label_for(run_dir: Path) -> str:
    cfg_path = (run_dir if run_dir.is_dir() else run_dir.parent) / "config.json"
    if cfg_path.is_file():
        cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
        parts = [cfg.get("backends", {}).get("composite", "?"), cfg.get("mask_mode", "?")]
        if cfg.get("restore_occluders"):
            parts.append("restore")
        return " + ".join(parts)
    return run_dir.name


def cmd_report(args) -> int:
    results = read_results(args.results)
    root = args.results if args.results.is_dir() else args.results.parent
    comparisons = [(_label_for(d), read_results(d)) for d in args.compare]
    out = emit_report(results, args.out, method=_label_for(args.results), artifact_root=root,
                      comparisons=comparisons, figures=not args.no_figures)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_mock_backend(args) -> int:
    serve_manifest(args.manifest, args.variant)
    return EXIT_OK


_COMMANDS = {
    "fixtures": cmd_fixtures,
    "run": cmd_run,
    "report": cmd_report,
    "mock-backend": cmd_mock_backend,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (CatalogStitchError, OSError, ValueError) as exc:
        print(f"catalogstitch: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
